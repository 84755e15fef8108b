use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{elicit, Adjustment, posterior, BayesError, PosteriorSummary, PriorSource, PriorSpec};
use crate::stability::SelectionMatrix;

/// One variable's prior as supplied by a user: either the two elicitation
/// answers or explicit shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorEntry {
    Elicited { name: String, zeta: f64, xi: f64 },
    Shapes { name: String, alpha: f64, beta: f64 },
}

impl PriorEntry {
    pub fn name(&self) -> &str {
        match self {
            PriorEntry::Elicited { name, .. } | PriorEntry::Shapes { name, .. } => name,
        }
    }
}

/// Per-variable priors in `names` order; variables without an entry get
/// Beta(1, 1). Elicitation uses `b` as the iteration count.
pub fn resolve_priors(names: &[String], entries: &[PriorEntry], b: u64) -> Result<Vec<PriorSpec>, BayesError> {
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(j, n)| (n.as_str(), j)).collect();
    let mut priors = vec![PriorSpec::FLAT; names.len()];
    let mut seen = vec![false; names.len()];
    for entry in entries {
        let &j = index
            .get(entry.name())
            .ok_or_else(|| BayesError::UnknownVariable(entry.name().to_string()))?;
        if std::mem::replace(&mut seen[j], true) {
            return Err(BayesError::DuplicatePrior(entry.name().to_string()));
        }
        priors[j] = match *entry {
            PriorEntry::Elicited { zeta, xi, ref name } => {
                let e = elicit(zeta, xi, b)?;
                match e.adjustment {
                    Some(Adjustment::AlphaClamped { raw, clamped }) => {
                        log::warn!("{name}: elicited alpha {raw} clamped to {clamped} (gamma = {})", e.gamma)
                    }
                    Some(Adjustment::FlatFallback { gamma }) => {
                        log::warn!("{name}: zeta = {zeta} gives {gamma} pseudo-observations; using a flat prior")
                    }
                    None => {}
                }
                e.prior
            }
            PriorEntry::Shapes { alpha, beta, .. } => PriorSpec::direct(alpha, beta)?,
        };
    }
    Ok(priors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Zero-based column in the selection matrix.
    pub index: usize,
    pub name: String,
    pub n_j: u64,
    pub b: u64,
    pub prior: PriorSpec,
    pub posterior: PosteriorSummary,
    /// `n_j / B >= pi_thr`, the frequency-based decision, for comparison.
    pub frequentist_selected: bool,
}

/// Posterior summaries for every variable of `m`, sorted by descending
/// posterior mean (ties keep column order).
pub fn decision_report(
    m: &SelectionMatrix,
    priors: &[PriorSpec],
    pi_thr: f64,
    level: f64,
) -> Result<Vec<ReportRow>, BayesError> {
    decision_report_from_counts(&m.names, &m.counts(), m.b() as u64, priors, pi_thr, level)
}

/// [`decision_report`] on bare selection counts.
pub fn decision_report_from_counts(
    names: &[String],
    counts: &[u64],
    b: u64,
    priors: &[PriorSpec],
    pi_thr: f64,
    level: f64,
) -> Result<Vec<ReportRow>, BayesError> {
    if priors.len() != counts.len() || names.len() != counts.len() {
        return Err(BayesError::PriorCount {
            priors: priors.len(),
            variables: counts.len(),
        });
    }
    if !(pi_thr > 0.0 && pi_thr < 1.0) {
        return Err(BayesError::Threshold(pi_thr));
    }
    for (name, prior) in names.iter().zip(priors) {
        if matches!(prior.source, PriorSource::Elicited { .. }) && prior.gamma() > b as f64 {
            return Err(BayesError::PriorOutweighsData {
                name: name.clone(),
                gamma: prior.gamma(),
                b,
            });
        }
    }
    let mut rows = (0..counts.len())
        .into_par_iter()
        .map(|index| {
            let (n_j, prior) = (counts[index], &priors[index]);
            Ok(ReportRow {
                index,
                name: names[index].clone(),
                n_j,
                b,
                prior: *prior,
                posterior: posterior(prior, n_j, b, level, Some(pi_thr))?,
                frequentist_selected: b > 0 && n_j as f64 / b as f64 >= pi_thr,
            })
        })
        .collect::<Result<Vec<_>, BayesError>>()?;
    rows.sort_by(|a, b| b.posterior.mean.total_cmp(&a.posterior.mean));
    Ok(rows)
}

pub const REPORT_HEADER: &str = "name,n_j,alpha,beta,mean,variance,ci_low,ci_high,selected";

/// CSV with the prior shapes in the `alpha`/`beta` columns.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let p = &r.posterior;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.name, r.n_j, r.prior.alpha, r.prior.beta, p.mean, p.variance, p.ci_low, p.ci_high, p.selected
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (1..=p).map(|j| format!("x{j}")).collect()
    }

    fn matrix_with_counts(counts: &[u64], b: usize) -> SelectionMatrix {
        let rows = (0..b)
            .map(|i| counts.iter().map(|&c| ((i as u64) < c) as u8).collect())
            .collect();
        SelectionMatrix::from_rows(rows, names(counts.len()), 0.1, 0.2, 0).unwrap()
    }

    #[test]
    fn decaying_scenario_decisions() {
        let m = matrix_with_counts(&[54, 56, 53, 43], 100);
        let prior = elicit(0.5, 0.7, 100).unwrap().prior;
        let rows = decision_report(&m, &[prior; 4], 0.6, 0.95).unwrap();
        let order: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(order, ["x2", "x1", "x3", "x4"]);
        let selected: Vec<&str> = rows.iter().filter(|r| r.posterior.selected).map(|r| r.name.as_str()).collect();
        assert_eq!(selected, ["x2", "x1", "x3"]);
        assert!(rows.iter().all(|r| !r.frequentist_selected));
    }

    #[test]
    fn flat_priors_shift_the_cutoff_by_one() {
        // mean (1 + n) / 102 >= 0.6  <=>  n >= 61, whereas n / 100 >= 0.6  <=>  n >= 60
        let counts: Vec<u64> = (55..=65).collect();
        let m = matrix_with_counts(&counts, 100);
        let rows = decision_report(&m, &vec![PriorSpec::FLAT; counts.len()], 0.6, 0.95).unwrap();
        for r in &rows {
            assert_eq!(r.posterior.selected, r.n_j >= 61, "n = {}", r.n_j);
            assert_eq!(r.frequentist_selected, r.n_j >= 60, "n = {}", r.n_j);
            assert_eq!(r.posterior.mean, (1.0 + r.n_j as f64) / 102.0);
        }
    }

    #[test]
    fn empty_matrix_reports_prior_means() {
        let m = SelectionMatrix::from_rows(vec![], names(3), 0.1, 1.0, 0).unwrap();
        let priors = [PriorSpec::FLAT, PriorSpec::direct(3.0, 1.0).unwrap(), PriorSpec::direct(1.0, 4.0).unwrap()];
        let rows = decision_report(&m, &priors, 0.6, 0.95).unwrap();
        for r in rows {
            assert_eq!(r.posterior.mean, priors[r.index].mean());
        }
    }

    #[test]
    fn mismatched_or_overweight_priors() {
        let m = matrix_with_counts(&[1, 2], 10);
        assert!(matches!(
            decision_report(&m, &[PriorSpec::FLAT], 0.6, 0.95),
            Err(BayesError::PriorCount { priors: 1, variables: 2 })
        ));
        let heavy = elicit(0.5, 0.5, 100).unwrap().prior;
        assert!(matches!(
            decision_report(&m, &[heavy, PriorSpec::FLAT], 0.6, 0.95),
            Err(BayesError::PriorOutweighsData { .. })
        ));
    }

    #[test]
    fn resolving_entries() {
        let names = names(4);
        let entries = vec![
            PriorEntry::Elicited { name: "x2".into(), zeta: 0.5, xi: 0.7 },
            PriorEntry::Shapes { name: "x4".into(), alpha: 2.0, beta: 5.0 },
        ];
        let priors = resolve_priors(&names, &entries, 100).unwrap();
        assert_eq!(priors[0], PriorSpec::FLAT);
        assert_eq!((priors[1].alpha, priors[1].beta), (70.0, 30.0));
        assert_eq!(priors[2], PriorSpec::FLAT);
        assert_eq!((priors[3].alpha, priors[3].beta), (2.0, 5.0));

        let unknown = vec![PriorEntry::Shapes { name: "zz".into(), alpha: 2.0, beta: 2.0 }];
        assert!(matches!(resolve_priors(&names, &unknown, 100), Err(BayesError::UnknownVariable(_))));
        let dup = vec![entries[0].clone(), entries[0].clone()];
        assert!(matches!(resolve_priors(&names, &dup, 100), Err(BayesError::DuplicatePrior(_))));
        let capped = vec![PriorEntry::Elicited { name: "x1".into(), zeta: 0.6, xi: 0.5 }];
        assert!(matches!(resolve_priors(&names, &capped, 100), Err(BayesError::ZetaOutOfRange(_))));
    }

    #[test]
    fn entries_deserialize_from_either_shape() {
        let e: Vec<PriorEntry> =
            serde_json::from_str(r#"[{"name":"a","zeta":0.5,"xi":0.7},{"name":"b","alpha":2,"beta":3}]"#).unwrap();
        assert!(matches!(e[0], PriorEntry::Elicited { .. }));
        assert!(matches!(e[1], PriorEntry::Shapes { .. }));
        assert!(serde_json::from_str::<PriorEntry>(r#"{"name":"c","zeta":0.5}"#).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = matrix_with_counts(&[53], 100);
        let prior = elicit(0.5, 0.7, 100).unwrap().prior;
        let rows = decision_report(&m, &[prior], 0.6, 0.95).unwrap();
        let csv = report_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(REPORT_HEADER));
        let cells: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&cells[..5], &["x1", "53", "70", "30", "0.615"]);
        assert_eq!(cells[8], "true");
    }
}
