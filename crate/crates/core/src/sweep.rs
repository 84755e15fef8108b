//! Correct/incorrect selection counts over a grid of elicitation answers.
//!
//! For every `(zeta, xi)` cell the same elicited prior is given to all
//! relevant variables (true-positive panel) or to all irrelevant variables
//! (false-positive panel), and the variables whose posterior mean reaches
//! `pi_thr` are counted. Selection matrices do not depend on priors, so each
//! replication runs stability selection once and reuses its counts for
//! every cell.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::{elicit, BayesError, BetaDist};
use crate::data::{gen_synthetic, DataError, SyntheticConfig};
use crate::rng::derive_seed;
use crate::solver::{Selector, SolverError};
use crate::stability::{run_stability, StabilityConfig, StabilityError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep config: {0}")]
    Config(String),
    #[error("the sweep needs a dataset with a known signal set")]
    MissingTruth,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Count per replication, then average the counts.
    Replicated,
    /// Average the selection counts over replications (rounded to whole
    /// selections), then count once.
    AverageFrequency,
    /// Counts supplied by the caller; no simulation.
    Fixed,
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepMode::Replicated => "replicated",
            SweepMode::AverageFrequency => "average-frequency",
            SweepMode::Fixed => "fixed",
        })
    }
}

/// `0, 0.1, ..., 0.5`
pub fn default_zeta_grid() -> Vec<f64> {
    (0..=5).map(|k| k as f64 / 10.0).collect()
}

/// `0, 0.1, ..., 1.0`
pub fn default_xi_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub zeta_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub scenario: SyntheticConfig,
    pub replications: usize,
    pub pi_thr: f64,
    /// Subsamples per replication.
    pub b: usize,
    pub stability_seed: u64,
    pub selector: Selector,
    pub mode: SweepMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub zeta_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    /// `[zeta][xi]` true positives among relevant variables.
    pub relevant: Vec<Vec<f64>>,
    /// `[zeta][xi]` false positives among irrelevant variables.
    pub irrelevant: Vec<Vec<f64>>,
    pub n_relevant: usize,
    pub n_irrelevant: usize,
    pub mode: SweepMode,
    pub replications: usize,
}

impl SweepGrid {
    pub fn relevant_csv(&self) -> String {
        panel_csv(&self.zeta_grid, &self.xi_grid, &self.relevant)
    }

    pub fn irrelevant_csv(&self) -> String {
        panel_csv(&self.zeta_grid, &self.xi_grid, &self.irrelevant)
    }

    fn cell_index(grid: &[f64], v: f64) -> Option<usize> {
        grid.iter().position(|g| (g - v).abs() < 1e-12)
    }

    /// `(true positives, false positives)` at a grid cell.
    pub fn cell(&self, zeta: f64, xi: f64) -> Option<(f64, f64)> {
        let z = Self::cell_index(&self.zeta_grid, zeta)?;
        let x = Self::cell_index(&self.xi_grid, xi)?;
        Some((self.relevant[z][x], self.irrelevant[z][x]))
    }
}

/// Long-format panel: `zeta,xi,value`, zeta-major.
pub fn panel_csv(zeta_grid: &[f64], xi_grid: &[f64], values: &[Vec<f64>]) -> String {
    let mut out = String::from("zeta,xi,value\n");
    for (z, row) in zeta_grid.iter().zip(values) {
        for (x, v) in xi_grid.iter().zip(row) {
            let _ = writeln!(out, "{z},{x},{v}");
        }
    }
    out
}

fn validate_grids(zeta_grid: &[f64], xi_grid: &[f64], pi_thr: f64) -> Result<(), SweepError> {
    for (name, grid, hi) in [("zeta", zeta_grid, 0.5), ("xi", xi_grid, 1.0)] {
        if grid.is_empty() {
            return Err(SweepError::Config(format!("{name} grid is empty")));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SweepError::Config(format!("{name} grid must be strictly ascending")));
        }
        if grid.iter().any(|v| !(0.0..=hi).contains(v)) {
            return Err(SweepError::Config(format!("{name} grid values must lie in [0, {hi}]")));
        }
    }
    if !(pi_thr > 0.0 && pi_thr < 1.0) {
        return Err(SweepError::Config(format!("pi_thr must lie in (0, 1), got {pi_thr}")));
    }
    Ok(())
}

type Panels = (Vec<Vec<u32>>, Vec<Vec<u32>>);

/// Integer cell counts for one set of selection counts.
pub fn count_cells(
    counts: &[u64],
    b: u64,
    truth: &BTreeSet<usize>,
    zeta_grid: &[f64],
    xi_grid: &[f64],
    pi_thr: f64,
) -> Result<Panels, SweepError> {
    let mut relevant = vec![vec![0u32; xi_grid.len()]; zeta_grid.len()];
    let mut irrelevant = relevant.clone();
    for (zi, &zeta) in zeta_grid.iter().enumerate() {
        for (xi_idx, &xi) in xi_grid.iter().enumerate() {
            let prior = BetaDist::from(elicit(zeta, xi, b)?.prior);
            for (j, &n) in counts.iter().enumerate() {
                if prior.update(n, b)?.mean() >= pi_thr {
                    if truth.contains(&j) {
                        relevant[zi][xi_idx] += 1;
                    } else {
                        irrelevant[zi][xi_idx] += 1;
                    }
                }
            }
        }
    }
    Ok((relevant, irrelevant))
}

/// Sweep over caller-supplied selection counts (no simulation).
pub fn sweep_fixed(
    counts: &[u64],
    b: u64,
    truth: &BTreeSet<usize>,
    zeta_grid: &[f64],
    xi_grid: &[f64],
    pi_thr: f64,
) -> Result<SweepGrid, SweepError> {
    validate_grids(zeta_grid, xi_grid, pi_thr)?;
    if let Some(&j) = truth.iter().find(|&&j| j >= counts.len()) {
        return Err(SweepError::Config(format!("signal index {} beyond {} variables", j + 1, counts.len())));
    }
    let (rel, irr) = count_cells(counts, b, truth, zeta_grid, xi_grid, pi_thr)?;
    Ok(SweepGrid {
        zeta_grid: zeta_grid.to_vec(),
        xi_grid: xi_grid.to_vec(),
        relevant: to_f64(&rel),
        irrelevant: to_f64(&irr),
        n_relevant: truth.len(),
        n_irrelevant: counts.len() - truth.len(),
        mode: SweepMode::Fixed,
        replications: 1,
    })
}

fn to_f64(panel: &[Vec<u32>]) -> Vec<Vec<f64>> {
    panel.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

/// Output of one simulated replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub data_seed: u64,
    pub lambda: f64,
    pub counts: Vec<u64>,
    pub truth: BTreeSet<usize>,
}

/// Generates `replications` datasets from `scenario`, picks lambda with
/// `selector` on each full dataset, and runs `b` stability subsamples.
/// Replication `r` uses data seed `derive_seed(scenario.seed, r)`, stability
/// seed `derive_seed(stability_seed, r)` and, for cross-validation, fold seed
/// `derive_seed(cv.seed, r)`.
pub fn replicate(
    scenario: &SyntheticConfig,
    replications: usize,
    b: usize,
    stability_seed: u64,
    selector: &Selector,
) -> Result<Vec<Replicate>, SweepError> {
    (0..replications)
        .into_par_iter()
        .map(|r| {
            let data_seed = derive_seed(scenario.seed, r as u64);
            let data = gen_synthetic(&SyntheticConfig { seed: data_seed, ..*scenario })?;
            let truth = data.truth.clone().ok_or(SweepError::MissingTruth)?;
            let selector = match *selector {
                Selector::Cv1se(opts) => Selector::Cv1se(crate::solver::CvOptions {
                    seed: derive_seed(opts.seed, r as u64),
                    ..opts
                }),
                fixed => fixed,
            };
            let net = selector.resolve(&data)?;
            let cfg = StabilityConfig {
                b,
                net,
                seed: derive_seed(stability_seed, r as u64),
                pi_thr: 0.5,
            };
            let m = run_stability(&data, &cfg)?;
            Ok(Replicate {
                data_seed,
                lambda: net.lambda,
                counts: m.counts(),
                truth,
            })
        })
        .collect()
}

/// Average selection frequency of every variable over replicates.
pub fn mean_frequencies(reps: &[Replicate], b: usize) -> Vec<f64> {
    let p = reps.first().map_or(0, |r| r.counts.len());
    let denom = (reps.len() * b) as f64;
    (0..p)
        .map(|j| reps.iter().map(|r| r.counts[j] as f64).sum::<f64>() / denom)
        .collect()
}

/// Runs the simulated sweep described by `cfg`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepGrid, SweepError> {
    validate_grids(&cfg.zeta_grid, &cfg.xi_grid, cfg.pi_thr)?;
    if cfg.replications == 0 {
        return Err(SweepError::Config("replications must be at least 1".into()));
    }
    if cfg.b < 4 {
        return Err(SweepError::Config(format!("B must be at least 4, got {}", cfg.b)));
    }
    let reps = replicate(&cfg.scenario, cfg.replications, cfg.b, cfg.stability_seed, &cfg.selector)?;
    sweep_replicates(&reps, cfg)
}

/// Aggregates already simulated replicates according to `cfg.mode`.
pub fn sweep_replicates(reps: &[Replicate], cfg: &SweepConfig) -> Result<SweepGrid, SweepError> {
    let first = reps.first().ok_or_else(|| SweepError::Config("no replicates".into()))?;
    let truth = &first.truth;
    let p = first.counts.len();
    let b = cfg.b as u64;
    let (relevant, irrelevant) = match cfg.mode {
        SweepMode::Replicated => {
            let panels = reps
                .par_iter()
                .map(|r| count_cells(&r.counts, b, &r.truth, &cfg.zeta_grid, &cfg.xi_grid, cfg.pi_thr))
                .collect::<Result<Vec<_>, _>>()?;
            let k = reps.len() as f64;
            let average = |pick: fn(&Panels) -> &Vec<Vec<u32>>| -> Vec<Vec<f64>> {
                (0..cfg.zeta_grid.len())
                    .map(|z| {
                        (0..cfg.xi_grid.len())
                            .map(|x| panels.iter().map(|pp| pick(pp)[z][x] as f64).sum::<f64>() / k)
                            .collect()
                    })
                    .collect()
            };
            (average(|pp| &pp.0), average(|pp| &pp.1))
        }
        SweepMode::AverageFrequency => {
            let counts = average_counts(reps);
            let (rel, irr) = count_cells(&counts, b, truth, &cfg.zeta_grid, &cfg.xi_grid, cfg.pi_thr)?;
            (to_f64(&rel), to_f64(&irr))
        }
        SweepMode::Fixed => {
            return Err(SweepError::Config("fixed mode takes counts, not simulations".into()));
        }
    };
    Ok(SweepGrid {
        zeta_grid: cfg.zeta_grid.clone(),
        xi_grid: cfg.xi_grid.clone(),
        relevant,
        irrelevant,
        n_relevant: truth.len(),
        n_irrelevant: p - truth.len(),
        mode: cfg.mode,
        replications: reps.len(),
    })
}

/// Per-variable selection counts averaged over replicates, rounded to the
/// nearest whole selection.
pub fn average_counts(reps: &[Replicate]) -> Vec<u64> {
    let p = reps.first().map_or(0, |r| r.counts.len());
    (0..p)
        .map(|j| {
            let total: u64 = reps.iter().map(|r| r.counts[j]).sum();
            (total as f64 / reps.len() as f64).round() as u64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Scenario;
    use crate::solver::NetConfig;

    const PAPER_COUNTS: [u64; 6] = [53, 55, 60, 61, 62, 54];

    #[test]
    fn fixed_counts_recover_all_six() {
        let truth: BTreeSet<usize> = (0..6).collect();
        let grid = sweep_fixed(&PAPER_COUNTS, 100, &truth, &default_zeta_grid(), &default_xi_grid(), 0.6).unwrap();
        assert_eq!(grid.cell(0.5, 0.7), Some((6.0, 0.0)));
        // flat prior: (1 + n)/102 >= 0.6 needs n >= 61
        assert_eq!(grid.cell(0.0, 0.3).unwrap().0, 2.0);
        assert_eq!(grid.relevant.len(), 6);
        assert!(grid.relevant.iter().all(|r| r.len() == 11));
    }

    #[test]
    fn zero_zeta_row_is_constant() {
        let truth: BTreeSet<usize> = (0..3).collect();
        let counts = [40, 59, 61, 70, 20, 10];
        let grid = sweep_fixed(&counts, 100, &truth, &default_zeta_grid(), &default_xi_grid(), 0.6).unwrap();
        for panel in [&grid.relevant, &grid.irrelevant] {
            assert!(panel[0].iter().all(|&v| v == panel[0][0]));
        }
    }

    #[test]
    fn true_positives_grow_with_xi() {
        let truth: BTreeSet<usize> = (0..6).collect();
        let counts: Vec<u64> = vec![10, 30, 45, 52, 58, 66, 5, 3];
        let grid = sweep_fixed(&counts, 100, &truth, &default_zeta_grid(), &default_xi_grid(), 0.6).unwrap();
        for row in &grid.relevant {
            assert!(row.windows(2).all(|w| w[0] <= w[1]), "{row:?}");
        }
    }

    #[test]
    fn panel_csv_shape() {
        let truth: BTreeSet<usize> = (0..6).collect();
        let grid = sweep_fixed(&PAPER_COUNTS, 100, &truth, &default_zeta_grid(), &default_xi_grid(), 0.6).unwrap();
        let csv = grid.relevant_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "zeta,xi,value");
        assert_eq!(lines.len(), 1 + 6 * 11);
        assert!(lines.contains(&"0.5,0.7,6"));
    }

    #[test]
    fn grid_validation() {
        let truth = BTreeSet::new();
        assert!(sweep_fixed(&[1], 100, &truth, &[], &[0.1], 0.6).is_err());
        assert!(sweep_fixed(&[1], 100, &truth, &[0.3, 0.1], &[0.1], 0.6).is_err());
        assert!(sweep_fixed(&[1], 100, &truth, &[0.6], &[0.1], 0.6).is_err());
        assert!(sweep_fixed(&[1], 100, &truth, &[0.1], &[1.1], 0.6).is_err());
        assert!(sweep_fixed(&[1], 100, &BTreeSet::from([3]), &[0.1], &[0.1], 0.6).is_err());
    }

    fn tiny_config(mode: SweepMode) -> SweepConfig {
        SweepConfig {
            zeta_grid: vec![0.0, 0.25, 0.5],
            xi_grid: vec![0.0, 0.5, 1.0],
            scenario: SyntheticConfig { n: 40, p: 30, ..SyntheticConfig::new(Scenario::CorrelatedBlocks, 3) },
            replications: 3,
            pi_thr: 0.6,
            b: 20,
            stability_seed: 5,
            selector: Selector::Fixed(NetConfig::new(0.2, 1.0).unwrap()),
            mode,
        }
    }

    #[test]
    fn reusing_counts_matches_recomputing_per_cell() {
        let cfg = tiny_config(SweepMode::Replicated);
        let grid = run_sweep(&cfg).unwrap();
        // Recompute the matrix from scratch for every cell.
        for (z, &zeta) in cfg.zeta_grid.iter().enumerate() {
            for (x, &xi) in cfg.xi_grid.iter().enumerate() {
                let reps = replicate(&cfg.scenario, cfg.replications, cfg.b, cfg.stability_seed, &cfg.selector).unwrap();
                let mut tp = 0.0;
                let mut fp = 0.0;
                for r in &reps {
                    let (rel, irr) = count_cells(&r.counts, cfg.b as u64, &r.truth, &[zeta], &[xi], cfg.pi_thr).unwrap();
                    tp += rel[0][0] as f64;
                    fp += irr[0][0] as f64;
                }
                assert_eq!(grid.relevant[z][x], tp / 3.0);
                assert_eq!(grid.irrelevant[z][x], fp / 3.0);
            }
        }
    }

    #[test]
    fn simulated_sweep_invariants() {
        for mode in [SweepMode::Replicated, SweepMode::AverageFrequency] {
            let grid = run_sweep(&tiny_config(mode)).unwrap();
            assert!(grid.relevant[0].iter().all(|&v| v == grid.relevant[0][0]));
            assert!(grid.irrelevant[0].iter().all(|&v| v == grid.irrelevant[0][0]));
            for row in &grid.relevant {
                assert!(row.windows(2).all(|w| w[0] <= w[1]));
                assert!(row.iter().all(|&v| (0.0..=6.0).contains(&v)));
            }
            assert!(grid.irrelevant.iter().flatten().all(|&v| (0.0..=24.0).contains(&v)));
            assert_eq!(grid, run_sweep(&tiny_config(mode)).unwrap());
        }
    }
}
