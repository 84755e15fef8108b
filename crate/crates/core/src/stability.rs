//! Stability selection at a single, fixed regularization: B half-size
//! subsample fits recorded as a binary selection matrix.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Standardizer};
use crate::rng;
use crate::solver::{self, NetConfig, SolverError, PENALTY_CONVENTION};

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("invalid stability config: {0}")]
    Config(String),
    #[error("subsample size {size} (n = {n}) is below 2")]
    TooFewRows { n: usize, size: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed selection matrix: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    /// Number of subsamples B.
    pub b: usize,
    pub net: NetConfig,
    pub seed: u64,
    pub pi_thr: f64,
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<(), StabilityError> {
        if self.b == 0 {
            return Err(StabilityError::Config("B must be at least 1".into()));
        }
        if !(self.pi_thr > 0.0 && self.pi_thr < 1.0) {
            return Err(StabilityError::Config(format!(
                "pi_thr must lie in (0, 1), got {}",
                self.pi_thr
            )));
        }
        self.net.validate()?;
        Ok(())
    }
}

/// B x p matrix of 0/1 selection indicators, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMatrix {
    b: usize,
    entries: Vec<u8>,
    pub names: Vec<String>,
    pub lambda: f64,
    pub alpha_mix: f64,
    pub seed: u64,
}

impl SelectionMatrix {
    /// Builds a matrix from rows of indicators.
    pub fn from_rows(
        rows: Vec<Vec<u8>>,
        names: Vec<String>,
        lambda: f64,
        alpha_mix: f64,
        seed: u64,
    ) -> Result<Self, StabilityError> {
        let p = names.len();
        let mut entries = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(StabilityError::Parse(format!(
                    "row {} has {} entries, expected {p}",
                    i + 1,
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|&&v| v > 1) {
                return Err(StabilityError::Parse(format!("row {} holds non-binary value {v}", i + 1)));
            }
            entries.extend_from_slice(row);
        }
        Ok(Self {
            b: rows.len(),
            entries,
            names,
            lambda,
            alpha_mix,
            seed,
        })
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let p = self.p();
        &self.entries[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        (0..self.b).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.p() + j]
    }

    /// Column sums `n_j`.
    pub fn counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.p()];
        for row in self.rows() {
            for (c, &v) in counts.iter_mut().zip(row) {
                *c += v as u64;
            }
        }
        counts
    }

    /// Same matrix with rows reordered by `order`.
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        let rows = order.iter().map(|&i| self.row(i).to_vec()).collect();
        Self::from_rows(rows, self.names.clone(), self.lambda, self.alpha_mix, self.seed)
            .expect("rows taken from a valid matrix")
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        for row in self.rows() {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push(if *v == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV form. Metadata (lambda, seed, alpha) comes from `meta`
    /// when the sidecar is available.
    pub fn from_csv_str(text: &str, meta: Option<&MatrixMeta>) -> Result<Self, StabilityError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| StabilityError::Parse("empty file".into()))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|cell| match cell.trim() {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(StabilityError::Parse(format!(
                        "row {} holds non-binary value '{other}'",
                        i + 1
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        let (lambda, alpha, seed) = meta.map_or((f64::NAN, f64::NAN, 0), |m| (m.lambda, m.alpha_mix, m.seed));
        let m = Self::from_rows(rows, names, lambda, alpha, seed)?;
        if let Some(meta) = meta {
            if meta.b != m.b || meta.p != m.p() {
                return Err(StabilityError::Parse(format!(
                    "sidecar describes {}x{} but the matrix is {}x{}",
                    meta.b,
                    meta.p,
                    m.b,
                    m.p()
                )));
            }
        }
        Ok(m)
    }

    pub fn meta(&self) -> MatrixMeta {
        MatrixMeta {
            b: self.b,
            p: self.p(),
            lambda: self.lambda,
            alpha_mix: self.alpha_mix,
            seed: self.seed,
            convention: PENALTY_CONVENTION.to_string(),
        }
    }

    /// Writes `<stem>.csv` content to `path` and the sidecar next to it
    /// (`path` with extension `toml`).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), StabilityError> {
        let path = path.as_ref();
        write_file(path, &self.to_csv_string())?;
        write_file(&path.with_extension("toml"), &self.meta().to_toml())
    }

    /// Reads a matrix written by [`SelectionMatrix::write`]; the sidecar is optional.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, StabilityError> {
        let path = path.as_ref();
        let text = read_file(path)?;
        let side = path.with_extension("toml");
        let meta = if side.exists() {
            let raw = read_file(&side)?;
            Some(toml::from_str::<MatrixMeta>(&raw).map_err(|e| StabilityError::Parse(e.to_string()))?)
        } else {
            None
        };
        Self::from_csv_str(&text, meta.as_ref())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), StabilityError> {
    std::fs::write(path, text).map_err(|source| StabilityError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, StabilityError> {
    std::fs::read_to_string(path).map_err(|source| StabilityError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Sidecar for a serialized selection matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub b: usize,
    pub p: usize,
    pub lambda: f64,
    pub alpha_mix: f64,
    pub seed: u64,
    pub convention: String,
}

impl MatrixMeta {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metadata serializes")
    }
}

/// Selection frequencies `n_j / B`. An empty matrix gives zeros.
pub fn frequencies(m: &SelectionMatrix) -> Vec<f64> {
    let b = m.b() as f64;
    m.counts()
        .into_iter()
        .map(|c| if m.b() == 0 { 0.0 } else { c as f64 / b })
        .collect()
}

/// `{ j : f_j >= pi_thr }`, zero-based.
pub fn stable_set_frequentist(m: &SelectionMatrix, pi_thr: f64) -> BTreeSet<usize> {
    stable_set_from_frequencies(&frequencies(m), pi_thr)
}

pub fn stable_set_from_frequencies(freqs: &[f64], pi_thr: f64) -> BTreeSet<usize> {
    freqs
        .iter()
        .enumerate()
        .filter(|(_, f)| **f >= pi_thr)
        .map(|(j, _)| j)
        .collect()
}

/// Rows drawn for subsample `b` (zero-based): `floor(n/2)` distinct
/// indices, ascending, from the stream seeded with `derive_seed(seed, b)`.
pub fn subsample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = rng::substream(seed, b as u64);
    let mut rows = index::sample(&mut rng, n, n / 2).into_vec();
    rows.sort_unstable();
    rows
}

fn selection_row(dataset: &Dataset, rows: &[usize], net: &NetConfig, b: usize) -> Result<Vec<u8>, SolverError> {
    let sub = dataset.select_rows(rows);
    let st = Standardizer::fit(&sub.x);
    let constant = st.constant_columns();
    if !constant.is_empty() {
        let names: Vec<&str> = constant.iter().map(|&j| dataset.names[j].as_str()).collect();
        warn!("subsample {}: constant columns {:?} recorded as not selected", b + 1, names);
    }
    let keep: Vec<usize> = (0..dataset.p()).filter(|j| !constant.contains(j)).collect();
    let x = st.apply(&sub.x).select_columns(&keep);
    let fit = solver::fit(&x, &sub.y, net)?;
    if !fit.converged {
        warn!("subsample {}: coordinate descent stopped after {} sweeps", b + 1, fit.iterations);
    }
    let mut row = vec![0u8; dataset.p()];
    for k in fit.support {
        row[keep[k]] = 1;
    }
    Ok(row)
}

/// Fits the elastic net at the fixed `cfg.net` on `cfg.b` subsamples of
/// size `floor(n/2)`, each standardized on its own rows.
pub fn run_stability(dataset: &Dataset, cfg: &StabilityConfig) -> Result<SelectionMatrix, StabilityError> {
    cfg.validate()?;
    let n = dataset.n();
    if n / 2 < 2 {
        return Err(StabilityError::TooFewRows { n, size: n / 2 });
    }
    let rows = (0..cfg.b)
        .into_par_iter()
        .map(|b| selection_row(dataset, &subsample_indices(n, cfg.seed, b), &cfg.net, b))
        .collect::<Result<Vec<_>, _>>()?;
    SelectionMatrix::from_rows(rows, dataset.names.clone(), cfg.net.lambda, cfg.net.alpha_mix, cfg.seed)
}

/// One line per variable: `name,n_j,frequency`.
pub fn frequencies_csv(m: &SelectionMatrix) -> String {
    let mut out = String::from("name,n_j,frequency\n");
    for ((name, c), f) in m.names.iter().zip(m.counts()).zip(frequencies(m)) {
        let _ = writeln!(out, "{name},{c},{f}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, Scenario, SyntheticConfig};
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn matrix(rows: Vec<Vec<u8>>) -> SelectionMatrix {
        let p = rows.first().map_or(0, Vec::len);
        SelectionMatrix::from_rows(rows, (1..=p).map(|j| format!("v{j}")).collect(), 0.1, 1.0, 0).unwrap()
    }

    fn small_cfg(b: usize, lambda: f64) -> StabilityConfig {
        StabilityConfig {
            b,
            net: NetConfig::new(0.2, lambda).unwrap(),
            seed: 17,
            pi_thr: 0.6,
        }
    }

    #[test]
    fn frequency_examples() {
        let m = matrix(vec![vec![1, 1], vec![1, 0], vec![0, 1], vec![0, 1]]);
        assert_eq!(frequencies(&m), vec![0.5, 0.75]);
        let m = matrix(vec![vec![1]; 100]);
        assert_eq!(frequencies(&m), vec![1.0]);
        let m = matrix(vec![]);
        assert_eq!(m.b(), 0);
    }

    #[test]
    fn stable_set_examples() {
        assert_eq!(stable_set_from_frequencies(&[0.62, 0.55], 0.6), BTreeSet::from([0]));
        let avg = [0.529, 0.546, 0.604, 0.609, 0.622, 0.540, 0.062];
        assert_eq!(stable_set_from_frequencies(&avg, 0.6), BTreeSet::from([2, 3, 4]));
        assert!(stable_set_from_frequencies(&[0.99, 0.5, 0.9998], 0.9999).is_empty());
        // 60 of 100 meets a 0.6 threshold exactly
        let m = matrix((0..100).map(|i| vec![(i < 60) as u8]).collect());
        assert_eq!(stable_set_frequentist(&m, 0.6), BTreeSet::from([0]));
    }

    #[test]
    fn subsamples_are_half_size_and_distinct() {
        for n in [4, 5, 50, 71] {
            for b in 0..20 {
                let rows = subsample_indices(n, 3, b);
                assert_eq!(rows.len(), n / 2);
                assert!(rows.windows(2).all(|w| w[0] < w[1]));
                assert!(rows.iter().all(|&r| r < n));
            }
        }
        assert_ne!(subsample_indices(50, 3, 0), subsample_indices(50, 3, 1));
    }

    #[test]
    fn shape_and_determinism() {
        let d = gen_synthetic(&SyntheticConfig { n: 30, p: 3, ..SyntheticConfig::new(Scenario::Independent, 1) });
        assert!(d.is_err()); // Independent needs p >= 6
        let d = gen_synthetic(&SyntheticConfig { n: 30, p: 8, ..SyntheticConfig::new(Scenario::Decaying, 1) }).unwrap();
        let d3 = Dataset::new(d.y.clone(), d.x.columns(0, 3).into_owned(), d.names[..3].to_vec(), None).unwrap();
        let m = run_stability(&d3, &small_cfg(7, 0.1)).unwrap();
        assert_eq!((m.b(), m.p()), (7, 3));
        assert_eq!(m, run_stability(&d3, &small_cfg(7, 0.1)).unwrap());
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let d = gen_synthetic(&SyntheticConfig { n: 40, p: 60, ..SyntheticConfig::new(Scenario::CorrelatedBlocks, 4) }).unwrap();
        let cfg = small_cfg(16, 0.4);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = single.install(|| run_stability(&d, &cfg)).unwrap();
        let multi = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let b = multi.install(|| run_stability(&d, &cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overwhelming_signal_always_selected() {
        let mut r = rng::stream(5);
        use rand_distr::{Distribution, StandardNormal};
        let x = DMatrix::from_fn(40, 10, |_, _| StandardNormal.sample(&mut r));
        let y = DVector::from_fn(40, |i, _| {
            let e: f64 = StandardNormal.sample(&mut r);
            10.0 * x[(i, 0)] + 0.01 * e
        });
        let d = Dataset::new(y, x, (1..=10).map(|j| format!("x{j}")).collect(), None).unwrap();
        let cfg = StabilityConfig { net: NetConfig::new(1.0, 1.0).unwrap(), ..small_cfg(50, 1.0) };
        let m = run_stability(&d, &cfg).unwrap();
        assert_eq!(m.counts()[0], 50);
    }

    #[test]
    fn constant_subsample_column_recorded_as_zero() {
        // x2 is nonzero on a single row, so most half-samples see it constant.
        let mut r = rng::stream(6);
        use rand_distr::{Distribution, StandardNormal};
        let mut x = DMatrix::from_fn(12, 2, |_, _| StandardNormal.sample(&mut r));
        x.column_mut(1).fill(0.0);
        x[(0, 1)] = 1.0;
        let y = DVector::from_fn(12, |i, _| 3.0 * x[(i, 0)]);
        let d = Dataset::new(y, x, vec!["a".into(), "rare".into()], None).unwrap();
        let m = run_stability(&d, &small_cfg(20, 0.05)).unwrap();
        let rows_with_row0: Vec<usize> = (0..20).filter(|&b| subsample_indices(12, 17, b).contains(&0)).collect();
        for b in 0..20 {
            if !rows_with_row0.contains(&b) {
                assert_eq!(m.get(b, 1), 0);
            }
        }
        assert_eq!(m.counts()[0], 20);
    }

    #[test]
    fn config_errors() {
        let d = gen_synthetic(&SyntheticConfig { n: 3, p: 4, ..SyntheticConfig::new(Scenario::Decaying, 1) }).unwrap();
        assert!(matches!(run_stability(&d, &small_cfg(5, 0.1)), Err(StabilityError::TooFewRows { .. })));
        let d = gen_synthetic(&SyntheticConfig { n: 10, p: 4, ..SyntheticConfig::new(Scenario::Decaying, 1) }).unwrap();
        assert!(matches!(run_stability(&d, &small_cfg(0, 0.1)), Err(StabilityError::Config(_))));
        let bad = StabilityConfig { pi_thr: 1.0, ..small_cfg(3, 0.1) };
        assert!(run_stability(&d, &bad).is_err());
    }

    #[test]
    fn csv_and_sidecar_round_trip() {
        let m = matrix(vec![vec![1, 0, 1], vec![0, 0, 1]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("selection_matrix.csv");
        m.write(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "v1,v2,v3\n1,0,1\n0,0,1\n");
        let back = SelectionMatrix::read(&path).unwrap();
        assert_eq!(back, m);
        assert!(SelectionMatrix::from_csv_str("a,b\n1,2\n", None).is_err());
        assert!(SelectionMatrix::from_csv_str("a,b\n1\n", None).is_err());
    }

    proptest! {
        #[test]
        fn row_permutation_keeps_counts(bits in proptest::collection::vec(proptest::collection::vec(0u8..2, 5), 1..40), seed in any::<u64>()) {
            let m = matrix(bits);
            let mut order: Vec<usize> = (0..m.b()).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng::stream(seed));
            let permuted = m.permute_rows(&order);
            prop_assert_eq!(frequencies(&permuted), frequencies(&m));
            let counts = m.counts();
            let by_hand: Vec<u64> = (0..m.p()).map(|j| m.rows().map(|r| r[j] as u64).sum()).collect();
            prop_assert_eq!(&counts, &by_hand);
            for (c, f) in counts.iter().zip(frequencies(&m)) {
                prop_assert!((*c as f64 - f * m.b() as f64).abs() < 1e-9);
            }
        }
    }
}
