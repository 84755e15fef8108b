//! Datasets: CSV ingestion and export, column standardization, and the two
//! correlated-Gaussian benchmark generators.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("non-numeric cell '{value}' at row {row}, column '{column}'")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("constant column '{0}' cannot be standardized")]
    ConstantColumn(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

/// Response vector, design matrix and variable names. `truth` holds the
/// zero-based indices of the true signal variables for generated data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub truth: Option<BTreeSet<usize>>,
}

impl Dataset {
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        names: Vec<String>,
        truth: Option<BTreeSet<usize>>,
    ) -> Result<Self, DataError> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(DataError::Invalid(format!(
                "need at least one row and one column, got {n}x{p}"
            )));
        }
        if y.len() != n {
            return Err(DataError::Invalid(format!(
                "response has {} entries but design has {n} rows",
                y.len()
            )));
        }
        if names.len() != p {
            return Err(DataError::Invalid(format!(
                "{} names for {p} columns",
                names.len()
            )));
        }
        let mut seen = HashSet::with_capacity(p);
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(DataError::Invalid(format!("duplicate variable name '{name}'")));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!("non-finite response at row {}", i + 1)));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!(
                "non-finite value at row {}, column '{}'",
                k % n + 1,
                names[k / n]
            )));
        }
        if let Some(t) = &truth {
            if let Some(&bad) = t.iter().find(|&&j| j >= p) {
                return Err(DataError::Invalid(format!(
                    "signal index {} outside 1..={p}",
                    bad + 1
                )));
            }
        }
        Ok(Self { y, x, names, truth })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `rows` (in the given order) as a new dataset.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let p = self.p();
        let x = DMatrix::from_fn(rows.len(), p, |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Dataset {
            y,
            x,
            names: self.names.clone(),
            truth: self.truth.clone(),
        }
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64, DataError> {
    let trimmed = raw.trim();
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::NonNumeric {
            row,
            column: column.to_string(),
            value: trimmed.to_string(),
        }),
    }
}

/// Reads a comma-separated file with a header row. The response comes from
/// `response_column`; every other column becomes a covariate, in header order.
/// Rows are numbered from 1 (the first data line) in error messages.
pub fn load_csv(path: impl AsRef<Path>, response_column: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, response_column).map_err(|e| match e {
        DataError::Csv { message, .. } => DataError::Csv {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// [`load_csv`] on in-memory text.
pub fn parse_csv(text: &str, response_column: &str) -> Result<Dataset, DataError> {
    let csv_err = |e: csv::Error| DataError::Csv {
        path: PathBuf::new(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let response_idx = header
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| DataError::MissingColumn(response_column.to_string()))?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != response_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut y = Vec::new();
    let mut cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(DataError::Ragged {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (k, raw) in record.iter().enumerate() {
            let v = parse_cell(raw, row, &header[k])?;
            if k == response_idx {
                y.push(v);
            } else {
                cells.push(v);
            }
        }
    }
    let n = y.len();
    let p = names.len();
    let x = DMatrix::from_row_slice(n, p, &cells);
    Dataset::new(DVector::from_vec(y), x, names, None)
}

fn fmt_row(out: &mut String, values: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&v.to_string());
    }
    out.push('\n');
}

/// Serializes `dataset` with the response first, under `response_name`.
pub fn to_csv_string(dataset: &Dataset, response_name: &str) -> String {
    let mut out = String::new();
    out.push_str(response_name);
    for name in &dataset.names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..dataset.n() {
        fmt_row(
            &mut out,
            std::iter::once(dataset.y[i]).chain(dataset.x.row(i).iter().copied()),
        );
    }
    out
}

pub fn write_csv(dataset: &Dataset, response_name: &str, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(dataset, response_name)).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-column centering and scaling to unit sample standard deviation
/// (denominator n - 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    /// Column means and sample standard deviations. Requires `n >= 2`.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            means.push(mean);
            sds.push((ss / (n as f64 - 1.0)).sqrt());
        }
        Self { means, sds }
    }

    /// Columns whose spread is zero up to rounding.
    pub fn constant_columns(&self) -> Vec<usize> {
        self.sds
            .iter()
            .zip(&self.means)
            .enumerate()
            .filter(|(_, (sd, mean))| !(**sd > 1e-12 * mean.abs().max(1.0)))
            .map(|(j, _)| j)
            .collect()
    }

    /// Applies the stored transform. Constant columns map to zero.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let constant: HashSet<usize> = self.constant_columns().into_iter().collect();
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            if constant.contains(&j) {
                col.fill(0.0);
            } else {
                let (m, s) = (self.means[j], self.sds[j]);
                col.iter_mut().for_each(|v| *v = (*v - m) / s);
            }
        }
        out
    }
}

/// Centers every column to mean zero and scales it to unit sample standard
/// deviation. Columns are named `x1, x2, ...` in errors.
pub fn standardize(x: &DMatrix<f64>) -> Result<DMatrix<f64>, DataError> {
    if x.nrows() < 2 {
        return Err(DataError::Invalid("standardization needs at least two rows".into()));
    }
    let st = Standardizer::fit(x);
    if let Some(&j) = st.constant_columns().first() {
        return Err(DataError::ConstantColumn(format!("x{}", j + 1)));
    }
    Ok(st.apply(x))
}

/// [`standardize`] for named datasets: the error names the offending variable.
pub fn standardize_dataset(dataset: &Dataset) -> Result<Dataset, DataError> {
    let st = Standardizer::fit(&dataset.x);
    if let Some(&j) = st.constant_columns().first() {
        return Err(DataError::ConstantColumn(dataset.names[j].clone()));
    }
    Ok(Dataset {
        x: st.apply(&dataset.x),
        ..dataset.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Identity covariance except `corr(x1,x2) = 0.8` and pairwise 0.8 within
    /// `{x3,x4,x5}`; beta = (0.9, 0.9, 0.7, 0.7, 0.7, 1.5, 0, ...).
    CorrelatedBlocks,
    /// `Sigma_ij = 0.9^|i-j|`; beta = (0.5, 0.4, 0.3, 0.2, 0, ...).
    Decaying,
    /// Identity covariance with the `CorrelatedBlocks` coefficients.
    Independent,
}

impl Scenario {
    pub fn coefficients(self) -> &'static [f64] {
        match self {
            Scenario::CorrelatedBlocks | Scenario::Independent => &[0.9, 0.9, 0.7, 0.7, 0.7, 1.5],
            Scenario::Decaying => &[0.5, 0.4, 0.3, 0.2],
        }
    }

    pub fn covariance(self, p: usize) -> DMatrix<f64> {
        match self {
            Scenario::CorrelatedBlocks => {
                let mut sigma = DMatrix::identity(p, p);
                for &(i, j) in &[(0, 1), (2, 3), (2, 4), (3, 4)] {
                    if i < p && j < p {
                        sigma[(i, j)] = 0.8;
                        sigma[(j, i)] = 0.8;
                    }
                }
                sigma
            }
            Scenario::Decaying => {
                DMatrix::from_fn(p, p, |i, j| 0.9f64.powi(i.abs_diff(j) as i32))
            }
            Scenario::Independent => DMatrix::identity(p, p),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::CorrelatedBlocks => "correlated-blocks",
            Scenario::Decaying => "decaying",
            Scenario::Independent => "independent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub scenario: Scenario,
    #[serde(default = "SyntheticConfig::default_n")]
    pub n: usize,
    #[serde(default = "SyntheticConfig::default_p")]
    pub p: usize,
    #[serde(default = "SyntheticConfig::default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticConfig {
    fn default_n() -> usize {
        50
    }
    fn default_p() -> usize {
        500
    }
    fn default_sigma() -> f64 {
        2.0
    }

    /// n = 50, p = 500, sigma = 2.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            n: Self::default_n(),
            p: Self::default_p(),
            sigma: Self::default_sigma(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let k = self.scenario.coefficients().len();
        if self.p < k {
            return Err(DataError::Config(format!(
                "scenario {} needs p >= {k}, got {}",
                self.scenario, self.p
            )));
        }
        if self.n < 2 {
            return Err(DataError::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(DataError::Config(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Draws `n` rows from N(0, Sigma) through the Cholesky factor of Sigma and
/// forms `y = X beta + eps`. Deterministic in `cfg.seed`.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<Dataset, DataError> {
    cfg.validate()?;
    let SyntheticConfig { n, p, sigma, .. } = *cfg;
    let chol = cfg
        .scenario
        .covariance(p)
        .cholesky()
        .ok_or(DataError::NotPositiveDefinite)?;
    let lower = chol.l();

    let mut rng = rng::stream(cfg.seed);
    // Row-major draw order so a prefix of rows does not depend on p's layout.
    let mut z = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let x = z * lower.transpose();

    let coefs = cfg.scenario.coefficients();
    let y = DVector::from_fn(n, |i, _| {
        let signal: f64 = coefs.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum();
        let noise: f64 = StandardNormal.sample(&mut rng);
        signal + sigma * noise
    });
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let truth = (0..coefs.len()).collect();
    Dataset::new(y, x, names, Some(truth))
}

/// Sidecar written next to an exported synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMeta {
    pub scenario: Scenario,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    /// One-based signal indices.
    pub truth: Vec<usize>,
}

impl SyntheticMeta {
    pub fn new(cfg: &SyntheticConfig, dataset: &Dataset) -> Self {
        Self {
            scenario: cfg.scenario,
            seed: cfg.seed,
            n: cfg.n,
            p: cfg.p,
            sigma: cfg.sigma,
            truth: dataset
                .truth
                .iter()
                .flatten()
                .map(|j| j + 1)
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metadata serializes")
    }
}
