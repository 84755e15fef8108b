//! Elastic-net estimation by cyclic coordinate descent.
//!
//! Minimizes over `(b0, beta)`
//!
//! ```text
//! (1/(2n)) ||y - b0 - X beta||^2 + lambda * [ alpha ||beta||_1 + (1 - alpha) ||beta||_2^2 / 2 ]
//! ```
//!
//! on a design whose columns are centered with unit sample standard
//! deviation, so the intercept is `mean(y)`. The data term carries the `1/n`
//! factor so a single lambda means the same thing on the full data and on
//! half-size subsamples. `alpha = 1` is the lasso.

mod cv;

pub use cv::{cross_validate, cv_1se, lambda_grid, CvCurve, CvOptions, Selector};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;

/// Human-readable statement of the objective, recorded in job metadata.
pub const PENALTY_CONVENTION: &str =
    "(1/(2n))*||y - b0 - X*beta||^2 + lambda*(alpha*||beta||_1 + (1-alpha)*||beta||_2^2/2), X standardized with sd denominator n-1";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("column {column} is not standardized (mean {mean:.3e}, sd {sd:.6})")]
    NotStandardized { column: usize, mean: f64, sd: f64 },
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("degenerate cross-validation folds: {0}")]
    DegenerateFolds(String),
    #[error("response has no correlation with any covariate; the lambda path is empty")]
    DegenerateResponse,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Elastic-net mixing in (0, 1]; 1 is the lasso.
    pub alpha_mix: f64,
    pub lambda: f64,
    #[serde(default = "NetConfig::default_max_iter")]
    pub max_iter: usize,
    /// Stop once the largest absolute coefficient change in a sweep is below this.
    #[serde(default = "NetConfig::default_tol")]
    pub tol: f64,
}

impl NetConfig {
    pub const DEFAULT_MAX_ITER: usize = 100_000;
    pub const DEFAULT_TOL: f64 = 1e-7;

    fn default_max_iter() -> usize {
        Self::DEFAULT_MAX_ITER
    }
    fn default_tol() -> f64 {
        Self::DEFAULT_TOL
    }

    pub fn new(alpha_mix: f64, lambda: f64) -> Result<Self, SolverError> {
        let cfg = Self {
            alpha_mix,
            lambda,
            max_iter: Self::DEFAULT_MAX_ITER,
            tol: Self::DEFAULT_TOL,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.alpha_mix > 0.0 && self.alpha_mix <= 1.0) {
            return Err(SolverError::Config(format!(
                "alpha_mix must lie in (0, 1], got {}",
                self.alpha_mix
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SolverError::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(SolverError::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SolverError::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub intercept: f64,
    pub beta: Vec<f64>,
    /// Zero-based indices with `beta[k] != 0`, ascending.
    pub support: Vec<usize>,
    /// Coordinate sweeps performed (full and active-set).
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn predict_row(&self, row: impl Iterator<Item = f64>) -> f64 {
        self.intercept + row.zip(&self.beta).map(|(x, b)| x * b).sum::<f64>()
    }
}

/// `sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const STANDARDIZED_TOL: f64 = 1e-6;

fn check_standardized(x: &DMatrix<f64>) -> Result<(), SolverError> {
    let n = x.nrows();
    if n < 2 {
        return Err(SolverError::Shape(format!("need at least 2 rows, got {n}")));
    }
    for (j, col) in x.column_iter().enumerate() {
        let mean = col.sum() / n as f64;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        if mean.abs() > STANDARDIZED_TOL || (sd - 1.0).abs() > STANDARDIZED_TOL {
            return Err(SolverError::NotStandardized { column: j, mean, sd });
        }
    }
    Ok(())
}

/// Coordinate-descent workspace over a standardized, column-major design.
pub(crate) struct CoordinateDescent<'a> {
    x: &'a [f64],
    n: usize,
    p: usize,
    /// `||x_j||^2 / n`
    col_scale: Vec<f64>,
}

pub(crate) struct Penalty {
    l1: f64,
    l2: f64,
}

impl Penalty {
    pub(crate) fn new(cfg: &NetConfig) -> Self {
        Self {
            l1: cfg.lambda * cfg.alpha_mix,
            l2: cfg.lambda * (1.0 - cfg.alpha_mix),
        }
    }
}

impl<'a> CoordinateDescent<'a> {
    pub(crate) fn new(x: &'a DMatrix<f64>) -> Self {
        let (n, p) = x.shape();
        let data = x.as_slice();
        let col_scale = (0..p)
            .map(|j| {
                let c = &data[j * n..(j + 1) * n];
                dot(c, c) / n as f64
            })
            .collect();
        Self { x: data, n, p, col_scale }
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    /// One pass over `coords`; returns the largest absolute coefficient change.
    fn sweep(
        &self,
        coords: impl Iterator<Item = usize>,
        pen: &Penalty,
        beta: &mut [f64],
        resid: &mut [f64],
    ) -> f64 {
        let inv_n = 1.0 / self.n as f64;
        let mut max_change: f64 = 0.0;
        for j in coords {
            let xj = self.col(j);
            let old = beta[j];
            let z = dot(xj, resid) * inv_n + self.col_scale[j] * old;
            let new = soft_threshold(z, pen.l1) / (self.col_scale[j] + pen.l2);
            let delta = new - old;
            if delta != 0.0 {
                for (r, &v) in resid.iter_mut().zip(xj) {
                    *r -= delta * v;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    pub(crate) fn objective(&self, pen: &Penalty, beta: &[f64], resid: &[f64]) -> f64 {
        let rss = dot(resid, resid) / (2.0 * self.n as f64);
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let l2: f64 = beta.iter().map(|b| b * b).sum();
        rss + pen.l1 * l1 + pen.l2 * l2 / 2.0
    }

    /// Runs from the warm start in `beta` (with `resid` consistent with it):
    /// alternate a full sweep with sweeps restricted to the nonzero set until
    /// a full sweep moves no coefficient by `tol` or more.
    pub(crate) fn solve(
        &self,
        pen: &Penalty,
        beta: &mut [f64],
        resid: &mut [f64],
        max_iter: usize,
        tol: f64,
        mut trace: Option<&mut Vec<f64>>,
    ) -> (usize, bool) {
        let mut iterations = 0;
        let mut record = |beta: &[f64], resid: &[f64]| {
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(pen, beta, resid));
            }
        };
        let mut active = Vec::with_capacity(self.p);
        while iterations < max_iter {
            let change = self.sweep(0..self.p, pen, beta, resid);
            iterations += 1;
            record(beta, resid);
            if change < tol {
                return (iterations, true);
            }
            active.clear();
            active.extend((0..self.p).filter(|&j| beta[j] != 0.0));
            while iterations < max_iter {
                let change = self.sweep(active.iter().copied(), pen, beta, resid);
                iterations += 1;
                record(beta, resid);
                if change < tol {
                    break;
                }
            }
        }
        (iterations, false)
    }
}

pub(crate) fn centered(y: &DVector<f64>) -> (f64, Vec<f64>) {
    let mean = y.mean();
    (mean, y.iter().map(|v| v - mean).collect())
}

fn finish(intercept: f64, beta: Vec<f64>, iterations: usize, converged: bool) -> FitResult {
    let support = beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect();
    FitResult {
        intercept,
        beta,
        support,
        iterations,
        converged,
    }
}

fn prepare(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &NetConfig) -> Result<(), SolverError> {
    cfg.validate()?;
    if y.len() != x.nrows() {
        return Err(SolverError::Shape(format!(
            "{} responses for {} rows",
            y.len(),
            x.nrows()
        )));
    }
    check_standardized(x)
}

/// Fits the elastic net at `cfg.lambda` starting from zero. `x` must be
/// standardized. Running out of sweeps is reported through `converged`.
pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &NetConfig) -> Result<FitResult, SolverError> {
    prepare(x, y, cfg)?;
    let (intercept, mut resid) = centered(y);
    let mut beta = vec![0.0; x.ncols()];
    let cd = CoordinateDescent::new(x);
    let (iterations, converged) = cd.solve(&Penalty::new(cfg), &mut beta, &mut resid, cfg.max_iter, cfg.tol, None);
    Ok(finish(intercept, beta, iterations, converged))
}

/// [`fit`] that also returns the penalized objective after every sweep.
pub fn fit_traced(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &NetConfig,
) -> Result<(FitResult, Vec<f64>), SolverError> {
    prepare(x, y, cfg)?;
    let (intercept, mut resid) = centered(y);
    let mut beta = vec![0.0; x.ncols()];
    let cd = CoordinateDescent::new(x);
    let pen = Penalty::new(cfg);
    let mut trace = vec![cd.objective(&pen, &beta, &resid)];
    let (iterations, converged) =
        cd.solve(&pen, &mut beta, &mut resid, cfg.max_iter, cfg.tol, Some(&mut trace));
    Ok((finish(intercept, beta, iterations, converged), trace))
}

/// Penalized objective of `(intercept, beta)` under `cfg`.
pub fn objective(x: &DMatrix<f64>, y: &DVector<f64>, intercept: f64, beta: &[f64], cfg: &NetConfig) -> f64 {
    let b = DVector::from_column_slice(beta);
    let resid: Vec<f64> = (y - x * b).iter().map(|r| r - intercept).collect();
    CoordinateDescent::new(x).objective(&Penalty::new(cfg), beta, &resid)
}

/// Smallest lambda at which every coefficient is zero:
/// `max_j |<x_j, y - mean(y)>| / (n * alpha_mix)`, nudged up by a few ulps so
/// that a fit at exactly this value is empty despite rounding.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>, alpha_mix: f64) -> Result<f64, SolverError> {
    if !(alpha_mix > 0.0 && alpha_mix <= 1.0) {
        return Err(SolverError::Config(format!(
            "lambda_max is undefined for alpha_mix = {alpha_mix}"
        )));
    }
    if y.len() != x.nrows() {
        return Err(SolverError::Shape(format!("{} responses for {} rows", y.len(), x.nrows())));
    }
    let (_, yc) = centered(y);
    let n = x.nrows() as f64;
    let max = x
        .column_iter()
        .map(|c| dot(c.as_slice(), &yc).abs())
        .fold(0.0, f64::max);
    Ok(max / (n * alpha_mix) * (1.0 + 8.0 * f64::EPSILON))
}
