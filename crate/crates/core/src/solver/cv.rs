//! Lambda paths and K-fold cross-validation with the one-standard-error rule.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{centered, finish, lambda_max, CoordinateDescent, FitResult, NetConfig, Penalty, SolverError};
use crate::data::{standardize_dataset, Dataset, Standardizer};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvOptions {
    pub alpha_mix: f64,
    #[serde(default = "CvOptions::default_folds")]
    pub folds: usize,
    #[serde(default = "CvOptions::default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "CvOptions::default_tol")]
    pub tol: f64,
    #[serde(default = "CvOptions::default_max_iter")]
    pub max_iter: usize,
}

impl CvOptions {
    fn default_folds() -> usize {
        10
    }
    fn default_grid_size() -> usize {
        100
    }
    fn default_tol() -> f64 {
        NetConfig::DEFAULT_TOL
    }
    fn default_max_iter() -> usize {
        NetConfig::DEFAULT_MAX_ITER
    }

    /// 10 folds over a 100-point grid.
    pub fn new(alpha_mix: f64, seed: u64) -> Self {
        Self {
            alpha_mix,
            folds: Self::default_folds(),
            grid_size: Self::default_grid_size(),
            seed,
            tol: Self::default_tol(),
            max_iter: Self::default_max_iter(),
        }
    }

    fn net(&self, lambda: f64) -> NetConfig {
        NetConfig {
            alpha_mix: self.alpha_mix,
            lambda,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

/// How the regularization for a job is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Selector {
    Fixed(NetConfig),
    #[serde(rename = "auto-1se")]
    Cv1se(CvOptions),
}

impl Selector {
    pub fn resolve(&self, dataset: &Dataset) -> Result<NetConfig, SolverError> {
        match self {
            Selector::Fixed(cfg) => {
                cfg.validate()?;
                Ok(*cfg)
            }
            Selector::Cv1se(opts) => cv_1se(dataset, opts),
        }
    }

    pub fn alpha_mix(&self) -> f64 {
        match self {
            Selector::Fixed(cfg) => cfg.alpha_mix,
            Selector::Cv1se(opts) => opts.alpha_mix,
        }
    }
}

/// `size` log-spaced values from `lambda_max` down to `eps * lambda_max`,
/// with `eps = 1e-3` when `p > n` and `1e-4` otherwise.
pub fn lambda_grid(lambda_max: f64, n: usize, p: usize, size: usize) -> Vec<f64> {
    let eps: f64 = if p > n { 1e-3 } else { 1e-4 };
    match size {
        0 => Vec::new(),
        1 => vec![lambda_max],
        _ => {
            let step = eps.ln() / (size - 1) as f64;
            (0..size)
                .map(|k| lambda_max * (step * k as f64).exp())
                .collect()
        }
    }
}

/// Warm-started fits along a decreasing `lambdas` sequence.
pub(crate) fn fit_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &CvOptions,
    lambdas: &[f64],
) -> Vec<FitResult> {
    let cd = CoordinateDescent::new(x);
    let (intercept, mut resid) = centered(y);
    let mut beta = vec![0.0; x.ncols()];
    lambdas
        .iter()
        .map(|&lam| {
            let pen = Penalty::new(&opts.net(lam));
            let (iters, converged) = cd.solve(&pen, &mut beta, &mut resid, opts.max_iter, opts.tol, None);
            finish(intercept, beta.clone(), iters, converged)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCurve {
    pub lambdas: Vec<f64>,
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    pub index_min: usize,
    pub index_1se: usize,
}

impl CvCurve {
    pub fn lambda_min(&self) -> f64 {
        self.lambdas[self.index_min]
    }

    pub fn lambda_1se(&self) -> f64 {
        self.lambdas[self.index_1se]
    }
}

/// Held-out mean squared error of every grid value for one fold. The
/// training rows are standardized on their own; columns that are constant
/// within them get a zero coefficient.
fn fold_errors(
    dataset: &Dataset,
    train: &[usize],
    test: &[usize],
    opts: &CvOptions,
    lambdas: &[f64],
) -> Vec<f64> {
    let tr = dataset.select_rows(train);
    let te = dataset.select_rows(test);
    let st = Standardizer::fit(&tr.x);
    let constant = st.constant_columns();
    let keep: Vec<usize> = (0..dataset.p()).filter(|j| !constant.contains(j)).collect();
    let xtr = st.apply(&tr.x).select_columns(&keep);
    let xte = st.apply(&te.x).select_columns(&keep);
    fit_path(&xtr, &tr.y, opts, lambdas)
        .iter()
        .map(|f| {
            let pred = &xte * DVector::from_column_slice(&f.beta);
            let sse: f64 = pred
                .iter()
                .zip(te.y.iter())
                .map(|(p, y)| (y - p - f.intercept).powi(2))
                .sum();
            sse / test.len() as f64
        })
        .collect()
}

/// K-fold cross-validation of the elastic net over a grid anchored at the
/// full-data `lambda_max`. Folds are a seeded random partition of the rows
/// (fold sizes differ by at most one).
pub fn cross_validate(dataset: &Dataset, opts: &CvOptions) -> Result<CvCurve, SolverError> {
    let (n, p) = (dataset.n(), dataset.p());
    let k = opts.folds;
    if k < 2 {
        return Err(SolverError::DegenerateFolds(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(SolverError::DegenerateFolds(format!("{k} folds leave some empty with n = {n}")));
    }
    if n - n.div_ceil(k) < 2 {
        return Err(SolverError::DegenerateFolds(format!("training folds of n = {n} are too small")));
    }
    if opts.grid_size == 0 {
        return Err(SolverError::Config("grid_size must be positive".into()));
    }
    opts.net(0.0).validate()?;

    let full = standardize_dataset(dataset)?;
    let lmax = lambda_max(&full.x, &full.y, opts.alpha_mix)?;
    if !(lmax > 0.0) {
        return Err(SolverError::DegenerateResponse);
    }
    let lambdas = lambda_grid(lmax, n, p, opts.grid_size);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(opts.seed));
    let mut fold_of = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % k;
    }

    let errors: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == fold);
            fold_errors(dataset, &train, &test, opts, &lambdas)
        })
        .collect();

    let kf = k as f64;
    let mut mean_error = Vec::with_capacity(lambdas.len());
    let mut std_error = Vec::with_capacity(lambdas.len());
    for l in 0..lambdas.len() {
        let mean = errors.iter().map(|e| e[l]).sum::<f64>() / kf;
        let var = errors.iter().map(|e| (e[l] - mean).powi(2)).sum::<f64>() / (kf - 1.0);
        mean_error.push(mean);
        std_error.push((var / kf).sqrt());
    }

    // Strict comparison keeps the first (largest) lambda on ties.
    let mut index_min = 0;
    for l in 1..lambdas.len() {
        if mean_error[l] < mean_error[index_min] {
            index_min = l;
        }
    }
    let bound = mean_error[index_min] + std_error[index_min];
    let index_1se = (0..=index_min)
        .find(|&l| mean_error[l] <= bound)
        .unwrap_or(index_min);

    Ok(CvCurve {
        lambdas,
        mean_error,
        std_error,
        index_min,
        index_1se,
    })
}

/// The largest grid lambda whose mean CV error is within one standard error
/// of the minimum.
pub fn cv_1se(dataset: &Dataset, opts: &CvOptions) -> Result<NetConfig, SolverError> {
    let curve = cross_validate(dataset, opts)?;
    let cfg = opts.net(curve.lambda_1se());
    cfg.validate()?;
    Ok(cfg)
}
