//! Posterior variance as a function of the prior's `alpha` (with
//! `alpha + beta = gamma` held fixed) and of the selection count.

use serde::{Deserialize, Serialize};

use super::posterior::beta_variance;
use super::BayesError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub n_j: u64,
    /// Posterior variance under Beta(1, 1).
    pub non_informative: f64,
    /// Posterior variance under Beta(alpha, gamma - alpha), one per grid alpha.
    pub informative: Vec<f64>,
}

impl VarianceRow {
    /// Grid alpha with the largest informative variance (first on ties).
    pub fn argmax(&self, alpha_grid: &[f64]) -> f64 {
        let mut best = 0;
        for (k, v) in self.informative.iter().enumerate() {
            if *v > self.informative[best] {
                best = k;
            }
        }
        alpha_grid[best]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSurface {
    pub b: u64,
    pub gamma: f64,
    pub alpha_grid: Vec<f64>,
    pub rows: Vec<VarianceRow>,
}

/// Every admissible integer alpha for `gamma`: `1, 2, ..., gamma - 1`.
pub fn integer_alpha_grid(gamma: u64) -> Vec<f64> {
    (1..gamma).map(|a| a as f64).collect()
}

/// Posterior variance of Beta(alpha + n, gamma - alpha + b - n) over
/// `alpha_grid` for each count in `counts`, next to the flat-prior baseline
/// Beta(1 + n, 1 + b - n).
pub fn variance_surface(
    b: u64,
    counts: &[u64],
    alpha_grid: &[f64],
    gamma: f64,
) -> Result<VarianceSurface, BayesError> {
    if !(gamma >= 2.0 && gamma.is_finite()) {
        return Err(BayesError::Surface(format!("gamma must be at least 2, got {gamma}")));
    }
    if let Some(a) = alpha_grid.iter().find(|&&a| !(a >= 1.0 && a <= gamma - 1.0)) {
        return Err(BayesError::Surface(format!("alpha {a} outside [1, {}]", gamma - 1.0)));
    }
    if let Some(&n) = counts.iter().find(|&&n| n > b) {
        return Err(BayesError::CountExceedsTrials { n, b });
    }
    let rows = counts
        .iter()
        .map(|&n| {
            let (hits, misses) = (n as f64, (b - n) as f64);
            VarianceRow {
                n_j: n,
                non_informative: beta_variance(1.0 + hits, 1.0 + misses),
                informative: alpha_grid
                    .iter()
                    .map(|&a| beta_variance(a + hits, gamma - a + misses))
                    .collect(),
            }
        })
        .collect();
    Ok(VarianceSurface {
        b,
        gamma,
        alpha_grid: alpha_grid.to_vec(),
        rows,
    })
}

/// Closed-form maximizer over real alpha in `[1, gamma - 1]`: the posterior
/// shapes sum to `gamma + b` whatever alpha is, so the variance peaks where
/// they are equal, `alpha = (gamma + b)/2 - n`. With `gamma = b` this is `b - n`.
pub fn variance_argmax_alpha(b: u64, n_j: u64, gamma: f64) -> f64 {
    ((gamma + b as f64) / 2.0 - n_j as f64).clamp(1.0, gamma - 1.0)
}
