use serde::{Deserialize, Serialize};

use super::special::beta_quantile;
use super::{BayesError, PriorSpec};

/// A Beta distribution over a selection probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaDist {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaDist {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, BayesError> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(BayesError::Shape { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    /// Conjugate update with `selected` successes out of `trials`.
    pub fn update(self, selected: u64, trials: u64) -> Result<Self, BayesError> {
        if selected > trials {
            return Err(BayesError::CountExceedsTrials { n: selected, b: trials });
        }
        Ok(Self {
            alpha: self.alpha + selected as f64,
            beta: self.beta + (trials - selected) as f64,
        })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        beta_variance(self.alpha, self.beta)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        beta_quantile(p, self.alpha, self.beta)
    }
}

impl From<PriorSpec> for BetaDist {
    fn from(p: PriorSpec) -> Self {
        Self {
            alpha: p.alpha,
            beta: p.beta,
        }
    }
}

/// `ab / ((a+b)^2 (a+b+1))`
pub fn beta_variance(a: f64, b: f64) -> f64 {
    let s = a + b;
    a * b / (s * s * (s + 1.0))
}

/// Equal-tailed credible interval of Beta(a, b) at `level`.
pub fn credible_interval(alpha_post: f64, beta_post: f64, level: f64) -> Result<(f64, f64), BayesError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BayesError::Level(level));
    }
    let dist = BetaDist::new(alpha_post, beta_post)?;
    let tail = (1.0 - level) / 2.0;
    Ok((dist.quantile(tail), dist.quantile(1.0 - tail)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub alpha_post: f64,
    pub beta_post: f64,
    pub mean: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
    /// `mean >= pi_thr`; false when no threshold was given.
    pub selected: bool,
}

/// Posterior of a selection probability after `n_j` selections in `b`
/// subsamples: Beta(alpha + n_j, beta + b - n_j).
pub fn posterior(
    prior: &PriorSpec,
    n_j: u64,
    b: u64,
    level: f64,
    pi_thr: Option<f64>,
) -> Result<PosteriorSummary, BayesError> {
    let post = BetaDist::from(*prior).update(n_j, b)?;
    let (ci_low, ci_high) = credible_interval(post.alpha, post.beta, level)?;
    let mean = post.mean();
    Ok(PosteriorSummary {
        alpha_post: post.alpha,
        beta_post: post.beta,
        mean,
        variance: post.variance(),
        ci_low,
        ci_high,
        ci_level: level,
        selected: pi_thr.is_some_and(|t| mean >= t),
    })
}
