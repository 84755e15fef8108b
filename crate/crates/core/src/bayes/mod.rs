//! Beta-Binomial inference on selection probabilities.
//!
//! Each variable's selection count `n_j` out of `B` subsamples is treated as
//! Binomial(B, pi_j) with a Beta prior on `pi_j`, so the posterior is again
//! Beta and every summary (mean, variance, equal-tailed interval) is closed
//! form apart from the quantile inversion.

mod elicit;
mod posterior;
mod report;
pub mod special;
mod variance;

pub use elicit::{elicit, Adjustment, Elicitation, PriorSource, PriorSpec, MAX_ZETA};
pub use posterior::{beta_variance, credible_interval, posterior, BetaDist, PosteriorSummary};
pub use report::{
    decision_report, decision_report_from_counts, report_csv, resolve_priors, PriorEntry, ReportRow, REPORT_HEADER,
};
pub use special::{beta_quantile, reg_inc_beta};
pub use variance::{integer_alpha_grid, variance_argmax_alpha, variance_surface, VarianceRow, VarianceSurface};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesError {
    #[error("zeta = {0} is outside [0, 0.5]: the prior may not outweigh the data")]
    ZetaOutOfRange(f64),
    #[error("xi = {0} is outside [0, 1]")]
    XiOutOfRange(f64),
    #[error("elicitation needs B >= 4 stability iterations, got {0}")]
    TooFewIterations(u64),
    #[error("invalid Beta shapes ({alpha}, {beta}); priors need both >= 1")]
    Shape { alpha: f64, beta: f64 },
    #[error("selection count {n} exceeds B = {b}")]
    CountExceedsTrials { n: u64, b: u64 },
    #[error("credible level must lie in (0, 1), got {0}")]
    Level(f64),
    #[error("threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("{priors} priors for {variables} variables")]
    PriorCount { priors: usize, variables: usize },
    #[error("prior for '{name}' carries {gamma} pseudo-observations, more than B = {b}")]
    PriorOutweighsData { name: String, gamma: f64, b: u64 },
    #[error("no variable named '{0}'")]
    UnknownVariable(String),
    #[error("more than one prior for '{0}'")]
    DuplicatePrior(String),
    #[error("invalid variance surface: {0}")]
    Surface(String),
}
