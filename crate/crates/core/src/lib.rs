//! Stability selection with Bayesian selection probabilities.
//!
//! A dataset is subsampled `B` times, an elastic net at one fixed lambda is
//! fit to each half-size subsample, and the resulting selection counts are
//! combined with per-variable Beta priors (possibly elicited from an expert)
//! into posterior selection probabilities.
//!
//! ```no_run
//! use stabsel_core::{bayes, data, solver, stability};
//!
//! let ds = data::gen_synthetic(&data::SyntheticConfig::new(data::Scenario::CorrelatedBlocks, 1)).unwrap();
//! let net = solver::cv_1se(&ds, &solver::CvOptions::new(0.2, 7)).unwrap();
//! let cfg = stability::StabilityConfig { b: 100, net, seed: 11, pi_thr: 0.6 };
//! let m = stability::run_stability(&ds, &cfg).unwrap();
//! let prior = bayes::elicit(0.5, 0.7, 100).unwrap().prior;
//! let rows = bayes::decision_report(&m, &vec![prior; m.p()], 0.6, 0.95).unwrap();
//! println!("{}", bayes::report_csv(&rows));
//! ```

pub mod bayes;
pub mod data;
pub mod rng;
pub mod solver;
pub mod stability;
pub mod sweep;

pub use bayes::{BayesError, BetaDist, PosteriorSummary, PriorEntry, PriorSpec, ReportRow};
pub use data::{DataError, Dataset, Scenario, SyntheticConfig};
pub use solver::{CvOptions, FitResult, NetConfig, Selector, SolverError};
pub use stability::{SelectionMatrix, StabilityConfig, StabilityError};
pub use sweep::{SweepConfig, SweepError, SweepGrid, SweepMode};

use thiserror::Error;

/// Any error raised by the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}
