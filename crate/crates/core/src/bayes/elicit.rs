//! Beta priors on selection probabilities and their construction from the
//! two elicitation answers.
//!
//! The expert gives, per variable,
//!
//! * `zeta`: the share of the final result that prior knowledge should
//!   carry, at most one half; it fixes the number of pseudo-observations
//!   `gamma = floor(zeta * B / (1 - zeta))`;
//! * `xi`: the fraction of stability runs the expert expects to select the
//!   variable; the pseudo-observations split into `alpha = floor(xi * gamma)`
//!   selections and `beta = gamma - alpha` non-selections.

use log::debug;
use serde::{Deserialize, Serialize};

use super::BayesError;

/// Largest admissible prior share.
pub const MAX_ZETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorSource {
    NonInformative,
    Elicited { zeta: f64, xi: f64 },
    /// Shape parameters supplied directly.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub alpha: f64,
    pub beta: f64,
    pub source: PriorSource,
}

impl PriorSpec {
    /// Beta(1, 1).
    pub const FLAT: PriorSpec = PriorSpec {
        alpha: 1.0,
        beta: 1.0,
        source: PriorSource::NonInformative,
    };

    pub fn non_informative() -> Self {
        Self::FLAT
    }

    /// Shapes given directly; both must be at least 1.
    pub fn direct(alpha: f64, beta: f64) -> Result<Self, BayesError> {
        if !(alpha >= 1.0 && beta >= 1.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(BayesError::Shape { alpha, beta });
        }
        Ok(Self {
            alpha,
            beta,
            source: PriorSource::Direct,
        })
    }

    /// Pseudo-observation count `alpha + beta`.
    pub fn gamma(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Why an elicited prior differs from the raw formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Adjustment {
    /// `floor(xi * gamma)` fell outside `[1, gamma - 1]`.
    AlphaClamped { raw: f64, clamped: f64 },
    /// Fewer than two pseudo-observations: replaced by Beta(1, 1).
    FlatFallback { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Elicitation {
    pub prior: PriorSpec,
    pub gamma: f64,
    pub adjustment: Option<Adjustment>,
}

/// Floor that forgives representation error: `0.29 * 100` is 29, not 28.
fn floor_tolerant(v: f64) -> f64 {
    (v + 1e-9 * v.abs().max(1.0)).floor()
}

/// Builds the Beta prior for answers `(zeta, xi)` against `b` stability
/// iterations. `zeta = 0` means no prior knowledge.
pub fn elicit(zeta: f64, xi: f64, b: u64) -> Result<Elicitation, BayesError> {
    if !(0.0..=MAX_ZETA).contains(&zeta) {
        return Err(BayesError::ZetaOutOfRange(zeta));
    }
    if !(0.0..=1.0).contains(&xi) {
        return Err(BayesError::XiOutOfRange(xi));
    }
    if b < 4 {
        return Err(BayesError::TooFewIterations(b));
    }
    if zeta == 0.0 {
        return Ok(Elicitation {
            prior: PriorSpec::FLAT,
            gamma: 0.0,
            adjustment: None,
        });
    }
    let gamma = floor_tolerant(zeta * b as f64 / (1.0 - zeta));
    if gamma < 2.0 {
        debug!("zeta = {zeta} with B = {b} gives {gamma} pseudo-observations; using a flat prior");
        return Ok(Elicitation {
            prior: PriorSpec::FLAT,
            gamma,
            adjustment: Some(Adjustment::FlatFallback { gamma }),
        });
    }
    let raw = floor_tolerant(xi * gamma);
    let alpha = raw.clamp(1.0, gamma - 1.0);
    let adjustment = (alpha != raw).then(|| {
        debug!("elicited alpha {raw} clamped to {alpha} (gamma = {gamma})");
        Adjustment::AlphaClamped { raw, clamped: alpha }
    });
    Ok(Elicitation {
        prior: PriorSpec {
            alpha,
            beta: gamma - alpha,
            source: PriorSource::Elicited { zeta, xi },
        },
        gamma,
        adjustment,
    })
}
