//! Linear functionals of the prior and the empirical Bayes targets built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::Prior;

/// Posterior quantity E[h(mu) | X = x].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EbKind {
    /// h(mu) = mu
    PosteriorMean,
    /// h(mu) = 1{mu >= 0}
    Lfsr,
}

impl EbKind {
    pub fn name(self) -> &'static str {
        match self {
            EbKind::PosteriorMean => "posterior_mean",
            EbKind::Lfsr => "lfsr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbTarget {
    pub kind: EbKind,
    pub x: f64,
}

impl EbTarget {
    pub fn posterior_mean(x: f64) -> Self {
        EbTarget { kind: EbKind::PosteriorMean, x }
    }

    pub fn lfsr(x: f64) -> Self {
        EbTarget { kind: EbKind::Lfsr, x }
    }

    /// The numerator A_G(x) = E[h(mu) phi(x - mu)].
    pub fn numerator(&self) -> LinearFunctional {
        match self.kind {
            EbKind::PosteriorMean => LinearFunctional::PosteriorMeanNumerator(self.x),
            EbKind::Lfsr => LinearFunctional::LfsrNumerator(self.x),
        }
    }

    pub fn denominator(&self) -> LinearFunctional {
        LinearFunctional::MarginalDensityAt(self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LinearFunctional {
    MarginalDensityAt(f64),
    PriorTailProb(f64),
    PriorDensityAt(f64),
    PosteriorMeanNumerator(f64),
    LfsrNumerator(f64),
    /// (A_G(x) - theta_bar F_G(x)) / f_bar
    CalibratedDelta { target: EbTarget, theta_bar: f64, f_bar: f64 },
}

impl LinearFunctional {
    pub fn label(&self) -> String {
        match self {
            LinearFunctional::MarginalDensityAt(x) => format!("marginal_density({x})"),
            LinearFunctional::PriorTailProb(t) => format!("prior_tail({t})"),
            LinearFunctional::PriorDensityAt(x) => format!("prior_density({x})"),
            LinearFunctional::PosteriorMeanNumerator(x) => format!("posterior_mean_numerator({x})"),
            LinearFunctional::LfsrNumerator(x) => format!("lfsr_numerator({x})"),
            LinearFunctional::CalibratedDelta { target, theta_bar, f_bar } => format!(
                "calibrated_delta({}, x={}, theta_bar={theta_bar}, f_bar={f_bar})",
                target.kind.name(),
                target.x
            ),
        }
    }
}

pub fn calibrated_delta_functional(target: EbTarget, theta_bar: f64, f_bar: f64) -> Result<LinearFunctional> {
    if !(f_bar > 0.0 && f_bar.is_finite()) {
        return Err(Error::InvalidInput(format!("pilot density must be positive, got {f_bar}")));
    }
    if !theta_bar.is_finite() {
        return Err(Error::InvalidInput("pilot estimate must be finite".into()));
    }
    Ok(LinearFunctional::CalibratedDelta { target, theta_bar, f_bar })
}

/// theta_G(x) = A_G(x) / F_G(x).
pub fn eb_target_value(prior: &Prior, target: &EbTarget) -> Result<f64> {
    let f = prior.functional_value(&target.denominator())?;
    if !(f > 0.0) {
        return Err(Error::NumericFailure(format!(
            "marginal density vanishes at x = {}",
            target.x
        )));
    }
    let a = prior.functional_value(&target.numerator())?;
    let v = a / f;
    Ok(match target.kind {
        EbKind::Lfsr => v.clamp(0.0, 1.0),
        EbKind::PosteriorMean => v,
    })
}
