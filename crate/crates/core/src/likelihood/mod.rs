//! Classification likelihoods: the Gaussian-noise family (step, probit,
//! logit) and the Gumbel-noise softmax.

pub mod softmax;
pub mod unified;

use serde::{Deserialize, Serialize};

use crate::error::{GpcError, Result};

pub use softmax::{
    gumbel_kl, softmax_elbo_term, softmax_log_p, softmax_p, softmax_predict_mc,
    softmax_predict_mc_stream, softmax_term_with_grad, theta_bound, SoftmaxBoundTerms,
    DEFAULT_PREDICT_SAMPLES,
};
pub use unified::{
    binary_elbo_term, binary_elbo_term_with_grad, binary_predict, delta_stationary,
    multiclass_elbo_term, multiclass_elbo_term_partials, multiclass_predict, multiclass_s,
    multiclass_s_with_grad, NoiseFamily, LOGIT_NOISE, PROBIT_NOISE, STEP_NOISE,
};

/// Likelihood selected by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodKind {
    Step,
    Probit,
    Logit,
    /// Gaussian-noise likelihood with an explicit variance.
    Noise(f64),
    Softmax,
}

impl LikelihoodKind {
    /// Accepts `step`, `probit`, `logit`, `softmax`, or an explicit
    /// variance written as `a=0.5`, `a:0.5` or `0.5`.
    pub fn from_name(name: &str) -> Result<Self> {
        let s = name.trim().to_ascii_lowercase();
        match s.as_str() {
            "step" => return Ok(Self::Step),
            "probit" => return Ok(Self::Probit),
            "logit" => return Ok(Self::Logit),
            "softmax" => return Ok(Self::Softmax),
            _ => {}
        }
        let raw = s
            .strip_prefix("a=")
            .or_else(|| s.strip_prefix("a:"))
            .unwrap_or(&s)
            .trim();
        match raw.parse::<f64>() {
            Ok(a) if a.is_finite() && a >= 0.0 => Ok(Self::Noise(a)),
            _ => Err(GpcError::InvalidArgument(format!(
                "unknown likelihood '{name}' (expected step, probit, logit, softmax or a=<variance>)"
            ))),
        }
    }

    /// Noise variance `a`; `None` for softmax.
    pub fn noise_variance(&self) -> Option<f64> {
        match *self {
            Self::Step => Some(STEP_NOISE),
            Self::Probit => Some(PROBIT_NOISE),
            Self::Logit => Some(LOGIT_NOISE),
            Self::Noise(a) => Some(a),
            Self::Softmax => None,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Self::Step => "step".into(),
            Self::Probit => "probit".into(),
            Self::Logit => "logit".into(),
            Self::Noise(a) => format!("a={a}"),
            Self::Softmax => "softmax".into(),
        }
    }
}
