//! Gaussian additive-noise likelihoods.
//!
//! The latent `f` is observed through `g = f + ε`, `ε ~ N(0, a)`, and a step
//! function with label-flip probability δ. `a = 0` is the step likelihood,
//! `a = 1` probit, and `a = 2.897` a close Gaussian surrogate of the logit.

use serde::{Deserialize, Serialize};

use crate::error::{GpcError, Result};
use crate::numerics::{std_normal_cdf, std_normal_pdf, GaussHermiteRule};

pub const STEP_NOISE: f64 = 0.0;
pub const PROBIT_NOISE: f64 = 1.0;
pub const LOGIT_NOISE: f64 = 2.897;

/// Default initial flip probability.
pub const DEFAULT_DELTA: f64 = 1e-3;

const BINARY_DELTA_MAX: f64 = 0.25;

/// Noise variance `a` (fixed) and flip probability `δ ∈ (0, δ_max)`.
///
/// `δ = δ_max · sigmoid(ρ)`; the optimizer only ever sees `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFamily {
    a: f64,
    delta: f64,
    delta_max: f64,
    pub trainable_delta: bool,
}

impl NoiseFamily {
    pub fn binary(a: f64, delta: f64) -> Result<Self> {
        Self::with_max(a, delta, BINARY_DELTA_MAX)
    }

    pub fn multiclass(a: f64, delta: f64, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(GpcError::InvalidArgument(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        let c = num_classes as f64;
        Self::with_max(a, delta, BINARY_DELTA_MAX.min((c - 1.0) / c))
    }

    fn with_max(a: f64, delta: f64, delta_max: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(GpcError::InvalidArgument(format!(
                "noise variance must be finite and nonnegative, got {a}"
            )));
        }
        if !(delta > 0.0 && delta < delta_max) {
            return Err(GpcError::InvalidArgument(format!(
                "delta must lie in (0, {delta_max}), got {delta}"
            )));
        }
        Ok(Self {
            a,
            delta,
            delta_max,
            trainable_delta: true,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn delta_max(&self) -> f64 {
        self.delta_max
    }

    /// Unconstrained coordinate of δ.
    pub fn rho(&self) -> f64 {
        let s = self.delta / self.delta_max;
        (s / (1.0 - s)).ln()
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        let mut out = self.clone();
        out.delta = self.delta_max * crate::numerics::logistic_cdf(rho);
        // keep δ strictly inside the open interval when sigmoid saturates
        out.delta = out
            .delta
            .clamp(f64::MIN_POSITIVE, self.delta_max * (1.0 - f64::EPSILON));
        out
    }

    /// `dδ/dρ` at the current value.
    pub fn ddelta_drho(&self) -> f64 {
        let s = self.delta / self.delta_max;
        self.delta_max * s * (1.0 - s)
    }
}

/// Value and partials of the binary per-point term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryTermGrad {
    pub value: f64,
    pub d_mu: f64,
    pub d_var: f64,
    pub d_delta: f64,
}

/// `log((1−δ)/δ)·Φ(y·μ/√(a+ν)) + log δ` for `y ∈ {−1, +1}`.
pub fn binary_elbo_term(y: f64, mu: f64, var: f64, nf: &NoiseFamily) -> f64 {
    binary_elbo_term_with_grad(y, mu, var, nf).value
}

pub fn binary_elbo_term_with_grad(y: f64, mu: f64, var: f64, nf: &NoiseFamily) -> BinaryTermGrad {
    let d = nf.delta;
    let s2 = nf.a + var;
    let s = s2.sqrt();
    let t = y * mu / s;
    let cdf = std_normal_cdf(t);
    let pdf = std_normal_pdf(t);
    let log_odds = ((1.0 - d) / d).ln();
    BinaryTermGrad {
        value: log_odds * cdf + d.ln(),
        d_mu: log_odds * pdf * y / s,
        d_var: -log_odds * pdf * t / (2.0 * s2),
        d_delta: 1.0 / d - cdf / (d * (1.0 - d)),
    }
}

/// `p(y = +1) = (1 − 2δ)·Φ(μ/√(a+ν)) + δ`.
pub fn binary_predict(mu_star: f64, var_star: f64, nf: &NoiseFamily) -> f64 {
    let d = nf.delta;
    let p = (1.0 - 2.0 * d) * std_normal_cdf(mu_star / (nf.a + var_star).sqrt()) + d;
    p.clamp(d, 1.0 - d)
}

/// `δ* = 1 − mean Φ(y·μ/√(a+ν))`, the stationary point of the binary data
/// term in δ.
pub fn delta_stationary(mu: &[f64], var: &[f64], y: &[f64], nf: &NoiseFamily) -> f64 {
    let n = mu.len();
    let total: f64 = (0..n)
        .map(|i| std_normal_cdf(y[i] * mu[i] / (nf.a + var[i]).sqrt()))
        .sum();
    1.0 - total / n as f64
}

/// Probability that class `y` has the largest noisy latent:
/// `E_{g ~ N(μ_y, a+ν_y)} ∏_{c≠y} Φ((g − μ_c)/√(a+ν_c))`.
pub fn multiclass_s(y: usize, mu: &[f64], var: &[f64], a: f64, rule: &GaussHermiteRule) -> f64 {
    s_impl(y, mu, var, a, rule, None)
}

/// [`multiclass_s`] together with `∂S/∂μ_c` and `∂S/∂ν_c`.
pub fn multiclass_s_with_grad(
    y: usize,
    mu: &[f64],
    var: &[f64],
    a: f64,
    rule: &GaussHermiteRule,
) -> (f64, Vec<f64>, Vec<f64>) {
    let c = mu.len();
    let mut d_mu = vec![0.0; c];
    let mut d_var = vec![0.0; c];
    let s = s_impl(y, mu, var, a, rule, Some((&mut d_mu, &mut d_var)));
    (s, d_mu, d_var)
}

fn s_impl(
    y: usize,
    mu: &[f64],
    var: &[f64],
    a: f64,
    rule: &GaussHermiteRule,
    mut grad: Option<(&mut Vec<f64>, &mut Vec<f64>)>,
) -> f64 {
    let c_total = mu.len();
    let sd_y = (a + var[y]).sqrt();
    let sd: Vec<f64> = var.iter().map(|v| (a + v).sqrt()).collect();
    let norm = std::f64::consts::PI.sqrt().recip();
    let others: Vec<usize> = (0..c_total).filter(|&c| c != y).collect();
    let k = others.len();

    let mut z = vec![0.0; k];
    let mut cdf = vec![0.0; k];
    let mut prefix = vec![1.0; k + 1];
    let mut suffix = vec![1.0; k + 1];
    let mut total = 0.0;

    for (&t, &w) in rule.nodes().iter().zip(rule.weights().iter()) {
        let g = mu[y] + std::f64::consts::SQRT_2 * sd_y * t;
        for (j, &c) in others.iter().enumerate() {
            z[j] = (g - mu[c]) / sd[c];
            cdf[j] = std_normal_cdf(z[j]);
        }
        for j in 0..k {
            prefix[j + 1] = prefix[j] * cdf[j];
        }
        for j in (0..k).rev() {
            suffix[j] = suffix[j + 1] * cdf[j];
        }
        let wn = w * norm;
        total += wn * prefix[k];

        if let Some((d_mu, d_var)) = grad.as_mut() {
            // ∂g/∂ν_y = √2·t / (2·sd_y)
            let dg_dvar_y = std::f64::consts::SQRT_2 * t / (2.0 * sd_y);
            for (j, &c) in others.iter().enumerate() {
                let dp_dz = wn * prefix[j] * suffix[j + 1] * std_normal_pdf(z[j]);
                d_mu[y] += dp_dz / sd[c];
                d_var[y] += dp_dz * dg_dvar_y / sd[c];
                d_mu[c] -= dp_dz / sd[c];
                d_var[c] -= dp_dz * z[j] / (2.0 * sd[c] * sd[c]);
            }
        }
    }
    total
}

/// `log(1−δ)·S + log(δ/(C−1))·(1−S)`.
pub fn multiclass_elbo_term(s: f64, delta: f64, num_classes: usize) -> f64 {
    let off = (delta / (num_classes as f64 - 1.0)).ln();
    (1.0 - delta).ln() * s + off * (1.0 - s)
}

/// `(∂/∂S, ∂/∂δ)` of [`multiclass_elbo_term`].
pub fn multiclass_elbo_term_partials(s: f64, delta: f64, num_classes: usize) -> (f64, f64) {
    let off = (delta / (num_classes as f64 - 1.0)).ln();
    (
        (1.0 - delta).ln() - off,
        -s / (1.0 - delta) + (1.0 - s) / delta,
    )
}

/// Class probabilities `(1−δ)S_c + δ/(C−1)·(1−S_c)` for every candidate `c`.
///
/// The exact `S_c` sum to one; the quadrature values are rescaled so they
/// do, which makes the output a distribution regardless of rule order.
pub fn multiclass_predict(
    mu_star: &[f64],
    var_star: &[f64],
    nf: &NoiseFamily,
    rule: &GaussHermiteRule,
) -> Vec<f64> {
    let c_total = mu_star.len();
    let d = nf.delta;
    let off = d / (c_total as f64 - 1.0);
    let s: Vec<f64> = (0..c_total)
        .map(|c| multiclass_s(c, mu_star, var_star, nf.a, rule).max(0.0))
        .collect();
    let total: f64 = s.iter().sum();
    s.iter()
        .map(|&sc| {
            let sc = (sc / total).min(1.0);
            (1.0 - d) * sc + off * (1.0 - sc)
        })
        .collect()
}
