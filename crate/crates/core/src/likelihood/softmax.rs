//! Softmax likelihood through Gumbel additive noise.
//!
//! With the auxiliary Gumbel location `log θ_i` substituted at its optimum
//! `θ* = P + 1`, each point contributes `−log(1 + P_i)` where
//! `P_i = exp(ν_y/2 − μ_y) Σ_{c≠y} exp(ν_c/2 + μ_c)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::softplus;

pub const DEFAULT_PREDICT_SAMPLES: usize = 1000;

/// Per-point bound pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxBoundTerms {
    pub p: f64,
    /// `p + 1`
    pub theta_opt: f64,
    /// `−log(1 + p)`
    pub term: f64,
}

impl SoftmaxBoundTerms {
    pub fn new(y: usize, mu: &[f64], var: &[f64]) -> Self {
        let log_p = softmax_log_p(y, mu, var);
        let p = log_p.exp();
        Self {
            p,
            theta_opt: p + 1.0,
            term: -softplus(log_p),
        }
    }
}

/// `log P = ν_y/2 − μ_y + logsumexp_{c≠y}(ν_c/2 + μ_c)`.
pub fn softmax_log_p(y: usize, mu: &[f64], var: &[f64]) -> f64 {
    let max = (0..mu.len())
        .filter(|&c| c != y)
        .map(|c| 0.5 * var[c] + mu[c])
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = (0..mu.len())
        .filter(|&c| c != y)
        .map(|c| (0.5 * var[c] + mu[c] - max).exp())
        .sum();
    0.5 * var[y] - mu[y] + max + sum.ln()
}

pub fn softmax_p(y: usize, mu: &[f64], var: &[f64]) -> f64 {
    softmax_log_p(y, mu, var).exp()
}

/// `−log1p(P)`.
pub fn softmax_elbo_term(p: f64) -> f64 {
    -p.ln_1p()
}

/// Per-point term `−softplus(log P)` with partials in μ and ν.
pub fn softmax_term_with_grad(y: usize, mu: &[f64], var: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let c_total = mu.len();
    let log_p = softmax_log_p(y, mu, var);
    // ∂term/∂log P = −P/(1+P)
    let outer = -crate::numerics::logistic_cdf(log_p);
    let max = (0..c_total)
        .filter(|&c| c != y)
        .map(|c| 0.5 * var[c] + mu[c])
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = (0..c_total)
        .map(|c| {
            if c == y {
                0.0
            } else {
                (0.5 * var[c] + mu[c] - max).exp()
            }
        })
        .collect();
    let wsum: f64 = w.iter().sum();
    let mut d_mu = vec![0.0; c_total];
    let mut d_var = vec![0.0; c_total];
    for c in 0..c_total {
        if c == y {
            d_mu[c] = -outer;
            d_var[c] = 0.5 * outer;
        } else {
            d_mu[c] = outer * w[c] / wsum;
            d_var[c] = 0.5 * outer * w[c] / wsum;
        }
    }
    (-softplus(log_p), d_mu, d_var)
}

/// Bound before substituting θ: `−P/θ − log θ − 1/θ + 1`.
pub fn theta_bound(p: f64, theta: f64) -> f64 {
    -p / theta - theta.ln() - 1.0 / theta + 1.0
}

/// `KL(Gumbel(log θ, 1) ‖ Gumbel(0, 1)) = log θ + 1/θ − 1`.
pub fn gumbel_kl(theta: f64) -> f64 {
    theta.ln() + 1.0 / theta - 1.0
}

fn softmax_into(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Mean of `softmax(μ + √ν ∘ t)` over `n_samples` standard-normal draws `t`.
pub fn softmax_predict_mc(
    mu_star: &[f64],
    var_star: &[f64],
    n_samples: usize,
    seed: u64,
) -> Vec<f64> {
    softmax_predict_mc_stream(mu_star, var_star, n_samples, seed, 0)
}

/// As [`softmax_predict_mc`], drawing from stream `stream` of the seeded
/// generator so points can be sampled independently of evaluation order.
pub fn softmax_predict_mc_stream(
    mu_star: &[f64],
    var_star: &[f64],
    n_samples: usize,
    seed: u64,
    stream: u64,
) -> Vec<f64> {
    let c = mu_star.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let sd: Vec<f64> = var_star.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut x = vec![0.0; c];
    let mut p = vec![0.0; c];
    let mut acc = vec![0.0; c];
    for _ in 0..n_samples.max(1) {
        for k in 0..c {
            let t: f64 = StandardNormal.sample(&mut rng);
            x[k] = mu_star[k] + sd[k] * t;
        }
        softmax_into(&x, &mut p);
        for k in 0..c {
            acc[k] += p[k];
        }
    }
    let total: f64 = acc.iter().sum();
    acc.iter().map(|v| v / total).collect()
}
