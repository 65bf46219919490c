//! Gauss-Hermite quadrature for the weight `e^{-x²}`.
//!
//! Nodes are found by Newton iteration on the orthonormal Hermite
//! recurrence, which keeps the tail weights accurate to full relative
//! precision (an eigenvalue route loses relative accuracy there).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{GpcError, Result};

pub const MAX_ORDER: usize = 128;

/// Default node count for the one-dimensional expectations in the
/// multi-class bound.
pub const DEFAULT_ORDER: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussHermiteRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermiteRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Ascending nodes.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ f(x) e^{-x²} dx`
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `E[f(g)]` for `g ~ N(mean, var)`, via `g = mean + sqrt(2 var) x`.
    pub fn gaussian_expectation(&self, mean: f64, var: f64, f: impl Fn(f64) -> f64) -> f64 {
        let s = (2.0 * var.max(0.0)).sqrt();
        self.integrate(|x| f(mean + s * x)) / PI.sqrt()
    }
}

/// Physicists' Gauss-Hermite rule with `order` nodes (1..=128).
pub fn gauss_hermite(order: usize) -> Result<GaussHermiteRule> {
    if order == 0 || order > MAX_ORDER {
        return Err(GpcError::InvalidArgument(format!(
            "gauss-hermite order must be in 1..={MAX_ORDER}, got {order}"
        )));
    }
    let n = order;
    let nf = n as f64;
    let pim4 = PI.powf(-0.25);
    let half = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];

    // Orthonormal Hermite value p_n(z) and derivative p'_n(z).
    let eval = |z: f64| -> (f64, f64) {
        let mut p1 = pim4;
        let mut p2 = 0.0;
        for j in 1..=n {
            let jf = j as f64;
            let p3 = p2;
            p2 = p1;
            p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
        }
        (p1, (2.0 * nf).sqrt() * p2)
    };

    let mut z = 0.0;
    for i in 0..half {
        // Initial guesses for the largest roots, descending.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut converged = false;
        for _ in 0..200 {
            let (p, dp) = eval(z);
            let step = p / dp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        debug_assert!(converged, "hermite root {i} of order {n} did not converge");
        if n % 2 == 1 && i == half - 1 {
            z = 0.0;
        }
        let (_, dp) = eval(z);
        x[i] = z;
        w[i] = 2.0 / (dp * dp);
        x[n - 1 - i] = -z;
        w[n - 1 - i] = w[i];
    }

    // Stored ascending.
    x.reverse();
    w.reverse();
    Ok(GaussHermiteRule {
        nodes: x,
        weights: w,
    })
}
