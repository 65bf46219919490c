//! Stationary isotropic covariance functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GpcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `σ² exp(-r²/(2ℓ²))`
    Rbf {
        lengthscale: f64,
        variance: f64,
    },
    /// `σ² (1 + √3 r/ℓ) exp(-√3 r/ℓ)`
    Matern32 {
        lengthscale: f64,
        variance: f64,
    },
    /// `σ² (1 + √5 r/ℓ + 5r²/(3ℓ²)) exp(-√5 r/ℓ)`
    Matern52 {
        lengthscale: f64,
        variance: f64,
    },
    Sum {
        children: Vec<KernelSpec>,
    },
}

/// Kernel value `k` and `h = (1/r) dk/dr` at one squared distance.
#[derive(Debug, Clone, Copy)]
struct Radial {
    k: f64,
    h: f64,
}

impl KernelSpec {
    pub fn rbf(lengthscale: f64, variance: f64) -> Self {
        KernelSpec::Rbf {
            lengthscale,
            variance,
        }
    }

    pub fn matern32(lengthscale: f64, variance: f64) -> Self {
        KernelSpec::Matern32 {
            lengthscale,
            variance,
        }
    }

    pub fn matern52(lengthscale: f64, variance: f64) -> Self {
        KernelSpec::Matern52 {
            lengthscale,
            variance,
        }
    }

    pub fn sum(children: Vec<KernelSpec>) -> Self {
        KernelSpec::Sum { children }
    }

    /// Builds a single-family kernel from its config name.
    pub fn from_name(name: &str, lengthscale: f64, variance: f64) -> Result<Self> {
        let spec = match name.to_ascii_lowercase().as_str() {
            "rbf" => Self::rbf(lengthscale, variance),
            "matern32" => Self::matern32(lengthscale, variance),
            "matern52" => Self::matern52(lengthscale, variance),
            other => {
                return Err(GpcError::InvalidArgument(format!(
                    "unknown kernel family '{other}' (expected rbf, matern32, matern52)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Sum { children } => {
                if children.len() < 2 {
                    return Err(GpcError::InvalidArgument(
                        "sum kernel needs at least two children".into(),
                    ));
                }
                children.iter().try_for_each(KernelSpec::validate)
            }
            KernelSpec::Rbf {
                lengthscale,
                variance,
            }
            | KernelSpec::Matern32 {
                lengthscale,
                variance,
            }
            | KernelSpec::Matern52 {
                lengthscale,
                variance,
            } => {
                let ok = |v: &f64| v.is_finite() && *v > 0.0;
                if ok(lengthscale) && ok(variance) {
                    Ok(())
                } else {
                    Err(GpcError::InvalidArgument(format!(
                        "kernel lengthscale and variance must be positive, got {lengthscale}, {variance}"
                    )))
                }
            }
        }
    }

    /// Number of unconstrained parameters (two logs per leaf).
    pub fn num_params(&self) -> usize {
        match self {
            KernelSpec::Sum { children } => children.iter().map(KernelSpec::num_params).sum(),
            _ => 2,
        }
    }

    /// `[log ℓ, log σ²]` per leaf, depth first.
    pub fn log_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.push_log_params(&mut out);
        out
    }

    fn push_log_params(&self, out: &mut Vec<f64>) {
        match self {
            KernelSpec::Sum { children } => children.iter().for_each(|c| c.push_log_params(out)),
            KernelSpec::Rbf {
                lengthscale,
                variance,
            }
            | KernelSpec::Matern32 {
                lengthscale,
                variance,
            }
            | KernelSpec::Matern52 {
                lengthscale,
                variance,
            } => {
                out.push(lengthscale.ln());
                out.push(variance.ln());
            }
        }
    }

    /// Same structure with parameters replaced from a log vector.
    pub fn with_log_params(&self, logs: &[f64]) -> KernelSpec {
        assert_eq!(logs.len(), self.num_params(), "kernel parameter count");
        let mut it = logs.iter().copied();
        self.rebuild(&mut it)
    }

    fn rebuild(&self, it: &mut impl Iterator<Item = f64>) -> KernelSpec {
        if let KernelSpec::Sum { children } = self {
            return KernelSpec::Sum {
                children: children.iter().map(|c| c.rebuild(it)).collect(),
            };
        }
        let l = it.next().expect("parameter count checked").exp();
        let v = it.next().expect("parameter count checked").exp();
        match self {
            KernelSpec::Rbf { .. } => Self::rbf(l, v),
            KernelSpec::Matern32 { .. } => Self::matern32(l, v),
            KernelSpec::Matern52 { .. } => Self::matern52(l, v),
            KernelSpec::Sum { .. } => unreachable!(),
        }
    }

    /// `k(x, x)` for any x.
    pub fn prior_variance(&self) -> f64 {
        match self {
            KernelSpec::Sum { children } => children.iter().map(KernelSpec::prior_variance).sum(),
            KernelSpec::Rbf { variance, .. }
            | KernelSpec::Matern32 { variance, .. }
            | KernelSpec::Matern52 { variance, .. } => *variance,
        }
    }

    fn radial(&self, r2: f64) -> Radial {
        match *self {
            KernelSpec::Rbf {
                lengthscale,
                variance,
            } => {
                let l2 = lengthscale * lengthscale;
                let k = variance * (-0.5 * r2 / l2).exp();
                Radial { k, h: -k / l2 }
            }
            KernelSpec::Matern32 {
                lengthscale,
                variance,
            } => {
                let s = 3f64.sqrt() * r2.sqrt() / lengthscale;
                let e = (-s).exp();
                Radial {
                    k: variance * (1.0 + s) * e,
                    h: -3.0 * variance / (lengthscale * lengthscale) * e,
                }
            }
            KernelSpec::Matern52 {
                lengthscale,
                variance,
            } => {
                let s = 5f64.sqrt() * r2.sqrt() / lengthscale;
                let e = (-s).exp();
                Radial {
                    k: variance * (1.0 + s + s * s / 3.0) * e,
                    h: -5.0 * variance / (3.0 * lengthscale * lengthscale) * (1.0 + s) * e,
                }
            }
            KernelSpec::Sum { ref children } => {
                children.iter().fold(Radial { k: 0.0, h: 0.0 }, |acc, c| {
                    let r = c.radial(r2);
                    Radial {
                        k: acc.k + r.k,
                        h: acc.h + r.h,
                    }
                })
            }
        }
    }

    /// Accumulates `bar * d k / d log-params` for one entry into `out`.
    fn push_param_grads(&self, r2: f64, bar: f64, out: &mut [f64]) -> usize {
        match self {
            KernelSpec::Sum { children } => {
                let mut off = 0;
                for c in children {
                    off += c.push_param_grads(r2, bar, &mut out[off..]);
                }
                off
            }
            _ => {
                let r = self.radial(r2);
                // k depends on r/ℓ, so dk/dlogℓ = -r dk/dr = -h r²
                out[0] += bar * (-r.h * r2);
                out[1] += bar * r.k;
                2
            }
        }
    }

    /// Covariance between two point sets.
    pub fn kernel_matrix(&self, x: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != x2.ncols() {
            return Err(GpcError::DimensionMismatch(format!(
                "kernel inputs have {} and {} columns",
                x.ncols(),
                x2.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x2.nrows(), |i, j| {
            self.radial(sq_dist(x, i, x2, j)).k
        }))
    }

    /// Diagonal of `kernel_matrix(x, x)`.
    pub fn kernel_diag(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_element(x.nrows(), self.prior_variance())
    }

    /// Reverse-mode product of the kernel matrix: given `bar = ∂F/∂K`,
    /// returns `(∂F/∂x, ∂F/∂x2, ∂F/∂log-params)`.
    pub fn kernel_matrix_vjp(
        &self,
        x: &DMatrix<f64>,
        x2: &DMatrix<f64>,
        bar: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
        let d = x.ncols();
        let mut gx = DMatrix::zeros(x.nrows(), d);
        let mut gx2 = DMatrix::zeros(x2.nrows(), d);
        let mut gp = vec![0.0; self.num_params()];
        for j in 0..x2.nrows() {
            for i in 0..x.nrows() {
                let b = bar[(i, j)];
                if b == 0.0 {
                    continue;
                }
                let r2 = sq_dist(x, i, x2, j);
                let h = self.radial(r2).h;
                for c in 0..d {
                    let g = b * h * (x[(i, c)] - x2[(j, c)]);
                    gx[(i, c)] += g;
                    gx2[(j, c)] -= g;
                }
                self.push_param_grads(r2, b, &mut gp);
            }
        }
        (gx, gx2, gp)
    }

    /// `∂(Σ bar_i k(x_i, x_i)) / ∂log-params`
    pub fn kernel_diag_vjp(&self, bar_sum: f64) -> Vec<f64> {
        let mut gp = vec![0.0; self.num_params()];
        self.push_param_grads(0.0, bar_sum, &mut gp);
        gp
    }
}

fn sq_dist(x: &DMatrix<f64>, i: usize, x2: &DMatrix<f64>, j: usize) -> f64 {
    (0..x.ncols())
        .map(|c| {
            let d = x[(i, c)] - x2[(j, c)];
            d * d
        })
        .sum()
}
