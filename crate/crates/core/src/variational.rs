//! Inducing-point variational distributions and the latent marginals they
//! induce.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GpcError, Result};
use crate::kernels::KernelSpec;
use crate::numerics::{cholesky_jitter, CholeskyFactor};

/// Variances below this are treated as round-off.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Inducing locations `Z` (m×d), shared by every latent function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducingSet {
    pub z: DMatrix<f64>,
}

impl InducingSet {
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() == 0 {
            return Err(GpcError::InvalidArgument("inducing set is empty".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(GpcError::InvalidArgument(
                "inducing locations must be finite".into(),
            ));
        }
        Ok(Self { z })
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }
}

/// `q(u) = N(mean, scale scaleᵀ)` with `scale` lower triangular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianVariational {
    pub mean: DVector<f64>,
    pub scale: DMatrix<f64>,
}

impl GaussianVariational {
    pub fn new(mean: DVector<f64>, scale: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if scale.shape() != (m, m) {
            return Err(GpcError::DimensionMismatch(format!(
                "scale is {}x{}, mean has length {m}",
                scale.nrows(),
                scale.ncols()
            )));
        }
        if (0..m).any(|i| scale[(i, i)] <= 0.0) {
            return Err(GpcError::InvalidArgument(
                "scale diagonal must be positive".into(),
            ));
        }
        if (0..m).any(|i| ((i + 1)..m).any(|j| scale[(i, j)] != 0.0)) {
            return Err(GpcError::InvalidArgument(
                "scale must be lower triangular".into(),
            ));
        }
        Ok(Self { mean, scale })
    }

    /// `q(u) = p(u)`: zero mean, scale equal to the prior factor.
    pub fn prior(kmm_chol: &CholeskyFactor) -> Self {
        Self {
            mean: DVector::zeros(kmm_chol.dim()),
            scale: kmm_chol.lower().clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.scale * self.scale.transpose()
    }
}

/// Per-point, per-latent marginal means and variances of q(f).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMarginals {
    /// n×L
    pub mu: DMatrix<f64>,
    /// n×L, clamped at [`VARIANCE_FLOOR`]
    pub var: DMatrix<f64>,
}

impl PredictiveMarginals {
    pub fn num_points(&self) -> usize {
        self.mu.nrows()
    }

    pub fn num_latents(&self) -> usize {
        self.mu.ncols()
    }

    pub fn point(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        (
            self.mu.row(i).iter().copied().collect(),
            self.var.row(i).iter().copied().collect(),
        )
    }
}

/// Factor of `K(Z, Z)`, jittered if needed.
pub fn kmm_cholesky(kernel: &KernelSpec, inducing: &InducingSet) -> Result<CholeskyFactor> {
    let kmm = kernel.kernel_matrix(&inducing.z, &inducing.z)?;
    cholesky_jitter(&kmm, 5)
}

/// Diagonal marginals of q(f) at the rows of `x`:
/// `μ = K_nm K_mm⁻¹ m`, `ν = k_nn + diag(K_nm K_mm⁻¹ (S K_mm⁻¹ − I) K_mn)`.
pub fn q_f_marginals(
    kernel: &KernelSpec,
    inducing: &InducingSet,
    q_u: &GaussianVariational,
    x: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let chol = kmm_cholesky(kernel, inducing)?;
    q_f_marginals_with(kernel, inducing, &chol, q_u, x)
}

/// As [`q_f_marginals`] with a precomputed `K_mm` factor.
pub fn q_f_marginals_with(
    kernel: &KernelSpec,
    inducing: &InducingSet,
    kmm_chol: &CholeskyFactor,
    q_u: &GaussianVariational,
    x: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if q_u.dim() != inducing.len() {
        return Err(GpcError::DimensionMismatch(format!(
            "q(u) has dimension {}, inducing set has {} points",
            q_u.dim(),
            inducing.len()
        )));
    }
    let kmn = kernel.kernel_matrix(&inducing.z, x)?;
    let a = kmm_chol.solve_lower(&kmn);
    let b = kmm_chol.solve_lower_transpose(&a);
    let alpha = kmm_chol.solve_lower_vec(&q_u.mean);
    let mu = a.tr_mul(&alpha);
    let v = q_u.scale.tr_mul(&b);
    let diag = kernel.kernel_diag(x);
    let var = DVector::from_fn(x.nrows(), |i, _| {
        let s = diag[i] - a.column(i).norm_squared() + v.column(i).norm_squared();
        s.max(VARIANCE_FLOOR)
    });
    Ok((mu, var))
}

/// `KL(q(u) ‖ N(0, K_mm))` given the factor of `K_mm`:
/// `½ (log|K|/|S| − m + tr(K⁻¹S) + mᵀK⁻¹m)`.
pub fn kl_gaussian(q_u: &GaussianVariational, kmm_chol: &CholeskyFactor) -> f64 {
    let m = q_u.dim() as f64;
    let log_det_s: f64 = 2.0 * q_u.scale.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace = kmm_chol.solve_lower(&q_u.scale).norm_squared();
    let maha = kmm_chol.solve_lower_vec(&q_u.mean).norm_squared();
    0.5 * (kmm_chol.log_det() - log_det_s - m + trace + maha)
}
