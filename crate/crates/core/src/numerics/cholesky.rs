use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{GpcError, Result};

/// Multipliers of `mean(diag(A))` tried in order when factorizing.
pub const JITTER_SCHEDULE: [f64; 5] = [0.0, 1e-8, 1e-6, 1e-4, 1e-2];

/// Lower Cholesky factor of `A + jitter_used * I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
    jitter_used: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn into_lower(self) -> DMatrix<f64> {
        self.lower
    }

    /// `L⁻¹ B`
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `L⁻ᵀ B`
    pub fn solve_lower_transpose(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lower
            .tr_solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `(L Lᵀ)⁻¹ B`
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.solve_lower_transpose(&self.solve_lower(b))
    }

    /// `log |L Lᵀ|`
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Factorizes a symmetric matrix, escalating diagonal jitter through
/// [`JITTER_SCHEDULE`] (scaled by the mean diagonal) until it succeeds.
pub fn cholesky_jitter(a: &DMatrix<f64>, max_attempts: usize) -> Result<CholeskyFactor> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(GpcError::DimensionMismatch(format!(
            "cholesky needs a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(GpcError::Factorization {
            attempts: 0,
            last_jitter: 0.0,
        });
    }
    let mean_diag = a.diagonal().mean();
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let attempts = max_attempts.clamp(1, JITTER_SCHEDULE.len());

    let mut last_jitter = 0.0;
    for &mult in &JITTER_SCHEDULE[..attempts] {
        let jitter = mult * scale;
        last_jitter = jitter;
        let mut shifted = a.clone();
        if jitter > 0.0 {
            for i in 0..n {
                shifted[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(shifted) {
            let lower = chol.unpack();
            if lower.diagonal().iter().all(|&d| d > 0.0 && d.is_finite()) {
                return Ok(CholeskyFactor {
                    lower,
                    jitter_used: jitter,
                });
            }
        }
    }
    Err(GpcError::Factorization {
        attempts,
        last_jitter,
    })
}
