//! Numerical primitives shared by the rest of the crate.

mod cholesky;
mod dist;
mod kmeans;
mod quadrature;

pub use cholesky::{cholesky_jitter, CholeskyFactor, JITTER_SCHEDULE};
pub use dist::{
    gumbel_cdf, gumbel_pdf, log_std_normal_cdf, logistic_cdf, softplus, std_normal_cdf,
    std_normal_pdf,
};
pub use kmeans::{kmeans, kmeans_fit, KMeansFit};
pub use quadrature::{gauss_hermite, GaussHermiteRule, DEFAULT_ORDER as DEFAULT_QUADRATURE_ORDER};
