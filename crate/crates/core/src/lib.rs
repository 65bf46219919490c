//! Sparse variational Gaussian-process classification with additive-noise
//! likelihoods.
//!
//! Binary and multi-class classifiers under step, probit and logit
//! likelihoods share one closed-form bound, parametrized by the variance
//! `a` of a Gaussian error added to each latent function. A separate
//! softmax classifier uses Gumbel errors and the bound `-Σ log(1 + P_i)`.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod kernels;
pub mod likelihood;
pub mod model;
pub mod numerics;
pub mod variational;

pub use error::{GpcError, Result};
pub use kernels::KernelSpec;
