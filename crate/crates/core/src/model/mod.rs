//! Trainable classifiers: state, parameter layout, the full bound, the
//! optimizer and the training loop.

mod adam;
mod checkpoint;
mod elbo;
mod predict;
mod train;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::{pack_lower, packed_len, unpack_lower};
use crate::error::{GpcError, Result};
use crate::kernels::KernelSpec;
use crate::likelihood::{LikelihoodKind, NoiseFamily};
use crate::variational::{kmm_cholesky, GaussianVariational, InducingSet};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use elbo::{elbo, elbo_grad, elbo_terms, ElboGrad, ElboTerms};
pub use predict::{marginals, predict, Prediction};
pub use train::{fit, fit_gradient_ascent, init_inducing, TraceRecord, TrainConfig, TrainTrace};

/// Initial `q(u)` scale as a multiple of `chol(K_mm)`.
pub const INIT_SCALE_FACTOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// One latent function, labels ±1.
    Binary,
    /// C ≥ 3 latent functions under a Gaussian-noise likelihood.
    MulticlassUnified,
    /// C ≥ 3 latent functions under the Gumbel-noise softmax.
    Softmax,
}

impl Task {
    /// Picks the task for a likelihood and class count; two classes always
    /// go to the binary model, and softmax needs at least three.
    pub fn for_problem(likelihood: LikelihoodKind, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(GpcError::InvalidArgument(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        match likelihood {
            LikelihoodKind::Softmax if num_classes < 3 => Err(GpcError::InvalidArgument(format!(
                "the softmax likelihood needs multi-class data (C >= 3), got C = {num_classes}"
            ))),
            LikelihoodKind::Softmax => Ok(Task::Softmax),
            _ if num_classes == 2 => Ok(Task::Binary),
            _ => Ok(Task::MulticlassUnified),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::MulticlassUnified => "multiclass-unified",
            Task::Softmax => "softmax",
        }
    }
}

/// Whether latent functions share one kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelSharing {
    #[default]
    Shared,
    PerClass,
}

/// Full trainable state of a classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub task: Task,
    pub num_classes: usize,
    /// One entry when shared, otherwise one per latent function.
    pub kernels: Vec<KernelSpec>,
    pub inducing: InducingSet,
    /// One per latent function.
    pub q_u: Vec<GaussianVariational>,
    /// `None` exactly for [`Task::Softmax`].
    pub noise: Option<NoiseFamily>,
    pub n_total: usize,
}

/// Where each parameter block sits in the flat unconstrained vector.
///
/// Order: kernel log-hyperparameters, `Z` row-major, then per latent the
/// mean followed by the packed scale (row-major lower triangle, log
/// diagonal), then `ρ` of δ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub kernels: Vec<Range<usize>>,
    pub inducing: Range<usize>,
    pub means: Vec<Range<usize>>,
    pub scales: Vec<Range<usize>>,
    pub rho: Option<usize>,
    pub len: usize,
}

impl ParamLayout {
    /// Human-readable name of entry `i`, e.g. `q_u[2].scale[4]`.
    pub fn name(&self, i: usize) -> String {
        let find = |rs: &[Range<usize>], what: &str| {
            rs.iter()
                .enumerate()
                .find(|(_, r)| r.contains(&i))
                .map(|(k, r)| format!("{what}[{k}][{}]", i - r.start))
        };
        if let Some(s) = find(&self.kernels, "kernel") {
            return s;
        }
        if self.inducing.contains(&i) {
            return format!("z[{}]", i - self.inducing.start);
        }
        if let Some(s) = find(&self.means, "mean") {
            return s;
        }
        if let Some(s) = find(&self.scales, "scale") {
            return s;
        }
        if self.rho == Some(i) {
            return "rho".into();
        }
        format!("param[{i}]")
    }
}

impl ModelState {
    /// A fresh model: `q(u)` mean 0 and scale `0.1·chol(K_mm)` for every
    /// latent, δ at `delta` for the Gaussian-noise likelihoods.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        likelihood: LikelihoodKind,
        num_classes: usize,
        kernel: KernelSpec,
        sharing: KernelSharing,
        inducing: InducingSet,
        delta: f64,
        n_total: usize,
    ) -> Result<Self> {
        kernel.validate()?;
        if n_total == 0 {
            return Err(GpcError::InvalidArgument("n_total must be positive".into()));
        }
        let task = Task::for_problem(likelihood, num_classes)?;
        let latents = if task == Task::Binary { 1 } else { num_classes };
        let kernels = match sharing {
            KernelSharing::Shared => vec![kernel],
            KernelSharing::PerClass => vec![kernel; latents],
        };
        let noise = match (task, likelihood.noise_variance()) {
            (Task::Softmax, _) | (_, None) => None,
            (Task::Binary, Some(a)) => Some(NoiseFamily::binary(a, delta)?),
            (_, Some(a)) => Some(NoiseFamily::multiclass(a, delta, num_classes)?),
        };
        let mut q_u = Vec::with_capacity(latents);
        for c in 0..latents {
            let k = &kernels[if kernels.len() == 1 { 0 } else { c }];
            let chol = kmm_cholesky(k, &inducing)?;
            q_u.push(GaussianVariational {
                mean: DVector::zeros(inducing.len()),
                scale: chol.lower() * INIT_SCALE_FACTOR,
            });
        }
        let model = Self {
            task,
            num_classes,
            kernels,
            inducing,
            q_u,
            noise,
            n_total,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn num_latents(&self) -> usize {
        self.q_u.len()
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inducing.dim()
    }

    /// Number of columns in a predictive probability matrix.
    pub fn num_outputs(&self) -> usize {
        self.num_classes
    }

    pub fn kernel_for(&self, latent: usize) -> &KernelSpec {
        &self.kernels[if self.kernels.len() == 1 { 0 } else { latent }]
    }

    /// Index into `kernels` used by `latent`.
    pub fn kernel_index(&self, latent: usize) -> usize {
        if self.kernels.len() == 1 {
            0
        } else {
            latent
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = if self.task == Task::Binary {
            1
        } else {
            self.num_classes
        };
        match self.task {
            Task::Binary if self.num_classes != 2 => {
                return Err(GpcError::InvalidArgument(
                    "the binary task needs exactly 2 classes".into(),
                ))
            }
            Task::MulticlassUnified | Task::Softmax if self.num_classes < 3 => {
                return Err(GpcError::InvalidArgument(
                    "multi-class tasks need at least 3 classes".into(),
                ))
            }
            _ => {}
        }
        if self.q_u.len() != expected {
            return Err(GpcError::DimensionMismatch(format!(
                "{} task needs {expected} latent functions, found {}",
                self.task.name(),
                self.q_u.len()
            )));
        }
        if self.kernels.len() != 1 && self.kernels.len() != expected {
            return Err(GpcError::DimensionMismatch(format!(
                "expected 1 or {expected} kernels, found {}",
                self.kernels.len()
            )));
        }
        for k in &self.kernels {
            k.validate()?;
        }
        let m = self.inducing.len();
        for q in &self.q_u {
            GaussianVariational::new(q.mean.clone(), q.scale.clone())?;
            if q.dim() != m {
                return Err(GpcError::DimensionMismatch(format!(
                    "q(u) has dimension {}, inducing set has {m} points",
                    q.dim()
                )));
            }
        }
        if (self.task == Task::Softmax) != self.noise.is_none() {
            return Err(GpcError::InvalidArgument(
                "a noise family is required exactly for the Gaussian-noise tasks".into(),
            ));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let kernels = self.kernels.iter().map(|k| take(k.num_params())).collect();
        let inducing = take(self.inducing.z.len());
        let m = self.num_inducing();
        let mut means = Vec::new();
        let mut scales = Vec::new();
        for _ in 0..self.num_latents() {
            means.push(take(m));
            scales.push(take(packed_len(m)));
        }
        let rho = self.noise.as_ref().map(|_| take(1).start);
        ParamLayout {
            kernels,
            inducing,
            means,
            scales,
            rho,
            len: at,
        }
    }

    /// Flat unconstrained parameter vector in [`ParamLayout`] order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout().len);
        for k in &self.kernels {
            out.extend(k.log_params());
        }
        let z = &self.inducing.z;
        for i in 0..z.nrows() {
            out.extend(z.row(i).iter());
        }
        for q in &self.q_u {
            out.extend(q.mean.iter());
            out.extend(pack_lower(&q.scale));
        }
        if let Some(nf) = &self.noise {
            out.push(nf.rho());
        }
        out
    }

    /// Inverse of [`ModelState::params`].
    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        let layout = self.layout();
        if p.len() != layout.len {
            return Err(GpcError::DimensionMismatch(format!(
                "parameter vector has length {}, model needs {}",
                p.len(),
                layout.len
            )));
        }
        let mut out = self.clone();
        for (k, r) in out.kernels.iter_mut().zip(&layout.kernels) {
            *k = k.with_log_params(&p[r.clone()]);
        }
        let (m, d) = self.inducing.z.shape();
        out.inducing.z = DMatrix::from_row_slice(m, d, &p[layout.inducing.clone()]);
        for (c, q) in out.q_u.iter_mut().enumerate() {
            q.mean = DVector::from_column_slice(&p[layout.means[c].clone()]);
            q.scale = unpack_lower(&p[layout.scales[c].clone()]);
        }
        if let (Some(nf), Some(i)) = (out.noise.as_mut(), layout.rho) {
            *nf = nf.with_rho(p[i]);
        }
        Ok(out)
    }

    /// Sets every `q(u)` to its prior `N(0, K_mm)`.
    pub fn reset_to_prior(&mut self) -> Result<()> {
        for c in 0..self.num_latents() {
            let chol = kmm_cholesky(self.kernel_for(c), &self.inducing)?;
            self.q_u[c] = GaussianVariational::prior(&chol);
        }
        Ok(())
    }

    /// Checks that `x` and 0-based `classes` fit this model.
    pub fn check_data(&self, x: &DMatrix<f64>, classes: &[usize]) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(GpcError::DimensionMismatch(format!(
                "data has {} features, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.nrows() != classes.len() {
            return Err(GpcError::DimensionMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                classes.len()
            )));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c >= self.num_classes) {
            return Err(GpcError::InvalidArgument(format!(
                "class index {bad} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }
}
