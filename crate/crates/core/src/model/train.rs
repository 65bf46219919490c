use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::elbo::elbo_grad;
use super::ModelState;
use crate::data::Dataset;
use crate::error::{GpcError, Result};
use crate::numerics::{gauss_hermite, kmeans, DEFAULT_QUADRATURE_ORDER};
use crate::variational::InducingSet;

/// Minibatch size used when none is given; smaller datasets go full batch.
pub const DEFAULT_BATCH_SIZE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    /// `None` means `min(1024, n)`.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub quadrature_order: usize,
    /// A trace record is kept at iteration 1, every `trace_every`
    /// iterations, and at the last one.
    pub trace_every: usize,
    pub train_kernel: bool,
    pub train_inducing: bool,
    /// Also requires the noise family's own `trainable_delta`.
    pub train_delta: bool,
    /// When false the trace stores 0 for wall time, keeping traces
    /// byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            iterations: 5000,
            batch_size: None,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            seed: 0,
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            trace_every: 100,
            train_kernel: true,
            train_inducing: true,
            train_delta: true,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn effective_batch_size(&self, n: usize) -> usize {
        self.batch_size.unwrap_or(DEFAULT_BATCH_SIZE.min(n))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let b = self.effective_batch_size(n);
        if b == 0 || b > n {
            return Err(GpcError::InvalidArgument(format!(
                "batch size must lie in 1..={n}, got {b}"
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GpcError::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return Err(GpcError::InvalidArgument(
                "Adam decay rates must lie in [0, 1)".into(),
            ));
        }
        if !(self.adam_eps > 0.0) {
            return Err(GpcError::InvalidArgument(
                "Adam eps must be positive".into(),
            ));
        }
        if self.trace_every == 0 {
            return Err(GpcError::InvalidArgument("trace_every must be >= 1".into()));
        }
        gauss_hermite(self.quadrature_order).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Minibatch estimate before the update of this iteration.
    pub elbo: f64,
    pub wall_seconds: f64,
    /// `None` for softmax models.
    pub delta: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub const HEADER: &'static str = "iteration,elbo,wall_seconds,delta,grad_norm";

    /// CSV with [`TrainTrace::HEADER`]; a missing δ is an empty field.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(Self::HEADER);
        s.push('\n');
        for r in &self.records {
            let delta = r.delta.map(|d| format!("{d}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.iteration, r.elbo, r.wall_seconds, delta, r.grad_norm
            );
        }
        s
    }
}

/// Inducing locations at the k-means centers of `x`.
pub fn init_inducing(x: &DMatrix<f64>, m: usize, seed: u64) -> Result<InducingSet> {
    InducingSet::new(kmeans(x, m, seed)?)
}

fn gather_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

fn check_dataset(model: &ModelState, ds: &Dataset) -> Result<Vec<usize>> {
    if ds.is_empty() {
        return Err(GpcError::InvalidArgument("training set is empty".into()));
    }
    if ds.num_classes != model.num_classes {
        return Err(GpcError::InvalidArgument(format!(
            "dataset has {} classes, model expects {}",
            ds.num_classes, model.num_classes
        )));
    }
    let classes = ds.class_indices();
    model.check_data(&ds.x, &classes)?;
    Ok(classes)
}

fn check_finite(
    model: &ModelState,
    iteration: usize,
    terms: &super::ElboTerms,
    grad: &[f64],
) -> Result<()> {
    if let Some(term) = terms.non_finite_term() {
        return Err(GpcError::NonFinite { iteration, term });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(GpcError::NonFinite {
            iteration,
            term: format!("gradient w.r.t. {} is {}", model.layout().name(i), grad[i]),
        });
    }
    Ok(())
}

/// Minibatch Adam on the bound, jointly over variational parameters,
/// kernel hyperparameters, inducing locations and δ.
///
/// Batches are consecutive windows of a per-epoch shuffle; a remainder
/// shorter than the batch size is dropped. Full-batch runs keep the data
/// order.
pub fn fit(
    model: &ModelState,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ModelState, TrainTrace)> {
    let classes = check_dataset(model, ds)?;
    let n = ds.len();
    cfg.validate(n)?;
    let mut trace = TrainTrace::default();
    if cfg.iterations == 0 {
        return Ok((model.clone(), trace));
    }
    let rule = gauss_hermite(cfg.quadrature_order)?;
    let layout = model.layout();
    let mut mask = vec![true; layout.len];
    for r in &layout.kernels {
        mask[r.clone()].fill(cfg.train_kernel);
    }
    mask[layout.inducing.clone()].fill(cfg.train_inducing);
    if let (Some(r), Some(nf)) = (layout.rho, model.noise.as_ref()) {
        mask[r] = cfg.train_delta && nf.trainable_delta;
    }
    let mask_rho_frozen = layout.rho.is_some_and(|r| !mask[r]);

    let b = cfg.effective_batch_size(n);
    let full = b == n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut params = model.params();
    let mut current = model.clone();
    let mut adam = AdamState::new(layout.len);
    let adam_cfg = cfg.adam();
    let start = Instant::now();
    let mut cb = Vec::new();

    for it in 1..=cfg.iterations {
        let eg = if full {
            elbo_grad(&current, &ds.x, &classes, &rule)?
        } else {
            if cursor + b > n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let idx = &order[cursor..cursor + b];
            cursor += b;
            let xb = gather_rows(&ds.x, idx);
            cb.clear();
            cb.extend(idx.iter().map(|&i| classes[i]));
            elbo_grad(&current, &xb, &cb, &rule)?
        };
        check_finite(&current, it, &eg.terms, &eg.grad)?;
        if it == 1 || it % cfg.trace_every == 0 || it == cfg.iterations {
            let grad_norm = eg
                .grad
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(g, _)| g * g)
                .sum::<f64>()
                .sqrt();
            trace.records.push(TraceRecord {
                iteration: it,
                elbo: eg.terms.elbo,
                wall_seconds: if cfg.record_wall_time {
                    start.elapsed().as_secs_f64()
                } else {
                    0.0
                },
                delta: current.noise.as_ref().map(|nf| nf.delta()),
                grad_norm,
            });
        }
        adam_step(&mut params, &eg.grad, &mut adam, &adam_cfg, Some(&mask));
        current = current.with_params(&params)?;
        // frozen blocks stay bit-exact rather than passing through exp∘ln
        if !cfg.train_kernel {
            current.kernels.clone_from(&model.kernels);
        }
        if mask_rho_frozen {
            current.noise.clone_from(&model.noise);
        }
    }
    Ok((current, trace))
}

/// Plain full-batch gradient ascent `θ ← θ + step·∇L` over every
/// parameter, a diagnostic for gradient correctness. Returns the final
/// state and the bound before each step and after the last one.
pub fn fit_gradient_ascent(
    model: &ModelState,
    ds: &Dataset,
    step: f64,
    steps: usize,
    quadrature_order: usize,
) -> Result<(ModelState, Vec<f64>)> {
    let classes = check_dataset(model, ds)?;
    let rule = gauss_hermite(quadrature_order)?;
    let mut current = model.clone();
    let mut params = current.params();
    let mut elbos = Vec::with_capacity(steps + 1);
    for it in 0..=steps {
        let eg = elbo_grad(&current, &ds.x, &classes, &rule)?;
        check_finite(&current, it, &eg.terms, &eg.grad)?;
        elbos.push(eg.terms.elbo);
        if it == steps {
            break;
        }
        for (p, g) in params.iter_mut().zip(&eg.grad) {
            *p += step * g;
        }
        current = current.with_params(&params)?;
    }
    Ok((current, elbos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::likelihood::LikelihoodKind;
    use crate::model::KernelSharing;

    fn blobs(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(n, 2, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            let centre = if classes[i] == 1 { 2.0 } else { -2.0 };
            centre + 0.5 * e + rng.random_range(-0.01..0.01)
        });
        Dataset::from_class_indices(x, &classes, vec![-1.0, 1.0]).unwrap()
    }

    fn model_for(ds: &Dataset, lik: LikelihoodKind, m: usize) -> ModelState {
        ModelState::new(
            lik,
            ds.num_classes,
            KernelSpec::rbf(1.0, 1.0),
            KernelSharing::Shared,
            init_inducing(&ds.x, m, 0).unwrap(),
            1e-3,
            ds.len(),
        )
        .unwrap()
    }

    #[test]
    fn zero_iterations_return_the_model_unchanged() {
        let ds = blobs(20, 1);
        let model = model_for(&ds, LikelihoodKind::Probit, 4);
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::default()
        };
        let (out, trace) = fit(&model, &ds, &cfg).unwrap();
        assert_eq!(out, model);
        assert!(trace.records.is_empty());
    }

    #[test]
    fn trace_iterations_increase_and_csv_has_header() {
        let ds = blobs(30, 2);
        let model = model_for(&ds, LikelihoodKind::Logit, 4);
        let cfg = TrainConfig {
            iterations: 25,
            batch_size: Some(10),
            trace_every: 10,
            ..TrainConfig::default()
        };
        let (_, trace) = fit(&model, &ds, &cfg).unwrap();
        let its: Vec<usize> = trace.records.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![1, 10, 20, 25]);
        let csv = trace.to_csv();
        assert!(csv.starts_with("iteration,elbo,wall_seconds,delta,grad_norm\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn frozen_blocks_do_not_move() {
        let ds = blobs(24, 3);
        let model = model_for(&ds, LikelihoodKind::Probit, 4);
        let cfg = TrainConfig {
            iterations: 10,
            train_kernel: false,
            train_inducing: false,
            train_delta: false,
            ..TrainConfig::default()
        };
        let (out, _) = fit(&model, &ds, &cfg).unwrap();
        assert_eq!(out.kernels, model.kernels);
        assert_eq!(out.inducing, model.inducing);
        assert_eq!(out.noise, model.noise);
        assert_ne!(out.q_u, model.q_u);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ds = blobs(10, 4);
        let model = model_for(&ds, LikelihoodKind::Probit, 3);
        for cfg in [
            TrainConfig {
                batch_size: Some(11),
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                quadrature_order: 0,
                ..TrainConfig::default()
            },
        ] {
            assert_eq!(
                fit(&model, &ds, &cfg).unwrap_err().kind(),
                "invalid-argument"
            );
        }
    }

    #[test]
    fn non_finite_bound_names_the_term() {
        let ds = blobs(10, 5);
        let mut model = model_for(&ds, LikelihoodKind::Probit, 3);
        model.q_u[0].mean[0] = f64::NAN;
        let cfg = TrainConfig {
            iterations: 3,
            ..TrainConfig::default()
        };
        match fit(&model, &ds, &cfg).unwrap_err() {
            GpcError::NonFinite { iteration, term } => {
                assert_eq!(iteration, 1);
                assert!(term.contains("data term"), "{term}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn init_inducing_uses_kmeans_centres() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 6.0]);
        let z = init_inducing(&x, 1, 0).unwrap();
        assert!((z.z[(0, 0)] - 3.0).abs() < 1e-12);
        assert!(init_inducing(&x, 4, 0).is_err());
    }
}
