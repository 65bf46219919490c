use nalgebra::DMatrix;

use super::{ModelState, Task};
use crate::error::Result;
use crate::likelihood::{binary_predict, multiclass_predict, softmax_predict_mc};
use crate::numerics::GaussHermiteRule;
use crate::variational::{kmm_cholesky, q_f_marginals_with, PredictiveMarginals};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// n×C class probabilities; for binary models the columns are
    /// `[p(−1), p(+1)]`.
    pub probs: DMatrix<f64>,
    pub marginals: PredictiveMarginals,
}

impl Prediction {
    /// 0-based argmax class per row; ties go to the lower index.
    pub fn classes(&self) -> Vec<usize> {
        self.probs
            .row_iter()
            .map(|r| (0..r.len()).fold(0, |best, c| if r[c] > r[best] { c } else { best }))
            .collect()
    }
}

/// Latent marginals at the rows of `x`, one column per latent.
pub fn marginals(model: &ModelState, x: &DMatrix<f64>) -> Result<PredictiveMarginals> {
    let n = x.nrows();
    let l = model.num_latents();
    let mut mu = DMatrix::zeros(n, l);
    let mut var = DMatrix::zeros(n, l);
    for c in 0..l {
        let kernel = model.kernel_for(c);
        let chol = kmm_cholesky(kernel, &model.inducing)?;
        let (m, v) = q_f_marginals_with(kernel, &model.inducing, &chol, &model.q_u[c], x)?;
        mu.set_column(c, &m);
        var.set_column(c, &v);
    }
    Ok(PredictiveMarginals { mu, var })
}

/// Class probabilities at the rows of `x`.
///
/// Softmax models average over `n_samples` Gaussian draws. Every point
/// reuses the same draws from `seed`, so a prediction depends only on the
/// point's own marginals and not on its position in `x`.
pub fn predict(
    model: &ModelState,
    x: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
    rule: &GaussHermiteRule,
) -> Result<Prediction> {
    if x.ncols() != model.input_dim() {
        return Err(crate::GpcError::DimensionMismatch(format!(
            "data has {} features, model expects {}",
            x.ncols(),
            model.input_dim()
        )));
    }
    let marg = marginals(model, x)?;
    let n = x.nrows();
    let c_total = model.num_classes;
    let mut probs = DMatrix::zeros(n, c_total);
    for i in 0..n {
        let (mu, var) = marg.point(i);
        let p = match model.task {
            Task::Binary => {
                let nf = model
                    .noise
                    .as_ref()
                    .expect("binary model has a noise family");
                let pos = binary_predict(mu[0], var[0], nf);
                vec![1.0 - pos, pos]
            }
            Task::MulticlassUnified => {
                let nf = model
                    .noise
                    .as_ref()
                    .expect("multi-class model has a noise family");
                multiclass_predict(&mu, &var, nf, rule)
            }
            Task::Softmax => softmax_predict_mc(&mu, &var, n_samples.max(1), seed),
        };
        for (c, v) in p.into_iter().enumerate() {
            probs[(i, c)] = v;
        }
    }
    Ok(Prediction {
        probs,
        marginals: marg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::likelihood::LikelihoodKind;
    use crate::model::KernelSharing;
    use crate::numerics::gauss_hermite;
    use crate::variational::InducingSet;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(lik: LikelihoodKind, c: usize) -> ModelState {
        let z = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, -1.0, -1.0, 0.5]);
        ModelState::new(
            lik,
            c,
            KernelSpec::matern32(1.0, 2.0),
            KernelSharing::Shared,
            InducingSet::new(z).unwrap(),
            1e-3,
            10,
        )
        .unwrap()
    }

    #[test]
    fn untrained_binary_predicts_one_half() {
        let rule = gauss_hermite(20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-5.0..5.0));
        for lik in [
            LikelihoodKind::Step,
            LikelihoodKind::Probit,
            LikelihoodKind::Logit,
        ] {
            let p = predict(&model(lik, 2), &x, 1, 0, &rule).unwrap();
            assert!(p.probs.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn untrained_softmax_is_uniform_within_mc_error() {
        let rule = gauss_hermite(20).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 4.0, 4.0]);
        let n = 20_000;
        let p = predict(&model(LikelihoodKind::Softmax, 3), &x, n, 7, &rule).unwrap();
        for v in p.probs.iter() {
            assert!((v - 1.0 / 3.0).abs() < 3.0 / (n as f64).sqrt(), "{v}");
        }
    }

    #[test]
    fn rows_sum_to_one_and_position_does_not_matter() {
        let rule = gauss_hermite(20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(15, 2, |_, _| rng.random_range(-2.0..2.0));
        for (lik, c) in [
            (LikelihoodKind::Logit, 2),
            (LikelihoodKind::Step, 3),
            (LikelihoodKind::Probit, 5),
            (LikelihoodKind::Softmax, 4),
        ] {
            let mut m = model(lik, c);
            for q in &mut m.q_u {
                q.mean = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            }
            let p = predict(&m, &x, 200, 3, &rule).unwrap();
            for r in p.probs.row_iter() {
                assert!((r.sum() - 1.0).abs() < 1e-6);
                assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
            }
            let single = DMatrix::from_fn(1, 2, |_, j| x[(7, j)]);
            let p7 = predict(&m, &single, 200, 3, &rule).unwrap();
            assert_eq!(p7.probs.row(0), p.probs.row(7));
            assert_eq!(p.classes().len(), 15);
        }
    }

    #[test]
    fn input_dimension_is_checked() {
        let rule = gauss_hermite(20).unwrap();
        let err = predict(
            &model(LikelihoodKind::Probit, 2),
            &DMatrix::zeros(2, 3),
            1,
            0,
            &rule,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "dimension-mismatch");
    }
}
