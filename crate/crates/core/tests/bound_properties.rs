use gpcnoise::data::{gen_two_moons, split, Dataset};
use gpcnoise::likelihood::{LikelihoodKind, NoiseFamily, LOGIT_NOISE, PROBIT_NOISE, STEP_NOISE};
use gpcnoise::model::{
    elbo, elbo_terms, fit, fit_gradient_ascent, init_inducing, marginals, predict, KernelSharing,
    ModelState, TrainConfig,
};
use gpcnoise::numerics::gauss_hermite;
use gpcnoise::variational::InducingSet;
use gpcnoise::KernelSpec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_model(lik: LikelihoodKind, c: usize, n_total: usize, rng: &mut ChaCha8Rng) -> ModelState {
    let m = 4;
    let z = DMatrix::from_fn(m, 2, |_, _| rng.random_range(-1.5..1.5));
    let mut model = ModelState::new(
        lik,
        c,
        KernelSpec::rbf(rng.random_range(0.7..1.5), rng.random_range(0.5..2.0)),
        KernelSharing::Shared,
        InducingSet::new(z).unwrap(),
        0.02,
        n_total,
    )
    .unwrap();
    for q in &mut model.q_u {
        q.mean = DVector::from_fn(m, |_, _| rng.random_range(-1.5..1.5));
        for i in 0..m {
            q.scale[(i, i)] = rng.random_range(0.1..0.6);
        }
    }
    model
}

#[test]
fn singleton_batches_average_to_the_full_bound() {
    let rule = gauss_hermite(20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 16;
    for (lik, c) in [
        (LikelihoodKind::Probit, 2),
        (LikelihoodKind::Step, 3),
        (LikelihoodKind::Softmax, 3),
    ] {
        let model = random_model(lik, c, n, &mut rng);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
        let classes: Vec<usize> = (0..n).map(|i| i % c).collect();
        let full = elbo(&model, &x, &classes, &rule).unwrap();
        let singles: f64 = (0..n)
            .map(|i| {
                let xi = x.rows(i, 1).into_owned();
                elbo(&model, &xi, &classes[i..=i], &rule).unwrap()
            })
            .sum::<f64>()
            / n as f64;
        assert!((singles - full).abs() < 1e-8, "{singles} vs {full}");
        let quarters: f64 = (0..4)
            .map(|k| {
                let xb = x.rows(4 * k, 4).into_owned();
                elbo(&model, &xb, &classes[4 * k..4 * k + 4], &rule).unwrap()
            })
            .sum::<f64>()
            / 4.0;
        assert!((quarters - full).abs() < 1e-8);
    }
}

#[test]
fn kl_terms_decouple_across_classes() {
    let rule = gauss_hermite(20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-2.0..2.0));
    let classes: Vec<usize> = (0..10).map(|i| i % 3).collect();
    for lik in [LikelihoodKind::Logit, LikelihoodKind::Softmax] {
        let mut model = random_model(lik, 3, 10, &mut rng);
        let before = elbo_terms(&model, &x, &classes, &rule).unwrap();
        model.q_u[1].mean[2] += 0.7;
        let after = elbo_terms(&model, &x, &classes, &rule).unwrap();
        assert_eq!(after.kl[0], before.kl[0]);
        assert_eq!(after.kl[2], before.kl[2]);
        assert!(after.kl[1] != before.kl[1]);
        assert!(after.data != before.data);
        let recomposed = after.data - after.kl.iter().sum::<f64>();
        assert!((after.elbo - recomposed).abs() < 1e-12);

        model.reset_to_prior().unwrap();
        let prior = elbo_terms(&model, &x, &classes, &rule).unwrap();
        assert!(prior.kl.iter().sum::<f64>().abs() < 1e-10);
        assert!((prior.elbo - prior.data).abs() < 1e-10);
    }
}

fn with_noise(model: &ModelState, a: f64) -> ModelState {
    let mut out = model.clone();
    let delta = model.noise.as_ref().unwrap().delta();
    out.noise = Some(NoiseFamily::binary(a, delta).unwrap());
    out
}

#[test]
fn bound_orders_step_over_probit_over_logit() {
    let rule = gauss_hermite(20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = 15;
        let model = random_model(LikelihoodKind::Probit, 2, n, &mut rng);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.5..1.5));
        let marg = marginals(&model, &x).unwrap();
        // labels agree in sign with the latent means
        let classes: Vec<usize> = marg.mu.iter().map(|&m| usize::from(m > 0.0)).collect();
        assert!(marg.mu.iter().all(|m| m.abs() > 0.0));
        let l: Vec<f64> = [STEP_NOISE, PROBIT_NOISE, LOGIT_NOISE]
            .iter()
            .map(|&a| elbo(&with_noise(&model, a), &x, &classes, &rule).unwrap())
            .collect();
        assert!(l[0] > l[1] && l[1] > l[2], "{l:?}");
    }
}

fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = DMatrix::from_fn(n, 2, |i, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        if classes[i] == 1 {
            2.5 + 0.5 * e
        } else {
            -2.5 + 0.5 * e
        }
    });
    Dataset::from_class_indices(x, &classes, vec![-1.0, 1.0]).unwrap()
}

fn default_model(ds: &Dataset, lik: LikelihoodKind, m: usize, seed: u64) -> ModelState {
    let d = ds.dim() as f64;
    ModelState::new(
        lik,
        ds.num_classes,
        KernelSpec::rbf(0.1 * d.sqrt(), 5.0),
        KernelSharing::Shared,
        init_inducing(&ds.x, m, seed).unwrap(),
        1e-3,
        ds.len(),
    )
    .unwrap()
}

fn accuracy(model: &ModelState, ds: &Dataset) -> f64 {
    let rule = gauss_hermite(20).unwrap();
    let p = predict(model, &ds.x, 1000, 0, &rule).unwrap();
    let truth = ds.class_indices();
    let hits = p
        .classes()
        .iter()
        .zip(&truth)
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / ds.len() as f64
}

#[test]
fn separable_blobs_are_fit_exactly() {
    let ds = blobs(200, 4);
    let model = default_model(&ds, LikelihoodKind::Probit, 8, 0);
    let cfg = TrainConfig {
        iterations: 2000,
        ..TrainConfig::default()
    };
    let (trained, trace) = fit(&model, &ds, &cfg).unwrap();
    assert_eq!(accuracy(&trained, &ds), 1.0);
    let first = trace.records.first().unwrap().elbo;
    let last = trace.records.last().unwrap().elbo;
    assert!(last > first);
}

#[test]
fn plain_gradient_ascent_never_decreases_the_bound() {
    let ds = gen_two_moons(50, 0.2, 5).unwrap();
    let model = default_model(&ds, LikelihoodKind::Logit, 8, 0);
    let (_, elbos) = fit_gradient_ascent(&model, &ds, 1e-3, 200, 20).unwrap();
    for w in elbos.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
    }
    assert!(elbos.last().unwrap() > elbos.first().unwrap());
}

#[test]
fn training_and_prediction_are_bitwise_reproducible() {
    let ds = gen_two_moons(60, 0.2, 6).unwrap();
    let rule = gauss_hermite(20).unwrap();
    let model = default_model(&ds, LikelihoodKind::Probit, 6, 1);
    let cfg = TrainConfig {
        iterations: 40,
        batch_size: Some(16),
        seed: 9,
        trace_every: 5,
        ..TrainConfig::default()
    };
    let (a, ta) = fit(&model, &ds, &cfg).unwrap();
    let (b, tb) = fit(&model, &ds, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.to_csv(), tb.to_csv());
    let pa = predict(&a, &ds.x, 50, 3, &rule).unwrap();
    let pb = predict(&b, &ds.x, 50, 3, &rule).unwrap();
    assert_eq!(pa, pb);
    let other = TrainConfig { seed: 10, ..cfg };
    let (c, _) = fit(&model, &ds, &other).unwrap();
    assert_ne!(a, c);
}

#[test]
fn gaussian_noise_likelihoods_agree_on_decisions() {
    let ds = gen_two_moons(400, 0.2, 7).unwrap();
    let (train, test) = split(&ds, 0.25, 7).unwrap();
    let cfg = TrainConfig {
        iterations: 1500,
        seed: 7,
        ..TrainConfig::default()
    };
    let rule = gauss_hermite(20).unwrap();
    let labels: Vec<Vec<usize>> = [
        LikelihoodKind::Step,
        LikelihoodKind::Probit,
        LikelihoodKind::Logit,
    ]
    .into_iter()
    .map(|lik| {
        let model = default_model(&train, lik, 32, 7);
        let (trained, _) = fit(&model, &train, &cfg).unwrap();
        predict(&trained, &test.x, 1, 0, &rule).unwrap().classes()
    })
    .collect();
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        let agree = labels[i]
            .iter()
            .zip(&labels[j])
            .filter(|(a, b)| a == b)
            .count() as f64
            / test.len() as f64;
        assert!(agree >= 0.95, "likelihoods {i} and {j} agree on {agree}");
    }
}
