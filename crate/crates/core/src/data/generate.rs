use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{GpcError, Result};
use crate::kernels::KernelSpec;
use crate::numerics::cholesky_jitter;

const MAX_DRAWS: usize = 10;

/// Two interleaved crescents, the upper labelled `+1`.
///
/// The classic construction spans `[−1, 2] × [−0.5, 1]`; it is centered and
/// scaled by 2 so the inputs sit in `[−3, 3]²`. `noise` is the standard
/// deviation of the isotropic Gaussian jitter before scaling.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(GpcError::InvalidArgument(format!(
            "two-moons needs an even n >= 4, got {n}"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(GpcError::InvalidArgument(format!(
            "noise must be finite and nonnegative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let mut pts = Vec::with_capacity(n);
    for i in 0..n {
        let upper = i < half;
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (bx, by) = if upper {
            (theta.cos(), theta.sin())
        } else {
            (1.0 - theta.cos(), 0.5 - theta.sin())
        };
        let ex: f64 = StandardNormal.sample(&mut rng);
        let ey: f64 = StandardNormal.sample(&mut rng);
        let x1 = 2.0 * (bx + noise * ex - 0.5);
        let x2 = 2.0 * (by + noise * ey - 0.25);
        pts.push((x1, x2, usize::from(upper)));
    }
    pts.shuffle(&mut rng);
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { pts[i].0 } else { pts[i].1 });
    let classes: Vec<usize> = pts.iter().map(|p| p.2).collect();
    Dataset::from_class_indices(x, &classes, vec![0.0, 1.0])
}

/// A GP-sampled multi-class dataset with the latent draws retained.
#[derive(Debug, Clone)]
pub struct GpMulticlassDraw {
    pub dataset: Dataset,
    /// n×C latent function values; the label of row i is the argmax of row i.
    pub latents: DMatrix<f64>,
    /// Attempts used until every class appeared.
    pub attempts: usize,
}

/// Inputs on a jittered grid over `[−3, 3]²`; `C` independent latent
/// functions drawn from `N(0, K + 1e−8·I)`; label = argmax.
///
/// Draws repeat from the same seeded stream until every class is present,
/// at most ten times.
pub fn gen_gp_multiclass(
    n: usize,
    num_classes: usize,
    kernel: &KernelSpec,
    seed: u64,
) -> Result<GpMulticlassDraw> {
    if num_classes < 3 {
        return Err(GpcError::InvalidArgument(format!(
            "gp-multiclass needs at least 3 classes, got {num_classes}"
        )));
    }
    if n < num_classes {
        return Err(GpcError::InvalidArgument(format!(
            "need n >= C, got n={n}, C={num_classes}"
        )));
    }
    kernel.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let side = (n as f64).sqrt().ceil() as usize;
    let cell = 6.0 / side as f64;
    let mut cells: Vec<usize> = (0..side * side).collect();
    cells.shuffle(&mut rng);
    cells.truncate(n);
    cells.sort_unstable();
    let mut x = DMatrix::zeros(n, 2);
    for (i, &c) in cells.iter().enumerate() {
        let (r, col) = (c / side, c % side);
        x[(i, 0)] = -3.0 + (col as f64 + 0.5) * cell + rng.random_range(-0.25..0.25) * cell;
        x[(i, 1)] = -3.0 + (r as f64 + 0.5) * cell + rng.random_range(-0.25..0.25) * cell;
    }

    let mut k = kernel.kernel_matrix(&x, &x)?;
    for i in 0..n {
        k[(i, i)] += 1e-8;
    }
    let chol = cholesky_jitter(&k, 5)?;

    for attempt in 1..=MAX_DRAWS {
        let mut latents = DMatrix::zeros(n, num_classes);
        for c in 0..num_classes {
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            latents.set_column(c, &(chol.lower() * z));
        }
        let classes: Vec<usize> = latents
            .row_iter()
            .map(|r| r.transpose().argmax().0)
            .collect();
        let mut seen = vec![false; num_classes];
        for &c in &classes {
            seen[c] = true;
        }
        if seen.iter().all(|&s| s) {
            let label_map = (1..=num_classes).map(|c| c as f64).collect();
            return Ok(GpMulticlassDraw {
                dataset: Dataset::from_class_indices(x, &classes, label_map)?,
                latents,
                attempts: attempt,
            });
        }
    }
    Err(GpcError::DegenerateDraw(format!(
        "not every one of {num_classes} classes appeared in {MAX_DRAWS} draws"
    )))
}
