//! Lloyd's k-means with k-means++ seeding.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GpcError, Result};

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    /// k×d
    pub centers: DMatrix<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each update step.
    pub objective_trace: Vec<f64>,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, j: usize) -> f64 {
    (0..points.ncols())
        .map(|c| {
            let d = points[(i, c)] - centers[(j, c)];
            d * d
        })
        .sum()
}

fn seed_plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut centers = DMatrix::zeros(k, d);
    let mut chosen = vec![false; n];

    let first = rng.random_range(0..n);
    chosen[first] = true;
    centers.row_mut(0).copy_from(&points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();

    for j in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // round-off can walk past the end; take the last positive weight
            pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every remaining point coincides with a center
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        centers.row_mut(j).copy_from(&points.row(pick));
        for (i, near) in nearest.iter_mut().enumerate() {
            *near = near.min(sq_dist(points, i, &centers, j));
        }
    }
    centers
}

/// Full k-means run, returning assignments and the objective history.
pub fn kmeans_fit(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansFit> {
    let n = points.nrows();
    let d = points.ncols();
    if k == 0 || k > n {
        return Err(GpcError::InvalidArgument(format!(
            "k-means needs 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_plus_plus(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut objective_trace = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let mut best = (0, f64::INFINITY);
            for j in 0..k {
                let dd = sq_dist(points, i, &centers, j);
                if dd < best.1 {
                    best = (j, dd);
                }
            }
            if assignments[i] != best.0 {
                assignments[i] = best.0;
                changed = true;
            }
            dist[i] = best.1;
        }

        // Empty clusters take the point farthest from its own center.
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]));
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                assignments[i] = j;
                counts[j] = 1;
                dist[i] = 0.0;
                changed = true;
            }
        }

        let mut sums = DMatrix::<f64>::zeros(k, d);
        for i in 0..n {
            let a = assignments[i];
            for c in 0..d {
                sums[(a, c)] += points[(i, c)];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for c in 0..d {
                    centers[(j, c)] = sums[(j, c)] / counts[j] as f64;
                }
            }
        }
        let objective: f64 = (0..n)
            .map(|i| sq_dist(points, i, &centers, assignments[i]))
            .sum();
        objective_trace.push(objective);

        if !changed {
            break;
        }
    }

    Ok(KMeansFit {
        centers,
        assignments,
        objective_trace,
    })
}

/// k×d matrix of cluster centers; deterministic for a fixed seed.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    kmeans_fit(points, k, seed).map(|f| f.centers)
}
