//! Datasets: CSV ingestion, normalization, splitting and synthetic
//! generators.

mod csvio;
mod generate;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GpcError, Result};

pub use csvio::{load_csv, load_csv_with_labels, load_features, save_csv, LoadOptions};
pub use generate::{gen_gp_multiclass, gen_two_moons, GpMulticlassDraw};

/// Per-column affine map applied to raw features: `(x − mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(GpcError::DimensionMismatch(format!(
                "normalization has {} columns, data has {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.mean[j]) / self.std[j]
        }))
    }

    /// Maps normalized features back to raw units.
    pub fn invert(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(GpcError::DimensionMismatch(format!(
                "normalization has {} columns, data has {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            x[(i, j)] * self.std[j] + self.mean[j]
        }))
    }

    /// `self` followed by `then`.
    fn compose(&self, then: &Normalization) -> Normalization {
        Normalization {
            mean: (0..self.mean.len())
                .map(|j| self.mean[j] + self.std[j] * then.mean[j])
                .collect(),
            std: (0..self.std.len())
                .map(|j| self.std[j] * then.std[j])
                .collect(),
        }
    }
}

/// Features and labels.
///
/// Binary labels are `−1/+1`; multi-class labels are `1..=C`. `label_map[k]`
/// is the original value of class index `k` (binary: index 0 is `−1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<i32>,
    pub num_classes: usize,
    pub label_map: Vec<f64>,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    /// Builds a dataset from class indices `0..C`.
    pub fn from_class_indices(
        x: DMatrix<f64>,
        classes: &[usize],
        label_map: Vec<f64>,
    ) -> Result<Self> {
        let c = label_map.len();
        if c < 2 {
            return Err(GpcError::InvalidArgument(format!(
                "need at least 2 classes, got {c}"
            )));
        }
        if classes.len() != x.nrows() {
            return Err(GpcError::DimensionMismatch(format!(
                "{} labels for {} rows",
                classes.len(),
                x.nrows()
            )));
        }
        if let Some(&bad) = classes.iter().find(|&&k| k >= c) {
            return Err(GpcError::InvalidArgument(format!(
                "class index {bad} out of range for {c} classes"
            )));
        }
        let y = classes
            .iter()
            .map(|&k| class_to_label(k, c))
            .collect::<Vec<_>>();
        let ds = Self {
            x,
            y,
            num_classes: c,
            label_map,
            normalization: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() == 0 {
            return Err(GpcError::InvalidArgument("dataset is empty".into()));
        }
        if self.y.len() != self.x.nrows() {
            return Err(GpcError::DimensionMismatch(format!(
                "{} labels for {} rows",
                self.y.len(),
                self.x.nrows()
            )));
        }
        if self.label_map.len() != self.num_classes {
            return Err(GpcError::InvalidArgument(
                "label map does not match class count".into(),
            ));
        }
        if let Some((i, _)) = self
            .x
            .row_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(GpcError::InvalidArgument(format!(
                "non-finite feature in row {}",
                i + 1
            )));
        }
        let valid = |l: i32| {
            if self.num_classes == 2 {
                l == -1 || l == 1
            } else {
                l >= 1 && l as usize <= self.num_classes
            }
        };
        if let Some(&l) = self.y.iter().find(|&&l| !valid(l)) {
            return Err(GpcError::InvalidArgument(format!(
                "label {l} invalid for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_binary(&self) -> bool {
        self.num_classes == 2
    }

    /// Label of row `i` as a class index in `0..C`.
    pub fn class_index(&self, i: usize) -> usize {
        label_to_class(self.y[i], self.num_classes)
    }

    pub fn class_indices(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.class_index(i)).collect()
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            num_classes: self.num_classes,
            label_map: self.label_map.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// Per-class counts indexed by class index.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for i in 0..self.len() {
            counts[self.class_index(i)] += 1;
        }
        counts
    }
}

pub(crate) fn class_to_label(k: usize, num_classes: usize) -> i32 {
    if num_classes == 2 {
        if k == 0 {
            -1
        } else {
            1
        }
    } else {
        k as i32 + 1
    }
}

pub(crate) fn label_to_class(l: i32, num_classes: usize) -> usize {
    if num_classes == 2 {
        usize::from(l > 0)
    } else {
        (l - 1) as usize
    }
}

/// Column statistics with the population standard deviation; constant
/// columns get std 1.
pub fn column_stats(x: &DMatrix<f64>) -> Normalization {
    let n = x.nrows() as f64;
    let mut mean = Vec::with_capacity(x.ncols());
    let mut std = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let m = col.sum() / n;
        let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let s = v.sqrt();
        mean.push(m);
        std.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
    }
    Normalization { mean, std }
}

/// Standardizes every column to mean 0 and unit population variance. The
/// recorded normalization maps the original raw features to the result.
pub fn normalize(ds: &Dataset) -> Dataset {
    let stats = column_stats(&ds.x);
    let x = stats
        .apply(&ds.x)
        .expect("stats built from the same matrix");
    let normalization = Some(match &ds.normalization {
        Some(prev) => prev.compose(&stats),
        None => stats,
    });
    Dataset {
        x,
        normalization,
        ..ds.clone()
    }
}

/// Applies the normalization recorded on `reference` to `ds`, which must
/// hold raw features.
pub fn normalize_like(ds: &Dataset, reference: &Normalization) -> Result<Dataset> {
    Ok(Dataset {
        x: reference.apply(&ds.x)?,
        normalization: Some(reference.clone()),
        ..ds.clone()
    })
}

fn check_fraction(test_fraction: f64) -> Result<()> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(GpcError::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    Ok(())
}

/// Seeded shuffle of `0..n` cut into (train, test) with
/// `round(n · test_fraction)` test indices.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    check_fraction(test_fraction)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * test_fraction).round() as usize;
    let test = idx.split_off(n - n_test);
    Ok((idx, test))
}

pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.len(), test_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Per-class split: each class contributes `round(n_c · test_fraction)`
/// test rows.
pub fn split_stratified(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    check_fraction(test_fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for k in 0..ds.num_classes {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.class_index(i) == k).collect();
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        let cut = idx.len() - n_test;
        test.extend_from_slice(&idx[cut..]);
        train.extend_from_slice(&idx[..cut]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 3, |_, j| rng.random_range(-5.0..5.0) * (j + 1) as f64);
        let classes: Vec<usize> = (0..n).map(|i| i % 3).collect();
        Dataset::from_class_indices(x, &classes, vec![3.0, 7.0, 9.0]).unwrap()
    }

    #[test]
    fn normalize_reference_column() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let ds = Dataset::from_class_indices(x, &[0, 1], vec![0.0, 1.0]).unwrap();
        let out = normalize(&ds);
        assert_eq!(out.x.as_slice(), &[-1.0, 1.0]);
        let stats = out.normalization.unwrap();
        assert_eq!((stats.mean[0], stats.std[0]), (2.0, 1.0));
    }

    #[test]
    fn normalize_zeroes_constant_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[4.0, 1.0, 4.0, 2.0, 4.0, 6.0]);
        let ds = Dataset::from_class_indices(x, &[0, 1, 0], vec![0.0, 1.0]).unwrap();
        let out = normalize(&ds);
        assert!(out.x.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(out.normalization.unwrap().std[0], 1.0);
    }

    #[test]
    fn normalize_gives_zero_mean_unit_std_and_is_idempotent() {
        let ds = toy(50, 1);
        let once = normalize(&ds);
        for col in once.x.column_iter() {
            let m = col.mean();
            let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len() as f64;
            assert!(m.abs() <= 1e-10);
            assert!((v.sqrt() - 1.0).abs() <= 1e-10);
        }
        let twice = normalize(&once);
        assert!((&twice.x - &once.x).amax() <= 1e-10);
        let back = once
            .normalization
            .as_ref()
            .unwrap()
            .invert(&once.x)
            .unwrap();
        assert!((&back - &ds.x).amax() <= 1e-10);
        // the composed record still maps raw data to the result
        let again = twice.normalization.as_ref().unwrap().apply(&ds.x).unwrap();
        assert!((again - &twice.x).amax() <= 1e-10);
    }

    #[test]
    fn normalize_like_uses_reference_stats() {
        let ds = toy(40, 2);
        let (train, test) = split(&ds, 0.25, 3).unwrap();
        let train_n = normalize(&train);
        let stats = train_n.normalization.clone().unwrap();
        let test_n = normalize_like(&test, &stats).unwrap();
        assert_eq!(test_n.x, stats.apply(&test.x).unwrap());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = toy(100, 4);
        let (tr, te) = split(&ds, 0.1, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (90, 10));
        let (tr2, te2) = split(&ds, 0.1, 7).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        assert!(split(&ds, 0.0, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn split_indices_partition(n in 1usize..300, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let (tr, te) = split_indices(n, frac, seed).unwrap();
            prop_assert_eq!(te.len(), (n as f64 * frac).round() as usize);
            let mut all: Vec<usize> = tr.iter().chain(te.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn stratified_split_preserves_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 301;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let classes: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let ds = Dataset::from_class_indices(x, &classes, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (tr, te) = split_stratified(&ds, 0.2, 9).unwrap();
        assert_eq!(tr.len() + te.len(), n);
        for (k, &total) in ds.class_counts().iter().enumerate() {
            let expected = total as f64 * 0.2;
            assert!((te.class_counts()[k] as f64 - expected).abs() <= 1.0);
        }
    }

    #[test]
    fn labels_validate() {
        let x = DMatrix::zeros(2, 1);
        assert!(Dataset::from_class_indices(x.clone(), &[0, 2], vec![0.0, 1.0]).is_err());
        assert!(Dataset::from_class_indices(x.clone(), &[0], vec![0.0, 1.0]).is_err());
        let ds = Dataset::from_class_indices(x, &[1, 0], vec![0.0, 1.0]).unwrap();
        assert_eq!(ds.y, vec![1, -1]);
        assert_eq!(ds.class_indices(), vec![1, 0]);
    }
}
