use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Test-set metrics of a trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Fraction of points whose argmax class is the true class.
    pub accuracy: f64,
    /// `−(1/n) Σ log p(true class)`
    pub mean_nll: f64,
    pub n_test: usize,
    /// Original label value of each class index.
    pub class_labels: Vec<f64>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub runtime_seconds: f64,
    pub seed: u64,
    /// Resolved settings of the run.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

/// Probabilities this small are treated as this value inside the log, so
/// a Monte-Carlo zero cannot produce an infinite NLL.
pub const NLL_FLOOR: f64 = 1e-300;

/// `(accuracy, mean_nll, confusion)` of probability rows against 0-based
/// true classes. Argmax ties go to the lower class index.
pub fn score(probs: &DMatrix<f64>, truth: &[usize]) -> (f64, f64, Vec<Vec<usize>>) {
    let (n, c) = probs.shape();
    assert_eq!(n, truth.len());
    let mut confusion = vec![vec![0; c]; c];
    let mut hits = 0;
    let mut nll = 0.0;
    for (i, &t) in truth.iter().enumerate() {
        let row = probs.row(i);
        let pred = (0..c).fold(0, |b, k| if row[k] > row[b] { k } else { b });
        confusion[t][pred] += 1;
        hits += usize::from(pred == t);
        nll -= row[t].max(NLL_FLOOR).ln();
    }
    let n = n.max(1) as f64;
    (hits as f64 / n, nll / n, confusion)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confident_correct_predictor() {
        let delta = 1e-3;
        let truth = [0, 1, 1, 0];
        let probs = DMatrix::from_fn(4, 2, |i, k| if k == truth[i] { 1.0 - delta } else { delta });
        let (acc, nll, conf) = score(&probs, &truth);
        assert_eq!(acc, 1.0);
        assert!((nll - 0.001_000_500_333_583_5).abs() < 1e-15);
        assert!((nll - 0.001001).abs() < 1e-6);
        assert_eq!(conf, vec![vec![2, 0], vec![0, 2]]);
    }

    #[test]
    fn uniform_predictors() {
        let truth = [2, 0, 1, 1, 1, 0];
        let (acc, nll, _) = score(&DMatrix::from_element(6, 3, 1.0 / 3.0), &truth);
        assert!((nll - 3f64.ln()).abs() < 1e-12);
        // ties resolve to class 0, so accuracy is its frequency
        assert!((acc - 2.0 / 6.0).abs() < 1e-15);
        let (_, nll2, _) = score(&DMatrix::from_element(3, 2, 0.5), &[0, 1, 1]);
        assert!((nll2 - 0.693_147_180_559_945_3).abs() < 1e-15);
    }

    #[test]
    fn report_round_trips_through_json() {
        let r = EvalReport {
            accuracy: 0.75,
            mean_nll: 0.1234567890123,
            n_test: 4,
            class_labels: vec![-1.0, 1.0],
            confusion: vec![vec![1, 1], vec![0, 2]],
            runtime_seconds: 0.5,
            seed: 3,
            config: BTreeMap::from([("seed".into(), "3".into())]),
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&s).unwrap(), r);
    }
}
