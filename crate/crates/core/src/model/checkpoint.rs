use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelState;
use crate::error::{GpcError, Result};

/// Value of the `format` field in every checkpoint.
pub const CHECKPOINT_FORMAT: &str = "gpcnoise-checkpoint-v1";

/// A self-describing model file: the state plus the resolved settings that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: ModelState,
    /// Original label value of each class index.
    pub label_map: Vec<f64>,
    /// Input normalization fitted on the training split, if any.
    pub normalization: Option<crate::data::Normalization>,
    /// Resolved configuration, key-sorted.
    pub config: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(
        model: ModelState,
        label_map: Vec<f64>,
        normalization: Option<crate::data::Normalization>,
        config: BTreeMap<String, String>,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            model,
            label_map,
            normalization,
            config,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(GpcError::InvalidArgument(format!(
                "unsupported checkpoint format '{}'",
                ck.format
            )));
        }
        ck.model.validate()?;
        if ck.label_map.len() != ck.model.num_classes {
            return Err(GpcError::DimensionMismatch(format!(
                "label map has {} entries for {} classes",
                ck.label_map.len(),
                ck.model.num_classes
            )));
        }
        Ok(ck)
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ck.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::likelihood::LikelihoodKind;
    use crate::model::KernelSharing;
    use crate::variational::InducingSet;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (lik, c) in [
            (LikelihoodKind::Logit, 2),
            (LikelihoodKind::Step, 3),
            (LikelihoodKind::Softmax, 3),
        ] {
            let z = DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>() * 3.0 - 1.5);
            let mut model = ModelState::new(
                lik,
                c,
                KernelSpec::sum(vec![
                    KernelSpec::rbf(0.3, 5.0),
                    KernelSpec::matern52(1.1, 0.7),
                ]),
                KernelSharing::PerClass,
                InducingSet::new(z).unwrap(),
                1e-3,
                17,
            )
            .unwrap();
            for q in &mut model.q_u {
                q.mean = DVector::from_fn(4, |_, _| rng.random::<f64>() - 0.5);
            }
            let mut config = BTreeMap::new();
            config.insert("seed".into(), "3".into());
            let label_map = (0..c).map(|k| k as f64 * 1.5).collect();
            let ck = Checkpoint::new(model, label_map, None, config);
            let p1 = dir.path().join("a.json");
            let p2 = dir.path().join("b.json");
            save_checkpoint(&ck, &p1).unwrap();
            let back = load_checkpoint(&p1).unwrap();
            assert_eq!(back, ck);
            save_checkpoint(&back, &p2).unwrap();
            assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        }
    }

    #[test]
    fn wrong_format_is_rejected() {
        let err = Checkpoint::from_json(r#"{"format":"other"}"#).unwrap_err();
        assert_eq!(err.kind(), "json-error");
    }
}
