use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::network::{LayeredModel, ModelSpec};

pub const CHECKPOINT_FORMAT: &str = "devft-checkpoint/v1";

/// Where a fused representative layer came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProvenance {
    pub group: usize,
    pub members: Vec<usize>,
    pub beta: f64,
    pub strategy: String,
}

/// JSON checkpoint: shape, all tensors (base and adapter), and the seed that
/// produced the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub seed: u64,
    pub spec: ModelSpec,
    pub model: LayeredModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Vec<LayerProvenance>>,
}

impl Checkpoint {
    pub fn new(spec: ModelSpec, model: LayeredModel, seed: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            seed,
            spec,
            model,
            provenance: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn json_round_trip_is_exact() {
        let spec = ModelSpec {
            input_dim: 3,
            width: 5,
            output_dim: 2,
            layers: 3,
            rank: 2,
            alpha: 4.0,
            activation: Activation::Tanh,
        };
        let model = LayeredModel::random(&spec, 1.0, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let mut ck = Checkpoint::new(spec, model, 42);
        ck.provenance = Some(vec![LayerProvenance {
            group: 0,
            members: vec![0, 1],
            beta: 0.1,
            strategy: "dblf".into(),
        }]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
}
