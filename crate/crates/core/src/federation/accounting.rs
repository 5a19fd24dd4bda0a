use serde::{Deserialize, Serialize};

use crate::model::LayeredModel;

/// Adapter values travel as 32-bit floats regardless of compute precision.
pub const WIRE_BYTES_PER_PARAM: u64 = 4;

/// Forward (1) plus backward (2) passes through one layer for one sample.
pub const LAYER_UNIT_COST: u64 = 3;

/// One row of the per-round log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based stage index.
    pub stage: usize,
    /// 1-based round index within the stage.
    pub round: usize,
    /// Mean over participants of the full local loss at the broadcast model.
    pub loss: f64,
    /// Mean over participants of the squared adapter-gradient norm at the broadcast model.
    pub grad_norm_sq: f64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub compute_units: u64,
}

fn adapter_bytes(model: &LayeredModel) -> u64 {
    model
        .layers()
        .first()
        .map_or(0, |l| l.shape().adapter_params() as u64 * WIRE_BYTES_PER_PARAM)
}

/// `(uplink, downlink)` bytes of one round: every participant sends and
/// receives one adapter per submodel layer.
pub fn comm_bytes(submodel: &LayeredModel, participants: usize) -> (u64, u64) {
    let bytes = participants as u64 * submodel.depth() as u64 * adapter_bytes(submodel);
    (bytes, bytes)
}

/// Bytes of sending the full submodel (base and adapters) to `clients` devices.
pub fn broadcast_bytes(submodel: &LayeredModel, clients: usize) -> u64 {
    let per_layer = submodel
        .layers()
        .first()
        .map_or(0, |l| l.shape().flat_len() as u64 * WIRE_BYTES_PER_PARAM);
    clients as u64 * submodel.depth() as u64 * per_layer
}

/// Depth-proportional compute proxy for one round.
pub fn compute_units(submodel: &LayeredModel, local_steps: usize, batch_size: usize, participants: usize) -> u64 {
    participants as u64 * local_steps as u64 * batch_size as u64 * LAYER_UNIT_COST * submodel.depth() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, ModelSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(layers: usize) -> LayeredModel {
        let spec = ModelSpec {
            input_dim: 2,
            width: 8,
            output_dim: 2,
            layers,
            rank: 2,
            alpha: 4.0,
            activation: Activation::Tanh,
        };
        LayeredModel::random(&spec, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn bytes_are_linear_in_depth() {
        // 2 participants * 3 layers * (2*8 + 8*2) params * 4 bytes
        assert_eq!(comm_bytes(&model(3), 2), (768, 768));
        let full = comm_bytes(&model(16), 2).0;
        assert_eq!(comm_bytes(&model(2), 2).0 * 8, full);
        assert_eq!(comm_bytes(&model(16), 0), (0, 0));
    }

    #[test]
    fn compute_doubles_with_depth() {
        assert_eq!(
            compute_units(&model(4), 10, 16, 2),
            2 * compute_units(&model(2), 10, 16, 2)
        );
        assert_eq!(compute_units(&model(4), 10, 16, 0), 0);
    }
}
