use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Batch, LayeredModel};

/// One simulated device and its private regression data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Client {
    pub id: usize,
    pub data: Batch,
}

impl Client {
    pub fn new(id: usize, data: Batch) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(Client { id, data })
    }

    pub fn samples(&self) -> usize {
        self.data.len()
    }
}

/// Sample-weighted loss of `model` over the union of all client datasets.
pub fn global_loss(model: &LayeredModel, clients: &[Client]) -> Result<f64> {
    if clients.is_empty() {
        return Err(Error::NoClients);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for c in clients {
        total += model.loss(&c.data)? * c.samples() as f64;
        count += c.samples();
    }
    Ok(total / count as f64)
}
