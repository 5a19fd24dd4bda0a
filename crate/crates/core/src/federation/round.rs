use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grouping::GroupPartition;
use crate::model::{AdamW, LayeredModel, LoraAdapter, OptimizerState};
use crate::seeds::{rng_for, stream};

use super::client::Client;

/// `⌈fraction·n⌉`, at least one and at most `n`.
pub fn participants_per_round(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    // 0.1 * 30 = 3.0000000000000004 must still mean 3
    let rounded = raw.round();
    let count = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    (count as usize).clamp(1, n)
}

/// Indices into `clients` of this round's participants, ascending. The draw
/// depends only on `(seed, stage, round)`.
pub fn sample_clients(seed: u64, stage: usize, round: usize, clients: &[Client], fraction: f64) -> Result<Vec<usize>> {
    if clients.is_empty() {
        return Err(Error::NoClients);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidSchedule(format!(
            "client fraction {fraction} outside (0, 1]"
        )));
    }
    let n = clients.len();
    let m = participants_per_round(n, fraction);
    if m == n {
        return Ok((0..n).collect());
    }
    let mut rng = rng_for(seed, &[stream::SAMPLING, stage as u64, round as u64]);
    let mut picked = index::sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Trained adapters from one client, with the weight used for averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub client: usize,
    pub adapters: Vec<LoraAdapter>,
    pub samples: usize,
}

/// Hyperparameters of one client's local optimisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: AdamW,
}

/// `K` AdamW steps on seeded minibatches, starting from fresh optimizer
/// state. Works on a copy; `model` is not modified.
pub fn local_train(
    client: &Client,
    model: &LayeredModel,
    cfg: &LocalConfig,
    rng: &mut impl Rng,
) -> Result<LocalUpdate> {
    let mut local = model.clone();
    let mut opt = OptimizerState::new(cfg.optimizer, &local);
    let n = client.samples();
    let b = cfg.batch_size.min(n);
    for _ in 0..cfg.steps {
        let idx = index::sample(rng, n, b).into_vec();
        let batch = client.data.select(&idx);
        let (_, grads) = local.loss_and_grads(&batch)?;
        opt.step(&mut local, &grads, cfg.lr)?;
    }
    Ok(LocalUpdate {
        client: client.id,
        adapters: local.adapters(),
        samples: n,
    })
}

/// Full-dataset loss and squared adapter-gradient norm of `model` on one client.
pub fn client_diagnostics(client: &Client, model: &LayeredModel) -> Result<(f64, f64)> {
    let (loss, grads) = model.loss_and_grads(&client.data)?;
    Ok((loss, grads.squared_norm()))
}

/// Sample-count-weighted average of every adapter matrix, each `A` and each
/// `B` averaged independently.
pub fn aggregate(updates: &[LocalUpdate]) -> Result<Vec<LoraAdapter>> {
    let first = updates.first().ok_or(Error::NoUpdates)?;
    for u in updates {
        if u.adapters.len() != first.adapters.len()
            || u.adapters.iter().zip(&first.adapters).any(|(a, b)| !a.same_shape(b))
        {
            return Err(Error::DimensionMismatch {
                context: "aggregate",
                expected: first.adapters.len(),
                found: u.adapters.len(),
            });
        }
    }
    if updates.len() == 1 {
        return Ok(first.adapters.clone());
    }
    let total: usize = updates.iter().map(|u| u.samples).sum();
    let weights: Vec<f64> = updates.iter().map(|u| u.samples as f64 / total as f64).collect();
    let mut out = first.adapters.clone();
    for (l, adapter) in out.iter_mut().enumerate() {
        let mean = |get: &dyn Fn(&LoraAdapter) -> &[f64], dst: &mut [f64]| {
            for (e, d) in dst.iter_mut().enumerate() {
                *d = updates
                    .iter()
                    .zip(&weights)
                    .map(|(u, w)| w * get(&u.adapters[l])[e])
                    .sum();
            }
        };
        mean(&|a| a.a.as_slice(), adapter.a.as_mut_slice());
        mean(&|a| a.b.as_slice(), adapter.b.as_mut_slice());
    }
    Ok(out)
}

/// Copies the adapter of submodel layer `n` into every global layer of group `n`.
pub fn knowledge_transfer(
    global: &LayeredModel,
    submodel: &LayeredModel,
    partition: &GroupPartition,
) -> Result<LayeredModel> {
    if submodel.depth() != partition.len() || partition.layers() != global.depth() {
        return Err(Error::InvalidPartition(format!(
            "submodel depth {} / {} groups / global depth {} / partition over {}",
            submodel.depth(),
            partition.len(),
            global.depth(),
            partition.layers()
        )));
    }
    let mut out = global.clone();
    for (group, rep) in partition.groups().iter().zip(submodel.layers()) {
        for &i in group {
            out.layer_mut(i).set_adapter(rep.adapter().clone())?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Batch;
    use crate::numerics::Matrix;

    fn dummy_clients(n: usize) -> Vec<Client> {
        (0..n)
            .map(|id| Client::new(id, Batch::new(Matrix::zeros(1, 1), Matrix::zeros(1, 1)).unwrap()).unwrap())
            .collect()
    }

    #[test]
    fn participant_counts() {
        assert_eq!(participants_per_round(20, 0.1), 2);
        assert_eq!(participants_per_round(30, 0.1), 3);
        assert_eq!(participants_per_round(7, 0.5), 4);
        assert_eq!(participants_per_round(5, 0.01), 1);
        assert_eq!(participants_per_round(5, 1.0), 5);
    }

    #[test]
    fn sampling() {
        let clients = dummy_clients(20);
        assert_eq!(
            sample_clients(1, 0, 0, &clients, 1.0).unwrap(),
            (0..20).collect::<Vec<_>>()
        );
        let p = sample_clients(1, 0, 3, &clients, 0.1).unwrap();
        assert_eq!(p.len(), 2);
        assert_ne!(p[0], p[1]);
        assert_eq!(p, sample_clients(1, 0, 3, &clients, 0.1).unwrap());
        assert!(sample_clients(1, 0, 0, &[], 0.1).is_err());
    }

    fn update(samples: usize, a: f64, b: f64) -> LocalUpdate {
        LocalUpdate {
            client: 0,
            adapters: vec![LoraAdapter::new(
                Matrix::from_vec(1, 2, vec![a, -a]).unwrap(),
                Matrix::from_vec(2, 1, vec![b, 2.0 * b]).unwrap(),
                1.0,
            )
            .unwrap()],
            samples,
        }
    }

    #[test]
    fn aggregation_weights() {
        let p = update(5, 1.0, 2.0);
        assert_eq!(aggregate(std::slice::from_ref(&p)).unwrap(), p.adapters);

        let q = update(5, 3.0, -2.0);
        let mean = aggregate(&[p.clone(), q.clone()]).unwrap();
        assert_eq!(mean[0].a.as_slice(), &[2.0, -2.0]);
        assert_eq!(mean[0].b.as_slice(), &[0.0, 0.0]);

        let weighted = aggregate(&[update(1, 1.0, 2.0), update(3, 3.0, -2.0)]).unwrap();
        // (p + 3q) / 4
        assert_eq!(weighted[0].a.as_slice(), &[2.5, -2.5]);
        assert_eq!(weighted[0].b.as_slice(), &[-1.0, -2.0]);
        assert!(aggregate(&[]).is_err());
    }
}
