//! Layer arithmetic and representative-layer synthesis.
//!
//! A group's representative is its anchor (lowest-index member) plus a
//! `β`-weighted sum of every member's difference from the anchor. Fusion
//! acts on full layer vectors, base and adapter alike, so the result is a
//! complete trainable layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::GroupPartition;
use crate::model::{Checkpoint, LayerParams, LayerProvenance, LayeredModel, ModelSpec};
use crate::numerics::DenseVector;
use crate::seeds::{rng_for, stream};

/// Default fusion weight.
pub const DEFAULT_BETA: f64 = 0.1;

fn check_len(a: &DenseVector, b: &DenseVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "layer arithmetic",
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// `θ_i + θ_j`
pub fn layer_add(theta_i: &DenseVector, theta_j: &DenseVector) -> Result<DenseVector> {
    check_len(theta_i, theta_j)?;
    DenseVector::new(
        theta_i
            .as_slice()
            .iter()
            .zip(theta_j.as_slice())
            .map(|(a, b)| a + b)
            .collect(),
    )
}

/// `θ_j − θ_i`
pub fn layer_sub(theta_j: &DenseVector, theta_i: &DenseVector) -> Result<DenseVector> {
    check_len(theta_j, theta_i)?;
    DenseVector::new(
        theta_j
            .as_slice()
            .iter()
            .zip(theta_i.as_slice())
            .map(|(a, b)| a - b)
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerOp {
    Add,
    Sub,
}

/// Result of one layer arithmetic operation together with its operands.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerVectorPair {
    pub tau: DenseVector,
    pub op: LayerOp,
    /// `(j, i)` for `τ_{j±i}`.
    pub operands: (usize, usize),
}

pub fn combine_layers(model: &LayeredModel, j: usize, i: usize, op: LayerOp) -> Result<LayerVectorPair> {
    let (tj, ti) = (model.layers()[j].flatten()?, model.layers()[i].flatten()?);
    let tau = match op {
        LayerOp::Add => layer_add(&tj, &ti)?,
        LayerOp::Sub => layer_sub(&tj, &ti)?,
    };
    Ok(LayerVectorPair {
        tau,
        op,
        operands: (j, i),
    })
}

/// `θ_anchor + β·Σ_j (θ_j − θ_anchor)` on flat vectors; `vectors[0]` is the anchor.
pub fn fuse_vectors(vectors: &[DenseVector], beta: f64) -> Result<DenseVector> {
    let (anchor, rest) = vectors.split_first().ok_or(Error::EmptyGroup)?;
    for v in rest {
        check_len(anchor, v)?;
    }
    if rest.is_empty() {
        return Ok(anchor.clone());
    }
    let a = anchor.as_slice();
    let mut out = Vec::with_capacity(a.len());
    for (e, &ae) in a.iter().enumerate() {
        let diff: f64 = rest.iter().map(|v| v.as_slice()[e] - ae).sum();
        out.push(ae + beta * diff);
    }
    DenseVector::new(out)
}

/// Differential fusion of a group given in ascending layer order.
pub fn fuse_group(layers: &[LayerParams], beta: f64) -> Result<LayerParams> {
    let anchor = layers.first().ok_or(Error::EmptyGroup)?;
    if layers.len() == 1 {
        return Ok(anchor.clone());
    }
    let vectors = layers.iter().map(LayerParams::flatten).collect::<Result<Vec<_>>>()?;
    LayerParams::unflatten(&fuse_vectors(&vectors, beta)?, &anchor.shape())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    /// Anchor plus weighted differentials.
    Dblf,
    /// Plain elementwise sum of all members.
    Sum,
    /// One seed-chosen member.
    ROne,
}

impl FusionStrategy {
    pub fn name(self) -> &'static str {
        match self {
            FusionStrategy::Dblf => "dblf",
            FusionStrategy::Sum => "sum",
            FusionStrategy::ROne => "r_one",
        }
    }
}

impl std::str::FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dblf" => Ok(FusionStrategy::Dblf),
            "sum" => Ok(FusionStrategy::Sum),
            "r_one" | "r-one" => Ok(FusionStrategy::ROne),
            other => Err(Error::config("fusion", format!("unknown strategy `{other}`"))),
        }
    }
}

pub fn fusion_strategy(layers: &[LayerParams], strategy: FusionStrategy, beta: f64, seed: u64) -> Result<LayerParams> {
    let first = layers.first().ok_or(Error::EmptyGroup)?;
    match strategy {
        FusionStrategy::Dblf => fuse_group(layers, beta),
        FusionStrategy::Sum => {
            let mut acc = first.flatten()?;
            for l in &layers[1..] {
                acc = layer_add(&acc, &l.flatten()?)?;
            }
            LayerParams::unflatten(&acc, &first.shape())
        }
        FusionStrategy::ROne => {
            let pick = rng_for(seed, &[stream::FUSION]).random_range(0..layers.len());
            Ok(layers[pick].clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeLayer {
    pub layer: LayerParams,
    pub provenance: LayerProvenance,
}

/// A stage submodel: the global input map and head around one
/// representative layer per group, in partition order.
#[derive(Debug, Clone, PartialEq)]
pub struct Submodel {
    pub model: LayeredModel,
    pub partition: GroupPartition,
    pub provenance: Vec<LayerProvenance>,
}

impl Submodel {
    pub fn checkpoint(&self, spec: ModelSpec, seed: u64) -> Checkpoint {
        let mut spec = spec;
        spec.layers = self.model.depth();
        let mut ck = Checkpoint::new(spec, self.model.clone(), seed);
        ck.provenance = Some(self.provenance.clone());
        ck
    }
}

pub fn build_submodel(
    global: &LayeredModel,
    partition: &GroupPartition,
    beta: f64,
    strategy: FusionStrategy,
    seed: u64,
) -> Result<Submodel> {
    if partition.layers() != global.depth() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} layers, model has {}",
            partition.layers(),
            global.depth()
        )));
    }
    let mut layers = Vec::with_capacity(partition.len());
    let mut provenance = Vec::with_capacity(partition.len());
    for (n, group) in partition.groups().iter().enumerate() {
        let members: Vec<LayerParams> = group.iter().map(|&i| global.layers()[i].clone()).collect();
        let rep = RepresentativeLayer {
            layer: fusion_strategy(&members, strategy, beta, crate::seeds::derive_seed(seed, &[n as u64]))?,
            provenance: LayerProvenance {
                group: n,
                members: group.clone(),
                beta,
                strategy: strategy.name().to_string(),
            },
        };
        layers.push(rep.layer);
        provenance.push(rep.provenance);
    }
    Ok(Submodel {
        model: global.with_layers(layers)?,
        partition: partition.clone(),
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, LayerShape};

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn add_sub_examples() {
        assert_eq!(layer_add(&v(&[1.0, 2.0]), &v(&[3.0, -1.0])).unwrap(), v(&[4.0, 1.0]));
        assert_eq!(layer_sub(&v(&[4.0, 1.0]), &v(&[3.0, -1.0])).unwrap(), v(&[1.0, 2.0]));
        let a = v(&[0.25, -7.5]);
        assert_eq!(layer_sub(&a, &a).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(layer_add(&a, &v(&[0.0, 0.0])).unwrap(), a);
        assert!(layer_add(&a, &v(&[1.0])).is_err());
    }

    #[test]
    fn fuse_two_member_example() {
        let out = fuse_vectors(&[v(&[1.0, 0.0]), v(&[3.0, 2.0])], 0.5).unwrap();
        assert_eq!(out, v(&[2.0, 1.0]));
    }

    #[test]
    fn sum_strategy_vectors() {
        let shape = LayerShape {
            d_in: 1,
            d_out: 1,
            rank: 1,
            alpha: 1.0,
            activation: Activation::Identity,
        };
        let l1 = LayerParams::unflatten(&v(&[1.0, 0.0, 2.0, 1.0]), &shape).unwrap();
        let l2 = LayerParams::unflatten(&v(&[3.0, 2.0, -1.0, 1.0]), &shape).unwrap();
        let s = fusion_strategy(&[l1.clone(), l2], FusionStrategy::Sum, 0.1, 0).unwrap();
        assert_eq!(s.flatten().unwrap(), v(&[4.0, 2.0, 1.0, 2.0]));
        let single = fusion_strategy(std::slice::from_ref(&l1), FusionStrategy::Sum, 0.1, 0).unwrap();
        assert_eq!(single, l1);
    }

    #[test]
    fn empty_group() {
        assert!(matches!(fuse_group(&[], 0.1), Err(Error::EmptyGroup)));
        assert!(matches!(
            fusion_strategy(&[], FusionStrategy::ROne, 0.1, 0),
            Err(Error::EmptyGroup)
        ));
    }

    #[test]
    fn strategy_names_parse() {
        for s in [FusionStrategy::Dblf, FusionStrategy::Sum, FusionStrategy::ROne] {
            assert_eq!(s.name().parse::<FusionStrategy>().unwrap(), s);
        }
        assert!("avg".parse::<FusionStrategy>().is_err());
    }
}
