//! Executable checks of the fusion-shift bound and per-stage gradient-norm
//! tracking.
//!
//! For a group `g` fused with weight `β`, the shift from the full-weight
//! fusion (`β = 1`) is `|β − 1|·‖Σ_j (θ_j − θ_anchor)‖`, which is bounded by
//! `|β − 1|·|g|·δ` where `δ` is the largest pairwise distance inside the group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::RoundRecord;
use crate::fusion::fuse_vectors;
use crate::grouping::GroupPartition;
use crate::model::{LayerParams, LayeredModel};
use crate::numerics::DenseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShift {
    pub group: usize,
    pub size: usize,
    pub shift: f64,
    pub bound: f64,
    /// Largest pairwise distance between members.
    pub delta: f64,
    /// `β · Σ_{j,k} ‖θ_j − θ_k‖` over ordered pairs; the bound's other form,
    /// up to an unspecified constant. Reported, not checked.
    pub pairwise_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub beta: f64,
    pub groups: Vec<GroupShift>,
    pub total_shift: f64,
    pub total_bound: f64,
    /// Indices of groups with `shift > bound`.
    pub violations: Vec<usize>,
}

impl ShiftReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty() && self.total_shift <= self.total_bound
    }
}

/// `(shift, bound)` for one group of flat layer vectors, anchor first.
pub fn group_fusion_shift_vectors(vectors: &[DenseVector], beta: f64) -> Result<(f64, f64)> {
    let stats = shift_stats(vectors, beta)?;
    Ok((stats.shift, stats.bound))
}

/// `(shift, bound)` for one group of layers in ascending index order.
pub fn group_fusion_shift(layers: &[LayerParams], beta: f64) -> Result<(f64, f64)> {
    let vectors = layers.iter().map(LayerParams::flatten).collect::<Result<Vec<_>>>()?;
    group_fusion_shift_vectors(&vectors, beta)
}

struct Stats {
    shift: f64,
    bound: f64,
    delta: f64,
    pairwise: f64,
}

fn shift_stats(vectors: &[DenseVector], beta: f64) -> Result<Stats> {
    if vectors.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let fused = fuse_vectors(vectors, beta)?;
    let full = fuse_vectors(vectors, 1.0)?;
    let shift = fused.distance(&full);
    let mut delta: f64 = 0.0;
    let mut pairwise = 0.0;
    for (j, a) in vectors.iter().enumerate() {
        for b in &vectors[j + 1..] {
            let d = a.distance(b);
            delta = delta.max(d);
            pairwise += 2.0 * d;
        }
    }
    Ok(Stats {
        shift,
        bound: (beta - 1.0).abs() * vectors.len() as f64 * delta,
        delta,
        pairwise,
    })
}

/// Evaluates the bound for every group of `partition` over `model`'s layers.
pub fn verify_lemma1(model: &LayeredModel, partition: &GroupPartition, beta: f64) -> Result<ShiftReport> {
    if partition.layers() != model.depth() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} layers, model has {}",
            partition.layers(),
            model.depth()
        )));
    }
    let mut groups = Vec::with_capacity(partition.len());
    let mut violations = Vec::new();
    for (n, g) in partition.groups().iter().enumerate() {
        let vectors = g
            .iter()
            .map(|&i| model.layers()[i].flatten())
            .collect::<Result<Vec<_>>>()?;
        let s = shift_stats(&vectors, beta)?;
        if s.shift > s.bound {
            violations.push(n);
        }
        groups.push(GroupShift {
            group: n,
            size: g.len(),
            shift: s.shift,
            bound: s.bound,
            delta: s.delta,
            pairwise_form: beta * s.pairwise,
        });
    }
    Ok(ShiftReport {
        beta,
        total_shift: groups.iter().map(|g| g.shift).sum(),
        total_bound: groups.iter().map(|g| g.bound).sum(),
        groups,
        violations,
    })
}

/// Running mean of `grad_norm_sq` within one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGradientSeries {
    pub stage: usize,
    pub running_mean: Vec<f64>,
}

/// Per-stage prefix means `(1/t)·Σ_{u<t} ‖∇F_s‖²`, in record order.
pub fn gradient_norm_series(records: &[RoundRecord]) -> Result<Vec<StageGradientSeries>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut out: Vec<StageGradientSeries> = Vec::new();
    let mut sum = 0.0;
    for r in records {
        if out.last().is_none_or(|s| s.stage != r.stage) {
            out.push(StageGradientSeries {
                stage: r.stage,
                running_mean: Vec::new(),
            });
            sum = 0.0;
        }
        let series = out.last_mut().expect("pushed above");
        sum += r.grad_norm_sq;
        series.running_mean.push(sum / (series.running_mean.len() + 1) as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    fn record(stage: usize, g: f64) -> RoundRecord {
        RoundRecord {
            stage,
            round: 1,
            loss: 0.0,
            grad_norm_sq: g,
            uplink_bytes: 0,
            downlink_bytes: 0,
            compute_units: 0,
        }
    }

    #[test]
    fn hand_evaluated_shift() {
        let (shift, bound) = group_fusion_shift_vectors(&[v(&[0.0, 0.0]), v(&[2.0, 0.0])], 0.5).unwrap();
        assert!((shift - 1.0).abs() < 1e-15);
        assert!((bound - 2.0).abs() < 1e-15);
    }

    #[test]
    fn identical_members_and_unit_beta() {
        let same = [v(&[1.0, 2.0]), v(&[1.0, 2.0]), v(&[1.0, 2.0])];
        assert_eq!(group_fusion_shift_vectors(&same, 0.1).unwrap(), (0.0, 0.0));
        let diff = [v(&[1.0, 2.0]), v(&[-1.0, 5.0])];
        assert_eq!(group_fusion_shift_vectors(&diff, 1.0).unwrap().0, 0.0);
        assert!(group_fusion_shift_vectors(&[], 0.1).is_err());
    }

    #[test]
    fn running_means() {
        let s = gradient_norm_series(&[record(1, 1.0), record(1, 3.0), record(2, 5.0)]).unwrap();
        assert_eq!(s[0].running_mean, vec![1.0, 2.0]);
        assert_eq!(s[1].running_mean, vec![5.0]);
        let c = gradient_norm_series(&[record(1, 0.7); 4]).unwrap();
        assert!(c[0].running_mean.iter().all(|&m| (m - 0.7).abs() < 1e-15));
        assert!(gradient_norm_series(&[]).is_err());
    }
}
