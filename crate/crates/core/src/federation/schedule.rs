use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionStrategy;
use crate::grouping::GroupingStrategy;
use crate::model::AdamW;

/// Everything the staged engine needs besides the model and the clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    /// Submodel depth per stage, strictly increasing, ending at the full depth.
    pub capacities: Vec<usize>,
    pub rounds: Vec<usize>,
    /// Base learning rate per stage (cosine-decayed within the stage).
    pub learning_rates: Vec<f64>,
    pub beta: f64,
    pub local_steps: usize,
    pub client_fraction: f64,
    pub batch_size: usize,
    pub optimizer: AdamW,
    pub grouping: GroupingStrategy,
    pub fusion: FusionStrategy,
}

impl StageSchedule {
    pub fn stages(&self) -> usize {
        self.capacities.len()
    }

    pub fn total_rounds(&self) -> usize {
        self.rounds.iter().sum()
    }

    pub fn validate(&self, total_layers: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchedule(msg));
        if self.capacities.is_empty() {
            return bad("no stages".into());
        }
        if self.capacities[0] == 0 {
            return bad("capacities must be positive".into());
        }
        if let Some(w) = self.capacities.windows(2).find(|w| w[0] >= w[1]) {
            return bad(format!("capacities not strictly increasing at {} -> {}", w[0], w[1]));
        }
        if *self.capacities.last().unwrap() != total_layers {
            return bad(format!(
                "last capacity {} must equal the model depth {total_layers}",
                self.capacities.last().unwrap()
            ));
        }
        if self.rounds.len() != self.capacities.len() || self.learning_rates.len() != self.capacities.len() {
            return bad("rounds and learning rates need one entry per stage".into());
        }
        if self.learning_rates.iter().any(|lr| !(lr.is_finite() && *lr >= 0.0)) {
            return bad("learning rates must be finite and nonnegative".into());
        }
        if self.local_steps == 0 || self.batch_size == 0 {
            return bad("local steps and batch size must be positive".into());
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return bad(format!("client fraction {} outside (0, 1]", self.client_fraction));
        }
        if !self.beta.is_finite() {
            return bad("beta must be finite".into());
        }
        Ok(())
    }

    /// Learning rate for round `round` of stage `stage`: cosine decay from the
    /// stage's base rate, restarting every stage.
    pub fn lr_at(&self, stage: usize, round: usize) -> f64 {
        cosine_lr(self.learning_rates[stage], round, self.rounds[stage])
    }
}

pub fn cosine_lr(base: f64, round: usize, rounds: usize) -> f64 {
    if rounds == 0 {
        return base;
    }
    base * 0.5 * (1.0 + (std::f64::consts::PI * round as f64 / rounds as f64).cos())
}

/// Staged rule: `lr_s = initial · growth^(s−1)`, capped at `cap`.
pub fn staged_learning_rates(initial: f64, growth: f64, cap: f64, stages: usize) -> Vec<f64> {
    (0..stages)
        .map(|s| (initial * growth.powi(s as i32)).min(cap))
        .collect()
}

/// `initial, initial·m, initial·m², …`, clamped so the last entry is exactly `layers`.
pub fn growth_capacities(initial: usize, multiplier: usize, layers: usize) -> Result<Vec<usize>> {
    if initial == 0 || initial > layers {
        return Err(Error::InvalidSchedule(format!(
            "initial capacity {initial} outside 1..={layers}"
        )));
    }
    if multiplier < 2 {
        return Err(Error::InvalidSchedule(format!(
            "growth multiplier {multiplier} must be at least 2"
        )));
    }
    let mut caps = vec![initial];
    while *caps.last().unwrap() < layers {
        let next = caps.last().unwrap().saturating_mul(multiplier).min(layers);
        caps.push(next);
    }
    Ok(caps)
}

/// `{L/2^(S−1), …, L/2, L}`.
pub fn halving_capacities(layers: usize, stages: usize) -> Result<Vec<usize>> {
    if stages == 0 {
        return Err(Error::InvalidSchedule("at least one stage required".into()));
    }
    let denom = 1usize
        .checked_shl(stages as u32 - 1)
        .filter(|d| *d <= layers && layers.is_multiple_of(*d))
        .ok_or_else(|| Error::InvalidSchedule(format!("{layers} layers cannot be halved {} times", stages - 1)))?;
    Ok((0..stages).map(|s| layers / denom * (1 << s)).collect())
}
