use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{growth_capacities, halving_capacities, staged_learning_rates, BaselineConfig, StageSchedule};
use crate::fusion::{FusionStrategy, DEFAULT_BETA};
use crate::grouping::GroupingStrategy;
use crate::model::{Activation, AdamW, ModelSpec};

pub const DEFAULT_STAGES: usize = 4;
pub const DEFAULT_ROUNDS_PER_STAGE: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Devft,
    End2end,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Devft => "devft",
            Method::End2end => "end2end",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "devft" => Ok(Method::Devft),
            "end2end" | "end-to-end" => Ok(Method::End2end),
            other => Err(Error::config("algorithm.method", format!("unknown method `{other}`"))),
        }
    }
}

/// Stage layout and optimisation knobs.
///
/// Capacities come from exactly one source: an explicit list, the growth
/// rule (`initial_capacity`, `growth_rate`), or halving from the top with
/// `stages` stages (the default). Rounds come from exactly one of `rounds`,
/// `rounds_per_stage` or `total_rounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacities: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_rate: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds_per_stage: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_rounds: Option<usize>,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub lr_growth: f64,
    pub local_steps: usize,
    pub batch_size: usize,
    pub client_fraction: f64,
    pub weight_decay: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            stages: None,
            capacities: None,
            initial_capacity: None,
            growth_rate: None,
            rounds: None,
            rounds_per_stage: None,
            total_rounds: None,
            lr_initial: 1e-5,
            lr_final: 1e-2,
            lr_growth: 10.0,
            local_steps: 10,
            batch_size: 16,
            client_fraction: 0.1,
            weight_decay: 0.0,
        }
    }
}

/// Synthetic teacher task and its non-IID split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub clients: usize,
    pub samples_per_client: usize,
    /// Dirichlet concentration of each client's mixture weights.
    pub skew: f64,
    /// Standard deviation of the target noise.
    pub noise: f64,
    /// Gaussian components in the input distribution.
    pub components: usize,
    /// Size of the teacher's planted weight change relative to the base scale.
    pub teacher_shift: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            clients: 20,
            samples_per_client: 256,
            skew: 0.5,
            noise: 0.1,
            components: 4,
            teacher_shift: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub method: Method,
    pub grouping: GroupingStrategy,
    pub fusion: FusionStrategy,
    pub beta: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            method: Method::Devft,
            grouping: GroupingStrategy::Spectral,
            fusion: FusionStrategy::Dblf,
            beta: DEFAULT_BETA,
        }
    }
}

pub fn default_model_spec() -> ModelSpec {
    ModelSpec {
        input_dim: 8,
        width: 16,
        output_dim: 4,
        layers: 16,
        rank: 4,
        alpha: 8.0,
        activation: Activation::Tanh,
    }
}

/// A complete, reproducible experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelSpec,
    pub schedule: ScheduleConfig,
    pub data: DataConfig,
    pub algorithm: AlgorithmConfig,
    /// Train a round's participants on the rayon pool. Outputs are identical either way.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            model: default_model_spec(),
            schedule: ScheduleConfig::default(),
            data: DataConfig::default(),
            algorithm: AlgorithmConfig::default(),
            parallel: false,
        }
    }
}

fn positive(field: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::config(field, "must be positive"));
    }
    Ok(())
}

fn positive_f(field: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(field, format!("must be finite and positive, got {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        positive("model.input_dim", m.input_dim)?;
        positive("model.width", m.width)?;
        positive("model.output_dim", m.output_dim)?;
        positive("model.layers", m.layers)?;
        positive("model.rank", m.rank)?;
        positive_f("model.alpha", m.alpha)?;

        let s = &self.schedule;
        positive_f("schedule.lr_initial", s.lr_initial)?;
        positive_f("schedule.lr_final", s.lr_final)?;
        if !(s.lr_growth.is_finite() && s.lr_growth >= 1.0) {
            return Err(Error::config(
                "schedule.lr_growth",
                format!("must be at least 1, got {}", s.lr_growth),
            ));
        }
        positive("schedule.local_steps", s.local_steps)?;
        positive("schedule.batch_size", s.batch_size)?;
        if !(s.client_fraction > 0.0 && s.client_fraction <= 1.0) {
            return Err(Error::config(
                "schedule.client_fraction",
                format!("must lie in (0, 1], got {}", s.client_fraction),
            ));
        }
        if !(s.weight_decay.is_finite() && s.weight_decay >= 0.0) {
            return Err(Error::config("schedule.weight_decay", "must be finite and nonnegative"));
        }

        let d = &self.data;
        positive("data.clients", d.clients)?;
        positive("data.samples_per_client", d.samples_per_client)?;
        positive_f("data.skew", d.skew)?;
        positive("data.components", d.components)?;
        if !(d.noise.is_finite() && d.noise >= 0.0) {
            return Err(Error::config("data.noise", "must be finite and nonnegative"));
        }
        if !(d.teacher_shift.is_finite() && d.teacher_shift >= 0.0) {
            return Err(Error::config("data.teacher_shift", "must be finite and nonnegative"));
        }
        if !self.algorithm.beta.is_finite() {
            return Err(Error::config("algorithm.beta", "must be finite"));
        }

        let schedule = self.stage_schedule()?;
        schedule.validate(m.layers).map_err(|e| match e {
            Error::InvalidSchedule(msg) => Error::config("schedule", msg),
            other => other,
        })
    }

    /// Submodel depths per stage for the devft method.
    pub fn capacities(&self) -> Result<Vec<usize>> {
        let s = &self.schedule;
        let layers = self.model.layers;
        let growth = s.initial_capacity.is_some() || s.growth_rate.is_some();
        let caps = match (&s.capacities, growth) {
            (Some(_), true) => {
                return Err(Error::config(
                    "schedule.capacities",
                    "give either an explicit list or initial_capacity/growth_rate, not both",
                ))
            }
            (Some(c), false) => c.clone(),
            (None, true) => {
                let initial = s.initial_capacity.unwrap_or((layers / 8).max(1));
                let rate = s.growth_rate.unwrap_or(2);
                growth_capacities(initial, rate, layers)
                    .map_err(|e| Error::config("schedule.growth_rate", e.to_string()))?
            }
            (None, false) => halving_capacities(layers, s.stages.unwrap_or(DEFAULT_STAGES))
                .map_err(|e| Error::config("schedule.stages", e.to_string()))?,
        };
        if let Some(n) = s.stages {
            if n != caps.len() {
                return Err(Error::config(
                    "schedule.stages",
                    format!("{n} stages requested but the capacities define {}", caps.len()),
                ));
            }
        }
        Ok(caps)
    }

    /// Rounds per stage for `stages` stages.
    pub fn rounds(&self, stages: usize) -> Result<Vec<usize>> {
        let s = &self.schedule;
        let given = [
            s.rounds.is_some(),
            s.rounds_per_stage.is_some(),
            s.total_rounds.is_some(),
        ];
        if given.iter().filter(|&&g| g).count() > 1 {
            return Err(Error::config(
                "schedule.rounds",
                "give at most one of rounds, rounds_per_stage, total_rounds",
            ));
        }
        if let Some(r) = &s.rounds {
            if r.len() != stages {
                return Err(Error::config(
                    "schedule.rounds",
                    format!("{} entries for {stages} stages", r.len()),
                ));
            }
            return Ok(r.clone());
        }
        if let Some(total) = s.total_rounds {
            // Remainder goes one round per stage from the first stage on.
            let (q, rem) = (total / stages, total % stages);
            return Ok((0..stages).map(|i| q + usize::from(i < rem)).collect());
        }
        Ok(vec![s.rounds_per_stage.unwrap_or(DEFAULT_ROUNDS_PER_STAGE); stages])
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            weight_decay: self.schedule.weight_decay,
            ..AdamW::default()
        }
    }

    /// Resolved staged schedule for the devft method. Stage rates follow the
    /// capped geometric ramp, except that the full-depth stage always runs at
    /// `lr_final`.
    pub fn stage_schedule(&self) -> Result<StageSchedule> {
        let s = &self.schedule;
        let capacities = self.capacities()?;
        let rounds = self.rounds(capacities.len())?;
        let mut learning_rates = staged_learning_rates(s.lr_initial, s.lr_growth, s.lr_final, capacities.len());
        *learning_rates.last_mut().expect("at least one stage") = s.lr_final;
        Ok(StageSchedule {
            learning_rates,
            capacities,
            rounds,
            beta: self.algorithm.beta,
            local_steps: s.local_steps,
            client_fraction: s.client_fraction,
            batch_size: s.batch_size,
            optimizer: self.optimizer(),
            grouping: self.algorithm.grouping,
            fusion: self.algorithm.fusion,
        })
    }

    /// The end-to-end baseline: one full-depth stage with the same total
    /// rounds as the staged schedule, at the final learning rate.
    pub fn baseline(&self) -> Result<BaselineConfig> {
        let staged = self.stage_schedule()?;
        Ok(BaselineConfig {
            rounds: staged.total_rounds(),
            lr: *staged.learning_rates.last().expect("at least one stage"),
            local_steps: staged.local_steps,
            batch_size: staged.batch_size,
            client_fraction: staged.client_fraction,
            optimizer: staged.optimizer,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let s = cfg.stage_schedule().unwrap();
        assert_eq!(s.capacities, vec![2, 4, 8, 16]);
        assert_eq!(s.rounds, vec![25; 4]);
        assert_eq!(s.learning_rates, vec![1e-5, 1e-4, 1e-3, 1e-2]);
        assert_eq!(cfg.baseline().unwrap().lr, 1e-2);
        assert_eq!(cfg.baseline().unwrap().rounds, 100);
    }

    #[test]
    fn growth_sequences() {
        let mut cfg = ExperimentConfig::default();
        cfg.model.layers = 32;
        cfg.schedule.initial_capacity = Some(4);
        for (rate, want) in [(2, vec![4, 8, 16, 32]), (4, vec![4, 16, 32]), (8, vec![4, 32])] {
            cfg.schedule.growth_rate = Some(rate);
            assert_eq!(cfg.capacities().unwrap(), want);
        }
    }

    #[test]
    fn rejects_unknown_and_conflicting_fields() {
        let err = ExperimentConfig::from_json(r#"{"seed": 1, "bogus": 2}"#).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("bogus"));

        let err = ExperimentConfig::from_json(r#"{"schedule": {"rounds": [1,1,1,1], "total_rounds": 4}}"#).unwrap_err();
        assert!(err.to_string().contains("schedule.rounds"), "{err}");

        let err = ExperimentConfig::from_json(r#"{"schedule": {"client_fraction": 1.5}}"#).unwrap_err();
        assert!(err.to_string().contains("schedule.client_fraction"), "{err}");

        let err = ExperimentConfig::from_json(r#"{"data": {"skew": 0}}"#).unwrap_err();
        assert!(err.to_string().contains("data.skew"), "{err}");

        let err = ExperimentConfig::from_json(r#"{"schedule": {"capacities": [4, 2, 16]}}"#).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"), "{err}");
    }

    #[test]
    fn total_rounds_split() {
        let mut cfg = ExperimentConfig::default();
        cfg.schedule.total_rounds = Some(10);
        assert_eq!(cfg.rounds(4).unwrap(), vec![3, 3, 2, 2]);
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.schedule.capacities = Some(vec![4, 16]);
        cfg.schedule.total_rounds = Some(9);
        cfg.algorithm.fusion = FusionStrategy::ROne;
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
