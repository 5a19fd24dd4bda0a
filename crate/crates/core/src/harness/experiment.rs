use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{global_loss, run_end_to_end, run_schedule, RoundRecord, RunOptions, RunResult, StageReport};
use crate::model::Checkpoint;

use super::config::{ExperimentConfig, Method};
use super::task::{generate_clients, TeacherTask};

pub const SUMMARY_FORMAT: &str = "devft-summary/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format: String,
    pub seed: u64,
    pub method: String,
    pub grouping: String,
    pub fusion: String,
    pub beta: f64,
    pub capacities: Vec<usize>,
    pub rounds: Vec<usize>,
    pub total_rounds: usize,
    pub total_uplink_bytes: u64,
    pub total_downlink_bytes: u64,
    pub total_bytes: u64,
    pub total_compute_units: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub stages: Vec<StageReport>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: Summary,
    pub result: RunResult,
}

impl ExperimentOutput {
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)? + "\n")
    }

    pub fn rounds_csv(&self) -> Result<String> {
        rounds_csv(&self.result.records)
    }

    pub fn plot_csv(&self) -> Result<String> {
        emit_plot_data(&self.result.records)
    }

    /// Writes `summary.json`, `rounds.csv`, `plot.csv` and `checkpoint.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), self.summary_json()?)?;
        std::fs::write(dir.join("rounds.csv"), self.rounds_csv()?)?;
        std::fs::write(dir.join("plot.csv"), self.plot_csv()?)?;
        let ckpt = Checkpoint::new(self.summary.config.model, self.result.global.clone(), self.summary.seed);
        std::fs::write(dir.join("checkpoint.json"), ckpt.to_json()?)?;
        Ok(())
    }
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// One line per round: `stage,round,loss,grad_norm_sq,uplink_bytes,downlink_bytes,compute_units`.
pub fn rounds_csv(records: &[RoundRecord]) -> Result<String> {
    if records.is_empty() {
        return Ok("stage,round,loss,grad_norm_sq,uplink_bytes,downlink_bytes,compute_units\n".into());
    }
    csv_string(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    /// 1-based global round index.
    pub round: usize,
    pub cumulative_bytes: u64,
    pub cumulative_compute: u64,
    pub loss: f64,
}

pub fn plot_rows(records: &[RoundRecord]) -> Vec<PlotRow> {
    let mut bytes = 0u64;
    let mut compute = 0u64;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            bytes += r.uplink_bytes + r.downlink_bytes;
            compute += r.compute_units;
            PlotRow {
                round: i + 1,
                cumulative_bytes: bytes,
                cumulative_compute: compute,
                loss: r.loss,
            }
        })
        .collect()
}

/// Plot-ready projection: global round, cumulative bytes, cumulative compute, loss.
pub fn emit_plot_data(records: &[RoundRecord]) -> Result<String> {
    if records.is_empty() {
        return Ok("round,cumulative_bytes,cumulative_compute,loss\n".into());
    }
    csv_string(&plot_rows(records))
}

/// Builds the task and clients, runs the configured method and summarises it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let d = &config.data;
    let task = TeacherTask::new(&config.model, d.teacher_shift, d.components, d.noise, config.seed)?;
    let clients = generate_clients(&task, d.clients, d.samples_per_client, d.skew, config.seed)?;
    let opts = RunOptions {
        seed: config.seed,
        parallel: config.parallel,
    };
    let result = match config.algorithm.method {
        Method::Devft => run_schedule(&task.base, &config.stage_schedule()?, &clients, &opts)?,
        Method::End2end => run_end_to_end(&task.base, &config.baseline()?, &clients, &opts)?,
    };
    let up: u64 = result.records.iter().map(|r| r.uplink_bytes).sum();
    let down: u64 = result.records.iter().map(|r| r.downlink_bytes).sum();
    let summary = Summary {
        format: SUMMARY_FORMAT.into(),
        seed: config.seed,
        method: config.algorithm.method.name().into(),
        grouping: config.algorithm.grouping.name().into(),
        fusion: config.algorithm.fusion.name().into(),
        beta: config.algorithm.beta,
        capacities: result.stages.iter().map(|s| s.capacity).collect(),
        rounds: result.stages.iter().map(|s| s.rounds).collect(),
        total_rounds: result.records.len(),
        total_uplink_bytes: up,
        total_downlink_bytes: down,
        total_bytes: up + down,
        total_compute_units: result.records.iter().map(|r| r.compute_units).sum(),
        initial_loss: global_loss(&task.base, &clients)?,
        final_loss: global_loss(&result.global, &clients)?,
        stages: result.stages.clone(),
        config: config.clone(),
    };
    Ok(ExperimentOutput { summary, result })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    InitialCapacity,
    GrowthRate,
    Grouping,
    Fusion,
    Beta,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::InitialCapacity => "initial_capacity",
            SweepAxis::GrowthRate => "growth_rate",
            SweepAxis::Grouping => "grouping",
            SweepAxis::Fusion => "fusion",
            SweepAxis::Beta => "beta",
        }
    }

    /// `template` with this axis set to `value`.
    pub fn apply(self, template: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut cfg = template.clone();
        let bad =
            |e: &dyn std::fmt::Display| Error::config(format!("sweep.{}", self.name()), format!("`{value}`: {e}"));
        match self {
            SweepAxis::InitialCapacity | SweepAxis::GrowthRate => {
                let v: usize = value.parse().map_err(|e| bad(&e))?;
                let s = &mut cfg.schedule;
                s.capacities = None;
                s.stages = None;
                if self == SweepAxis::InitialCapacity {
                    s.initial_capacity = Some(v);
                } else {
                    s.growth_rate = Some(v);
                }
                // A per-stage list cannot follow a changing stage count.
                if s.rounds.is_some() {
                    s.total_rounds = Some(s.rounds.take().unwrap().iter().sum());
                }
            }
            SweepAxis::Grouping => cfg.algorithm.grouping = value.parse().map_err(|e: Error| bad(&e))?,
            SweepAxis::Fusion => cfg.algorithm.fusion = value.parse().map_err(|e: Error| bad(&e))?,
            SweepAxis::Beta => cfg.algorithm.beta = value.parse().map_err(|e| bad(&e))?,
        }
        cfg.validate().map_err(|e| bad(&e))?;
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial_capacity" => Ok(SweepAxis::InitialCapacity),
            "growth_rate" => Ok(SweepAxis::GrowthRate),
            "grouping" => Ok(SweepAxis::Grouping),
            "fusion" => Ok(SweepAxis::Fusion),
            "beta" => Ok(SweepAxis::Beta),
            other => Err(Error::config("sweep.axis", format!("unknown axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub capacities: String,
    pub final_loss: f64,
    pub total_bytes: u64,
    pub total_compute_units: u64,
}

impl SweepRow {
    fn new(axis: SweepAxis, value: &str, s: &Summary) -> Self {
        SweepRow {
            axis: axis.name().into(),
            value: value.into(),
            capacities: s.capacities.iter().map(usize::to_string).collect::<Vec<_>>().join("-"),
            final_loss: s.final_loss,
            total_bytes: s.total_bytes,
            total_compute_units: s.total_compute_units,
        }
    }
}

/// One run per value with the template's seed. All values are validated
/// before any run starts; runs execute in parallel, rows keep value order.
pub fn sweep(
    template: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<Vec<(SweepRow, ExperimentOutput)>> {
    if values.is_empty() {
        return Err(Error::config("sweep.values", "no values given"));
    }
    let configs = values
        .iter()
        .map(|v| axis.apply(template, v))
        .collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .zip(values)
        .map(|(cfg, v)| {
            let out = run_experiment(cfg)?;
            Ok((SweepRow::new(axis, v, &out.summary), out))
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    csv_string(rows)
}
