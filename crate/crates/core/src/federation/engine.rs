use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{verify_lemma1, ShiftReport};
use crate::error::{Error, Result};
use crate::fusion::build_submodel;
use crate::grouping::{grouping_strategy, GroupPartition};
use crate::model::{AdamW, LayeredModel};
use crate::seeds::{derive_seed, rng_for, stream};

use super::accounting::{broadcast_bytes, comm_bytes, compute_units, RoundRecord};
use super::client::Client;
use super::round::{
    aggregate, client_diagnostics, knowledge_transfer, local_train, sample_clients, LocalConfig, LocalUpdate,
};
use super::schedule::{cosine_lr, StageSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    /// Train the round's participants concurrently. Results do not depend on it.
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub capacity: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub partition: GroupPartition,
    /// One-time full-submodel broadcast at stage start, not part of the round totals.
    pub broadcast_bytes: u64,
    pub fusion_shift: ShiftReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub global: LayeredModel,
    pub records: Vec<RoundRecord>,
    pub stages: Vec<StageReport>,
}

struct ClientOutcome {
    update: LocalUpdate,
    loss: f64,
    grad_norm_sq: f64,
}

fn train_participants(
    model: &LayeredModel,
    clients: &[Client],
    participants: &[usize],
    cfg: &LocalConfig,
    stage: usize,
    round: usize,
    opts: &RunOptions,
) -> Result<Vec<ClientOutcome>> {
    let work = |&i: &usize| -> Result<ClientOutcome> {
        let client = &clients[i];
        let (loss, grad_norm_sq) = client_diagnostics(client, model)?;
        let mut rng = rng_for(
            opts.seed,
            &[stream::LOCAL, stage as u64, round as u64, client.id as u64],
        );
        Ok(ClientOutcome {
            update: local_train(client, model, cfg, &mut rng)?,
            loss,
            grad_norm_sq,
        })
    };
    if opts.parallel {
        participants.par_iter().map(work).collect()
    } else {
        participants.iter().map(work).collect()
    }
}

fn round_record(
    stage: usize,
    round: usize,
    model: &LayeredModel,
    outcomes: &[ClientOutcome],
    steps: usize,
    batch: usize,
) -> RoundRecord {
    let m = outcomes.len();
    let (uplink_bytes, downlink_bytes) = comm_bytes(model, m);
    RoundRecord {
        stage: stage + 1,
        round: round + 1,
        loss: outcomes.iter().map(|o| o.loss).sum::<f64>() / m as f64,
        grad_norm_sq: outcomes.iter().map(|o| o.grad_norm_sq).sum::<f64>() / m as f64,
        uplink_bytes,
        downlink_bytes,
        compute_units: compute_units(model, steps, batch, m),
    }
}

/// Builds stage `stage`'s submodel from `global`, trains it for the stage's
/// rounds and transfers the trained adapters back.
pub fn run_stage(
    global: &LayeredModel,
    schedule: &StageSchedule,
    stage: usize,
    clients: &[Client],
    opts: &RunOptions,
) -> Result<(LayeredModel, Vec<RoundRecord>, StageReport)> {
    schedule.validate(global.depth())?;
    if clients.is_empty() {
        return Err(Error::NoClients);
    }
    let capacity = schedule.capacities[stage];
    let (partition, mut submodel) = if capacity == global.depth() {
        (GroupPartition::singletons(capacity), global.clone())
    } else {
        let partition = grouping_strategy(
            global,
            capacity,
            schedule.grouping,
            derive_seed(opts.seed, &[stream::GROUPING, stage as u64]),
        )?;
        let sub = build_submodel(
            global,
            &partition,
            schedule.beta,
            schedule.fusion,
            derive_seed(opts.seed, &[stream::FUSION, stage as u64]),
        )?;
        (partition, sub.model)
    };
    let report = StageReport {
        stage: stage + 1,
        capacity,
        rounds: schedule.rounds[stage],
        learning_rate: schedule.learning_rates[stage],
        broadcast_bytes: broadcast_bytes(&submodel, clients.len()),
        fusion_shift: verify_lemma1(global, &partition, schedule.beta)?,
        partition,
    };

    let mut records = Vec::with_capacity(schedule.rounds[stage]);
    for round in 0..schedule.rounds[stage] {
        let cfg = LocalConfig {
            steps: schedule.local_steps,
            lr: schedule.lr_at(stage, round),
            batch_size: schedule.batch_size,
            optimizer: schedule.optimizer,
        };
        let participants = sample_clients(opts.seed, stage, round, clients, schedule.client_fraction)?;
        let outcomes = train_participants(&submodel, clients, &participants, &cfg, stage, round, opts)?;
        records.push(round_record(
            stage,
            round,
            &submodel,
            &outcomes,
            schedule.local_steps,
            schedule.batch_size,
        ));
        let updates: Vec<LocalUpdate> = outcomes.into_iter().map(|o| o.update).collect();
        submodel.set_adapters(&aggregate(&updates)?)?;
    }

    let updated = knowledge_transfer(global, &submodel, &report.partition)?;
    Ok((updated, records, report))
}

/// All stages in order.
pub fn run_schedule(
    global: &LayeredModel,
    schedule: &StageSchedule,
    clients: &[Client],
    opts: &RunOptions,
) -> Result<RunResult> {
    schedule.validate(global.depth())?;
    let mut current = global.clone();
    let mut records = Vec::with_capacity(schedule.total_rounds());
    let mut stages = Vec::with_capacity(schedule.stages());
    for s in 0..schedule.stages() {
        let (next, recs, report) = run_stage(&current, schedule, s, clients, opts)?;
        current = next;
        records.extend(recs);
        stages.push(report);
    }
    Ok(RunResult {
        global: current,
        records,
        stages,
    })
}

/// Plain FedAvg over LoRA adapters of the full model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub rounds: usize,
    pub lr: f64,
    pub local_steps: usize,
    pub batch_size: usize,
    pub client_fraction: f64,
    pub optimizer: AdamW,
}

/// End-to-end baseline: no grouping, fusion or transfer; every round trains
/// the full model. Logged as a single stage.
pub fn run_end_to_end(
    global: &LayeredModel,
    cfg: &BaselineConfig,
    clients: &[Client],
    opts: &RunOptions,
) -> Result<RunResult> {
    if clients.is_empty() {
        return Err(Error::NoClients);
    }
    let mut model = global.clone();
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let local = LocalConfig {
            steps: cfg.local_steps,
            lr: cosine_lr(cfg.lr, round, cfg.rounds),
            batch_size: cfg.batch_size,
            optimizer: cfg.optimizer,
        };
        let participants = sample_clients(opts.seed, 0, round, clients, cfg.client_fraction)?;
        let outcomes = train_participants(&model, clients, &participants, &local, 0, round, opts)?;
        records.push(round_record(
            0,
            round,
            &model,
            &outcomes,
            cfg.local_steps,
            cfg.batch_size,
        ));
        let updates: Vec<LocalUpdate> = outcomes.into_iter().map(|o| o.update).collect();
        model.set_adapters(&aggregate(&updates)?)?;
    }
    let partition = GroupPartition::singletons(global.depth());
    let stages = vec![StageReport {
        stage: 1,
        capacity: global.depth(),
        rounds: cfg.rounds,
        learning_rate: cfg.lr,
        broadcast_bytes: broadcast_bytes(global, clients.len()),
        fusion_shift: verify_lemma1(global, &partition, 1.0)?,
        partition,
    }];
    Ok(RunResult {
        global: model,
        records,
        stages,
    })
}
