//! Staged federated training: client sampling, local AdamW steps on LoRA
//! adapters, sample-weighted averaging, cross-stage knowledge transfer and
//! traffic/compute accounting.

mod accounting;
mod client;
mod engine;
mod round;
mod schedule;

pub use accounting::{broadcast_bytes, comm_bytes, compute_units, RoundRecord, LAYER_UNIT_COST, WIRE_BYTES_PER_PARAM};
pub use client::{global_loss, Client};
pub use engine::{run_end_to_end, run_schedule, run_stage, BaselineConfig, RunOptions, RunResult, StageReport};
pub use round::{
    aggregate, client_diagnostics, knowledge_transfer, local_train, participants_per_round, sample_clients,
    LocalConfig, LocalUpdate,
};
pub use schedule::{cosine_lr, growth_capacities, halving_capacities, staged_learning_rates, StageSchedule};
