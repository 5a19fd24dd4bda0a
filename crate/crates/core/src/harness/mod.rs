//! Experiment front-end: configuration, the synthetic teacher task, runs,
//! sweeps and CSV/JSON emission.

mod config;
mod experiment;
mod task;

pub use config::{
    default_model_spec, AlgorithmConfig, DataConfig, ExperimentConfig, Method, ScheduleConfig,
    DEFAULT_ROUNDS_PER_STAGE, DEFAULT_STAGES,
};
pub use experiment::{
    emit_plot_data, plot_rows, rounds_csv, run_experiment, sweep, sweep_csv, ExperimentOutput, PlotRow, Summary,
    SweepAxis, SweepRow, SUMMARY_FORMAT,
};
pub use task::{generate_clients, TeacherTask};
