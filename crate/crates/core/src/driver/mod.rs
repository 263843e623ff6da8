//! End-to-end orchestration: training run, forecast, correction and persistence.

mod config;
mod datadriven;
mod problem;
mod report;
mod store;

pub use config::{
    apply_override, Acceleration, CorrectionConfig, HodmdConfig, LinearMode, LoadConfig, MeshSource, OuterOptions,
    RunConfig, TimeConfig, WaveformKind,
};
pub use datadriven::{
    fit_modes, forecast_training, solve_datadriven, DataDrivenOptions, DataDrivenRun, Forecasted, SampledErrors,
};
pub use problem::{solve_reference, Problem, ReferenceRun};
pub use report::{
    compare_runs, Comparison, DataDrivenSummary, EvaluationCounts, Method, PhaseTime, PlasticField, RunArtifacts,
    RunReport, Timings,
};
pub use store::{
    load_config, load_displacement, load_manifest, load_run, load_training, load_training_modes, run_datadriven,
    run_dir, run_extended_reference, run_reference, save_datadriven, save_reference, Manifest, TrainingData,
    FORMAT_VERSION,
};
