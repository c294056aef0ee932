//! Experiment orchestration: configs, training loops, sweeps, ledgers and
//! run output.

mod config;
mod ledger;
mod output;
pub mod recipes;
mod sweep;
mod train;

pub use config::{DatasetKind, ExperimentConfig, ProtocolKind, RawConfig, KEYS};
pub use ledger::{Diagnostics, FinalSummary, LedgerRow, MetricsLedger, CSV_HEADER};
pub use output::{ledger_file_name, write_run, SUMMARY_FILE, TIMING_FILE};
pub use sweep::{sweep, sweep_configs, sweep_key, SweepPoint};
pub use train::{
    build_cil_stream, build_stream_source, diagnostics, evaluate, load_cil_data,
    new_model_and_learner, run_cil, run_cil_detailed, run_cil_on, run_experiment,
    run_scratch_baselines, run_streaming, run_streaming_on, train_task, CilRun, EVAL_BATCH,
};
