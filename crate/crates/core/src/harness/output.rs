use std::path::Path;

use super::config::ExperimentConfig;
use super::ledger::MetricsLedger;
use crate::codec::write_atomic;
use crate::report::RunSummary;
use crate::Result;

pub const SUMMARY_FILE: &str = "summary.json";
/// Wall-clock sidecar; the only output that differs between identical runs.
pub const TIMING_FILE: &str = "timing.json";

pub fn ledger_file_name(seed: u64) -> String {
    format!("ledger_seed{seed}.csv")
}

/// Writes one CSV per ledger, the JSON summary and the timing sidecar into
/// `dir`, each through a temp file and rename.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, ledgers: &[MetricsLedger]) -> Result<RunSummary> {
    std::fs::create_dir_all(dir)?;
    for l in ledgers {
        write_atomic(&dir.join(ledger_file_name(l.seed)), l.to_csv().as_bytes())?;
    }
    let summary = RunSummary::new(cfg.raw().values().clone(), ledgers);
    write_atomic(&dir.join(SUMMARY_FILE), summary.to_json()?.as_bytes())?;
    let timing: std::collections::BTreeMap<String, Vec<f64>> = ledgers
        .iter()
        .map(|l| (l.seed.to_string(), l.wall_clock.clone()))
        .collect();
    write_atomic(&dir.join(TIMING_FILE), serde_json::to_string_pretty(&timing)?.as_bytes())?;
    Ok(summary)
}
