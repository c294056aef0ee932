//! End-to-end acceptance run: trains every experiment family into a scratch
//! directory, builds the report and prints one line per criterion.
//!
//! Failed criteria are printed, not asserted. Set
//! `FLYCL_ACCEPTANCE_STRICT=1` to turn any failed criterion into a test
//! failure. `FLYCL_ACCEPTANCE_OUT=DIR` keeps the runs and report in `DIR`.

use std::path::{Path, PathBuf};

use flycl::harness::{recipes, run_experiment, write_run, ExperimentConfig};
use flycl::report::build_report;

fn run_into(dir: &Path, cfg: &ExperimentConfig) {
    let ledgers: Vec<_> = cfg
        .seeds
        .iter()
        .map(|&s| run_experiment(cfg, s).unwrap_or_else(|e| panic!("{}: {e}", dir.display())))
        .collect();
    write_run(dir, cfg, &ledgers).unwrap();
}

fn variants(base: &ExperimentConfig, strategies: &[&str]) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for s in strategies {
        for ablate in ["false", "true"] {
            out.push(base.with("strategy", s).unwrap().with("ablate", ablate).unwrap());
        }
    }
    out
}

fn odor(root: &Path) {
    let base = recipes::load("odor").unwrap();
    for cfg in variants(&base, &["sgd", "si"]) {
        run_into(&root.join("odor").join(cfg.variant_name()), &cfg);
    }
}

fn coding_level(root: &Path) {
    let base = recipes::load("odor").unwrap();
    for k in ["0.001", "0.005", "0.01", "0.05", "0.1", "0.3", "0.5"] {
        let cfg = base.with("k", k).unwrap();
        run_into(&root.join("coding_level").join(format!("k={k}")), &cfg);
    }
}

fn expansion_ratio(root: &Path) {
    let base = recipes::load("odor").unwrap().with("scratch", "false").unwrap();
    for ratio in [5usize, 10, 20, 40] {
        let cfg = base.with("kc", &(ratio * base.pn).to_string()).unwrap();
        run_into(&root.join("expansion_ratio").join(format!("expansion_ratio={ratio}")), &cfg);
    }
}

fn stream(root: &Path) {
    let base = recipes::load("stream").unwrap();
    for cfg in variants(&base, &["ewc", "si"]) {
        run_into(&root.join("stream").join(cfg.variant_name()), &cfg);
    }
}

fn imbalance(root: &Path) {
    let base = recipes::load("imbalance").unwrap();
    for gamma in ["2", "10"] {
        for order in ["normal", "reverse", "random"] {
            let cell = base.with("gamma", gamma).unwrap().with("imbalance_order", order).unwrap();
            for cfg in variants(&cell, &["sgd", "ewc", "si"]) {
                let dir = root.join("imbalance").join(format!("gamma={gamma}-{order}")).join(cfg.variant_name());
                run_into(&dir, &cfg);
            }
        }
    }
}

fn main() {
    let keep = std::env::var_os("FLYCL_ACCEPTANCE_OUT").map(PathBuf::from);
    let tmp = tempfile::tempdir().unwrap();
    let root = keep.clone().unwrap_or_else(|| tmp.path().to_path_buf());
    odor(&root);
    coding_level(&root);
    expansion_ratio(&root);
    stream(&root);
    imbalance(&root);

    let report = build_report(&root).unwrap();
    if keep.is_some() {
        let out = root.join("report");
        std::fs::create_dir_all(&out).unwrap();
        for (stem, csv) in &report.figures {
            std::fs::write(out.join(format!("{stem}.csv")), csv).unwrap();
        }
        let json = serde_json::to_string_pretty(&report.verdicts).unwrap();
        std::fs::write(out.join("verdicts.json"), json).unwrap();
    }
    let ids: Vec<u8> = report.verdicts.iter().map(|v| v.id).collect();
    assert_eq!(ids, (1..=10).collect::<Vec<u8>>());
    for v in &report.verdicts {
        println!("{}", v.line());
        assert!(!v.detail.starts_with("not evaluated"), "criterion {} had no data", v.id);
    }
    let failed: Vec<u8> = report.verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    println!("acceptance: {} of 10 criteria passed", 10 - failed.len());
    if std::env::var("FLYCL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        assert!(failed.is_empty(), "failed criteria: {failed:?}");
    }
}
