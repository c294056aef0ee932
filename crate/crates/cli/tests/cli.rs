use std::path::Path;
use std::process::Command;

fn flycl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_flycl")).args(args).output().unwrap()
}

const SMALL: &[&str] = &[
    "--set", "pn=20", "--set", "kc=200", "--set", "r=4", "--set", "k=0.05",
    "--set", "train_per_class=40", "--set", "test_per_class=10", "--quiet",
];

#[test]
fn run_cil_writes_one_ledger_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["run-cil", "--set", "seeds=1,2,3", "--threads", "1", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let o = flycl(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for s in 1..=3 {
        assert!(out.join(format!("ledger_seed{s}.csv")).is_file());
    }
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"config_echo\"") && summary.contains("\"per_seed\""));
    // Same inputs, same bytes.
    let again = dir.path().join("again");
    let mut args2 = args.clone();
    let pos = args2.iter().position(|a| *a == out.to_str().unwrap()).unwrap();
    args2[pos] = again.to_str().unwrap();
    assert!(flycl(&args2).status.success());
    for f in ["ledger_seed2.csv", "summary.json"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap());
    }
}

#[test]
fn unknown_key_is_a_usage_error() {
    let o = flycl(&["run-cil", "--set", "learningrate=0.1", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learningrate"));
    assert_eq!(flycl(&["no-such-command"]).status.code(), Some(2));
    assert!(!Path::new("unused").exists());
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = flycl(&[
        "ingest-idx", "--set", "images=/nonexistent/a", "--set", "labels=/nonexistent/b",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_birthday_reports_argmax() {
    let o = flycl(&["analyze-birthday", "--set", "n=50", "--set", "m=2000"]);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("quantity,parameter,value\n"));
    assert!(csv.contains("argmax_r,n=50 m=2000,25"));
}

#[test]
fn analyze_flops_counts() {
    let o = flycl(&["analyze-flops", "--quiet"]);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.contains("dense_forward,,200000"));
    assert!(csv.contains("fly_forward,,12000"));
    assert!(csv.contains("head_update,,1200"));
}

#[test]
fn gen_odor_then_run_on_feature_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut args = vec!["gen-odor", "--out", data.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    assert!(flycl(&args).status.success());
    let train = format!("train_file={}", data.join("odor_train.flyf").display());
    let test = format!("test_file={}", data.join("odor_test.flyf").display());
    let out = dir.path().join("run");
    let mut args = vec![
        "run-cil", "--set", "dataset=features", "--set", &train, "--set", &test, "--set", "scratch=false",
        "--out", out.to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL);
    let o = flycl(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("ledger_seed0.csv").is_file());
}

#[test]
fn report_lists_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("odor").join("sgd-fly");
    let mut args = vec!["run-cil", "--out", run.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    assert!(flycl(&args).status.success());
    let o = flycl(&["report", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let verdicts = std::fs::read_to_string(dir.path().join("report").join("verdicts.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&verdicts).unwrap();
    let ids: Vec<u64> = v.as_array().unwrap().iter().map(|x| x["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, (1..=10).collect::<Vec<_>>());
    assert!(dir.path().join("report").join("fig2b_acc.csv").is_file());
}
