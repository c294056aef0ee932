//! Seed aggregation, figure tables and pass/fail verdicts.
//!
//! A report directory holds run directories (each with `summary.json` and
//! per-seed ledger CSVs) grouped by family:
//!
//! - `odor/<variant>/`: the odor class-incremental baseline.
//! - `coding_level/<value>/` and `expansion_ratio/<value>/`: sweeps.
//! - `stream/<variant>/`: permuted streaming runs.
//! - `imbalance/<cell>/<variant>/`: class-imbalance runs.
//!
//! Runs are identified by their echoed configs, not by directory names.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::harness::{
    ledger_file_name, ExperimentConfig, FinalSummary, MetricsLedger, RawConfig, SUMMARY_FILE,
};
use crate::rng::substream;
use crate::tasks::{imbalance_sizes, ImbalanceOrder, ImbalanceSpec};
use crate::{Error, Result};

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    /// Set when only one seed contributed; `std` is then 0.
    pub single_seed: bool,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

pub fn aggregate(summaries: &[FinalSummary]) -> Aggregate {
    let mut agg = Aggregate {
        n: summaries.len(),
        single_seed: summaries.len() == 1,
        ..Aggregate::default()
    };
    let Some(first) = summaries.first() else {
        return agg;
    };
    for (name, _) in first.fields() {
        let vals: Vec<f64> = summaries
            .iter()
            .filter_map(|s| s.fields().into_iter().find(|(n, _)| *n == name).and_then(|f| f.1))
            .collect();
        if vals.is_empty() {
            continue;
        }
        let (m, s) = mean_std(&vals);
        agg.mean.insert(name.to_string(), m);
        agg.std.insert(name.to_string(), s);
    }
    agg
}

/// The JSON summary of one run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_echo: BTreeMap<String, String>,
    pub per_seed: BTreeMap<String, FinalSummary>,
    pub aggregate: Aggregate,
}

impl RunSummary {
    pub fn new(config_echo: BTreeMap<String, String>, ledgers: &[MetricsLedger]) -> Self {
        let per_seed: BTreeMap<String, FinalSummary> =
            ledgers.iter().map(|l| (l.seed.to_string(), l.summary())).collect();
        let all: Vec<FinalSummary> = per_seed.values().cloned().collect();
        Self {
            config_echo,
            aggregate: aggregate(&all),
            per_seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        let mut raw = RawConfig::default();
        for (k, v) in &self.config_echo {
            raw.set(k, v)?;
        }
        ExperimentConfig::from_raw(&raw)
    }

    pub fn summaries(&self) -> Vec<FinalSummary> {
        self.per_seed.values().cloned().collect()
    }

    pub fn mean(&self, field: &str) -> Option<f64> {
        self.aggregate.mean.get(field).copied()
    }
}

/// One loaded run directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub path: PathBuf,
    pub summary: RunSummary,
    pub config: ExperimentConfig,
    pub ledgers: Vec<MetricsLedger>,
}

/// Reads `summary.json` and every seed's ledger. Ledgers whose seed is not
/// in the summary, or a summary whose seeds have no ledger, are an error.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let summary = RunSummary::from_json(&std::fs::read_to_string(dir.join(SUMMARY_FILE))?)?;
    let config = summary.config()?;
    let mut ledgers = Vec::new();
    for seed in summary.per_seed.keys() {
        let s: u64 = seed
            .parse()
            .map_err(|_| Error::Aggregation(format!("bad seed key {seed:?}")))?;
        let path = dir.join(ledger_file_name(s));
        let ledger = MetricsLedger::from_csv(&std::fs::read_to_string(&path).map_err(|e| {
            Error::Aggregation(format!("{}: {e}", path.display()))
        })?)?;
        if ledger.seed != s {
            return Err(Error::Aggregation(format!("{} holds seed {}", path.display(), ledger.seed)));
        }
        ledgers.push(ledger);
    }
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(seed) = name.strip_prefix("ledger_seed").and_then(|s| s.strip_suffix(".csv")) {
            if !summary.per_seed.contains_key(seed) {
                return Err(Error::Aggregation(format!(
                    "{} contains ledger {name} from a different run",
                    dir.display()
                )));
            }
        }
    }
    Ok(LoadedRun {
        path: dir.to_path_buf(),
        summary,
        config,
        ledgers,
    })
}

/// Every run directory below `root`, in path order.
pub fn find_runs(root: &Path) -> Result<Vec<LoadedRun>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    let mut dirs = Vec::new();
    while let Some(d) = stack.pop() {
        if d.join(SUMMARY_FILE).is_file() {
            dirs.push(d.clone());
        }
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            }
        }
    }
    dirs.sort();
    for d in dirs {
        out.push(load_run(&d)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(id: u8, name: &str, failures: Vec<String>, notes: Vec<String>) -> Self {
        let passed = failures.is_empty();
        let mut detail = notes.join("; ");
        if !passed {
            if !detail.is_empty() {
                detail.push_str(" | ");
            }
            detail.push_str("FAILED: ");
            detail.push_str(&failures.join("; "));
        }
        Self {
            id,
            name: name.to_string(),
            passed,
            detail,
        }
    }

    fn missing(id: u8, name: &str, what: &str) -> Self {
        Self {
            id,
            name: name.to_string(),
            passed: false,
            detail: format!("not evaluated: {what}"),
        }
    }

    /// `[PASS] 4 birthday combinatorics: ...`
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

fn field_mean(s: &[FinalSummary], f: fn(&FinalSummary) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = s.iter().filter_map(f).collect();
    (!v.is_empty()).then(|| mean_std(&v).0)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Seed summaries per variant name (`sgd-fly`, `si-ablated`, ...).
pub type Variants = BTreeMap<String, Vec<FinalSummary>>;

fn pp(v: f64) -> String {
    format!("{:.1}pp", 100.0 * v)
}

/// Odor baseline: KC benefit for SGD and SI, forgetting without plasticity
/// loss for ablated SGD, plasticity loss for ablated SI.
pub fn check_odor(runs: &Variants, runtime_secs: Option<f64>) -> Verdict {
    const NAME: &str = "odor class-incremental reproduction";
    let get = |k: &str| runs.get(k).map(Vec::as_slice).unwrap_or(&[]);
    let a = |k: &str| field_mean(get(k), |s| s.final_a);
    let (mut fail, mut notes) = (Vec::new(), Vec::new());
    for s in ["sgd", "si"] {
        match (a(&format!("{s}-fly")), a(&format!("{s}-ablated"))) {
            (Some(f), Some(b)) => {
                notes.push(format!("{s}: fly A={} ablated A={}", pp(f), pp(b)));
                if f - b < 0.15 {
                    fail.push(format!("{s}-fly beats ablated by only {}", pp(f - b)));
                }
            }
            _ => fail.push(format!("missing {s} runs")),
        }
    }
    let bwt = field_mean(get("sgd-ablated"), |s| s.final_bwt);
    let fwt_sgd = field_mean(get("sgd-ablated"), |s| s.final_fwt);
    let fwt_si = field_mean(get("si-ablated"), |s| s.final_fwt);
    match (bwt, fwt_sgd, fwt_si) {
        (Some(b), Some(fs), Some(fi)) => {
            notes.push(format!("ablated sgd BWT={} FWT={}; ablated si FWT={}", pp(b), pp(fs), pp(fi)));
            if b > -0.30 {
                fail.push("ablated SGD BWT above -30pp".into());
            }
            if fs < -0.05 {
                fail.push("ablated SGD FWT below -5pp".into());
            }
            if fi >= fs {
                fail.push("ablated SI FWT not below ablated SGD FWT".into());
            }
        }
        _ => fail.push("missing transfer metrics".into()),
    }
    if let Some(t) = runtime_secs {
        notes.push(format!("runtime {t:.0}s"));
        if t >= 300.0 {
            fail.push("runtime over 5 minutes".into());
        }
    }
    Verdict::new(1, NAME, fail, notes)
}

/// Coding-level sweep; `points` are `(k, seed summaries)`.
pub fn check_coding_sweep(points: &[(f64, Vec<FinalSummary>)]) -> Verdict {
    const NAME: &str = "coding-level sweep";
    let mut pts: Vec<&(f64, Vec<FinalSummary>)> = points.iter().collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ks: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let col = |f: fn(&FinalSummary) -> Option<f64>| -> Option<Vec<f64>> {
        pts.iter().map(|p| field_mean(&p.1, f)).collect()
    };
    let (Some(bwt), Some(fwt), Some(acc)) = (col(|s| s.final_bwt), col(|s| s.final_fwt), col(|s| s.final_a)) else {
        return Verdict::missing(2, NAME, "sweep points lack BWT/FWT/accuracy");
    };
    if pts.len() < 3 {
        return Verdict::missing(2, NAME, "fewer than three coding levels");
    }
    let (mut fail, mut notes) = (Vec::new(), Vec::new());
    let rho = spearman(&ks, &bwt);
    notes.push(format!("Spearman(k, BWT)={rho:.3}"));
    if !(rho < -0.8) {
        fail.push("BWT not decreasing in k".into());
    }
    let at = |k: f64| ks.iter().position(|&v| (v - k).abs() < 1e-12);
    match (at(0.05), at(0.001)) {
        (Some(i), Some(j)) => {
            notes.push(format!("FWT(0.05)-FWT(0.001)={}", pp(fwt[i] - fwt[j])));
            if fwt[i] - fwt[j] < 0.02 {
                fail.push("FWT gain from k=0.001 to 0.05 below 2pp".into());
            }
        }
        _ => fail.push("sweep lacks k=0.001 or k=0.05".into()),
    }
    let best = (0..acc.len()).max_by(|&a, &b| acc[a].total_cmp(&acc[b])).unwrap_or(0);
    notes.push(format!("accuracy argmax at k={}", ks[best]));
    if best == 0 || best + 1 == acc.len() {
        fail.push("accuracy maximum at an endpoint".into());
    }
    Verdict::new(2, NAME, fail, notes)
}

/// Expansion-ratio sweep; `points` are `(ratio, seed summaries)`.
pub fn check_expansion(points: &[(f64, Vec<FinalSummary>)]) -> Verdict {
    const NAME: &str = "expansion-ratio effects";
    let mut pts: Vec<&(f64, Vec<FinalSummary>)> = points.iter().collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let col = |f: fn(&FinalSummary) -> Option<f64>| -> Option<Vec<f64>> {
        pts.iter().map(|p| field_mean(&p.1, f)).collect()
    };
    let (Some(angle), Some(wmag), Some(acc)) = (
        col(|s| s.grad_angle),
        col(|s| s.final_head_weight_mag),
        col(|s| s.final_a),
    ) else {
        return Verdict::missing(3, NAME, "sweep points lack angle/weight/accuracy");
    };
    if pts.len() < 2 {
        return Verdict::missing(3, NAME, "fewer than two ratios");
    }
    let (mut fail, mut notes) = (Vec::new(), Vec::new());
    let fmt = |v: &[f64], d: usize| v.iter().map(|x| format!("{x:.d$}")).collect::<Vec<_>>().join(",");
    notes.push(format!("angles [{}]", fmt(&angle, 2)));
    notes.push(format!("head |w| [{}]", fmt(&wmag, 5)));
    notes.push(format!("A [{}]", fmt(&acc, 4)));
    if !angle.windows(2).all(|w| w[1] > w[0]) {
        fail.push("gradient angle not increasing".into());
    }
    if *angle.last().unwrap() < 85.0 {
        fail.push("angle at the largest ratio below 85°".into());
    }
    if !wmag.windows(2).all(|w| w[1] < w[0]) {
        fail.push("head weight magnitude not decreasing".into());
    }
    if !acc.windows(2).all(|w| w[1] >= w[0]) {
        fail.push("accuracy not nondecreasing".into());
    }
    let gains: Vec<f64> = acc.windows(2).map(|w| w[1] - w[0]).collect();
    if gains.len() >= 2 && gains.last().unwrap() > gains.first().unwrap() {
        fail.push("accuracy gains grow instead of saturating".into());
    }
    Verdict::new(3, NAME, fail, notes)
}

/// Distinct-subset probability: argmax, exact small cases and Monte Carlo.
pub fn check_birthday(trials: usize, seed: u64) -> Verdict {
    const NAME: &str = "birthday combinatorics";
    let (mut fail, mut notes) = (Vec::new(), Vec::new());
    match analysis::birthday_argmax(50, 2000) {
        Ok(r) => {
            notes.push(format!("argmax r={r}"));
            if r != 25 {
                fail.push(format!("argmax {r} != 25"));
            }
        }
        Err(e) => fail.push(e.to_string()),
    }
    let mut worst: f64 = 0.0;
    for m in 1..=6u64 {
        let num: u64 = (0..m).map(|i| 6 - i).product();
        let den: u64 = 6u64.pow(m as u32);
        let exact = num as f64 / den as f64;
        match analysis::birthday_probability(4, 2, m) {
            Ok(b) => worst = worst.max((b.p - exact).abs()),
            Err(e) => fail.push(e.to_string()),
        }
    }
    notes.push(format!("max exact deviation {worst:.1e}"));
    if worst >= 1e-12 {
        fail.push("log-space value deviates from exact".into());
    }
    let mut rng = substream(seed, &[crate::rng::stream::DATA, 20]);
    let mut hits = 0usize;
    for _ in 0..trials {
        let a = rand::seq::index::sample(&mut rng, 4, 2);
        let b = rand::seq::index::sample(&mut rng, 4, 2);
        let key = |s: rand::seq::index::IndexVec| {
            let mut v = s.into_vec();
            v.sort_unstable();
            v
        };
        if key(a) != key(b) {
            hits += 1;
        }
    }
    let p = 5.0 / 6.0;
    let est = hits as f64 / trials as f64;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    notes.push(format!("Monte Carlo {est:.5} vs 5/6 ({:.2}σ)", (est - p) / sigma));
    if (est - p).abs() > 3.0 * sigma {
        fail.push("Monte Carlo outside 3σ".into());
    }
    Verdict::new(4, NAME, fail, notes)
}

/// Angle pdf normalization, variance monotonicity and Monte Carlo fit.
pub fn check_angles(pairs: usize, seed: u64) -> Verdict {
    const NAME: &str = "angle distribution";
    let (mut fail, mut notes) = (Vec::new(), Vec::new());
    for n in [2, 10, 100, 2000] {
        match analysis::angle_pdf_mass(n, 0.0, std::f64::consts::PI) {
            Ok(m) if (m - 1.0).abs() < 1e-6 => {}
            Ok(m) => fail.push(format!("∫p_{n} = {m}")),
            Err(e) => fail.push(e.to_string()),
        }
    }
    let vars: Result<Vec<f64>> = (2..=200).map(analysis::angle_variance).collect();
    match vars {
        Ok(v) if v.windows(2).all(|w| w[1] < w[0]) => {
            notes.push(format!("Var_2={:.4} Var_200={:.5}", v[0], v[v.len() - 1]))
        }
        Ok(_) => fail.push("variance not strictly decreasing".into()),
        Err(e) => fail.push(e.to_string()),
    }
    for n in [2, 10, 100] {
        let l1 = analysis::sample_angle_histogram(n, pairs, 20, seed.wrapping_add(n as u64))
            .and_then(|h| analysis::histogram_l1_to_pdf(&h));
        match l1 {
            Ok(d) => {
                notes.push(format!("L1(n={n})={d:.4}"));
                if d >= 0.02 {
                    fail.push(format!("histogram L1 {d:.4} at n={n}"));
                }
            }
            Err(e) => fail.push(e.to_string()),
        }
    }
    Verdict::new(5, NAME, fail, notes)
}

pub fn check_flops() -> Verdict {
    const NAME: &str = "FLOPs accounting";
    match analysis::flops_report(50, 2000, 6, 0.01, 10) {
        Ok(f) => {
            let got = (f.dense_forward, f.fly_forward, f.head_update);
            let fail = if got == (200_000, 12_000, 1_200) {
                vec![]
            } else {
                vec![format!("got {got:?}")]
            };
            Verdict::new(6, NAME, fail, vec![format!("dense={} fly={} head={}", got.0, got.1, got.2)])
        }
        Err(e) => Verdict::new(6, NAME, vec![e.to_string()], vec![]),
    }
}

/// Streaming plasticity for EWC and SI, with and without the KC layer.
pub fn check_streaming(runs: &Variants, runtime_secs: Option<f64>) -> Verdict {
    const NAME: &str = "streaming plasticity";
    let get = |k: &str| runs.get(k).map(Vec::as_slice).unwrap_or(&[]);
    let (mut fail, mut notes) = (Vec::new(), Vec::new());
    for s in ["ewc", "si"] {
        let (fly, abl) = (get(&format!("{s}-fly")), get(&format!("{s}-ablated")));
        if fly.is_empty() || abl.is_empty() {
            fail.push(format!("missing {s} runs"));
            continue;
        }
        let m = |v: &[FinalSummary], f: fn(&FinalSummary) -> Option<f64>| field_mean(v, f).unwrap_or(f64::NAN);
        let (a_first, a_last) = (m(abl, |s| s.online_acc_first5), m(abl, |s| s.online_acc_last5));
        let f_last = m(fly, |s| s.online_acc_last5);
        let (fd, ad) = (m(fly, |s| s.final_dormant), m(abl, |s| s.final_dormant));
        let (fr, ar) = (m(fly, |s| s.final_stable_rank), m(abl, |s| s.final_stable_rank));
        let (fw, aw) = (m(fly, |s| s.final_weight_mag), m(abl, |s| s.final_weight_mag));
        notes.push(format!(
            "{s}: ablated first5={} last5={}, fly last5={}; dormant {fd:.4}/{ad:.4}; rank {fr:.1}/{ar:.1}; |w| {fw:.5}/{aw:.5}",
            pp(a_first),
            pp(a_last),
            pp(f_last)
        ));
        if !(a_last < a_first) {
            fail.push(format!("{s}: no plasticity loss in the ablated model"));
        }
        if !(f_last - a_last >= 0.03) {
            fail.push(format!("{s}: fly gains only {} over ablated", pp(f_last - a_last)));
        }
        if !(fd < ad) {
            fail.push(format!("{s}: dormant fraction not lower"));
        }
        if !(fr > ar) {
            fail.push(format!("{s}: stable rank not higher"));
        }
        if !(fw < aw) {
            fail.push(format!("{s}: weight magnitude not lower"));
        }
    }
    if let Some(t) = runtime_secs {
        notes.push(format!("runtime {t:.0}s"));
        if t >= 900.0 {
            fail.push("runtime over 15 minutes".into());
        }
    }
    Verdict::new(7, NAME, fail, notes)
}

/// One imbalance cell: the fly and ablated summaries for one strategy.
#[derive(Debug, Clone)]
pub struct ImbalanceCell {
    pub gamma: f64,
    pub order: ImbalanceOrder,
    pub strategy: String,
    pub n_classes: usize,
    pub n_max: usize,
    pub fly: Vec<FinalSummary>,
    pub ablated: Vec<FinalSummary>,
}

pub fn check_imbalance(cells: &[ImbalanceCell]) -> Verdict {
    const NAME: &str = "imbalance robustness";
    if cells.is_empty() {
        return Verdict::missing(9, NAME, "no imbalance runs");
    }
    let (mut fail, mut notes) = (Vec::new(), Vec::new());
    let mut worst_margin = f64::INFINITY;
    for c in cells {
        let spec = ImbalanceSpec {
            gamma: c.gamma,
            order: c.order,
            n_max: c.n_max,
            seed: 0,
        };
        match imbalance_sizes(c.n_classes, &spec) {
            Ok(sizes) => {
                let (mx, mn) = (*sizes.iter().max().unwrap(), *sizes.iter().min().unwrap());
                if mx != c.n_max || (mn as f64 - c.n_max as f64 / c.gamma).abs() > 0.5 {
                    fail.push(format!("γ={} sizes {mx}/{mn} miss the ratio", c.gamma));
                }
            }
            Err(e) => fail.push(e.to_string()),
        }
        let f = field_mean(&c.fly, |s| s.final_a);
        let a = field_mean(&c.ablated, |s| s.final_a);
        match (f, a) {
            (Some(f), Some(a)) => {
                worst_margin = worst_margin.min(f - a);
                if f < a {
                    fail.push(format!("γ={} {:?} {}: fly {} < ablated {}", c.gamma, c.order, c.strategy, pp(f), pp(a)));
                }
            }
            _ => fail.push(format!("γ={} {:?} {}: missing runs", c.gamma, c.order, c.strategy)),
        }
    }
    notes.push(format!("{} cells, smallest fly margin {}", cells.len(), pp(worst_margin)));
    Verdict::new(9, NAME, fail, notes)
}

/// Mean-value identity on a quadratic toy and its shrinkage as the task
/// gradients rotate toward orthogonality.
pub fn check_theorem() -> Verdict {
    const NAME: &str = "loss-difference mean-value check";
    let eta = 1e-3;
    let angles: Vec<f64> = (0..=9).map(|i| 10.0 * i as f64).collect();
    let pts = match analysis::rotation_sweep(eta, &angles, 1000) {
        Ok(p) => p,
        Err(e) => return Verdict::new(10, NAME, vec![e.to_string()], vec![]),
    };
    let (mut fail, mut notes) = (Vec::new(), Vec::new());
    let worst = pts.iter().map(|p| p.check.residual).fold(0.0, f64::max);
    notes.push(format!("max residual {worst:.1e}"));
    if worst >= 1e-8 || pts.iter().any(|p| !(0.0..=1.0).contains(&p.check.xi)) {
        fail.push("identity not satisfied on [0, 1]".into());
    }
    let mags: Vec<f64> = pts.iter().map(|p| p.check.loss_diff.abs()).collect();
    if !mags.windows(2).all(|w| w[1] < w[0]) {
        fail.push("|ΔL| does not shrink toward orthogonality".into());
    }
    for p in pts.iter().filter(|p| p.angle_deg <= 80.0) {
        let ratio = p.check.loss_diff / (eta * p.check.inner);
        if (ratio - 1.0).abs() > 0.05 {
            fail.push(format!("ΔL/(η⟨g₁,g_t⟩) = {ratio:.4} at {}°", p.angle_deg));
        }
    }
    notes.push(format!("|ΔL| {:.2e} at 0° → {:.2e} at 90°", mags[0], mags[mags.len() - 1]));
    Verdict::new(10, NAME, fail, notes)
}

/// Cheap library-level checks of the model's structural properties.
pub fn check_properties(seed: u64) -> Verdict {
    const NAME: &str = "property suite";
    match property_failures(seed) {
        Ok(fail) => Verdict::new(8, NAME, fail, vec!["top-k support, gradient mask, finite differences, off-switches, round trips".into()]),
        Err(e) => Verdict::new(8, NAME, vec![e.to_string()], vec![]),
    }
}

fn property_failures(seed: u64) -> Result<Vec<String>> {
    use crate::fly::{active_count_for, decode_model, encode_model, masked_cross_entropy, top_k_code, CodingConfig, FlyModel, ModelSpec, PreLayerSpec, Activation};
    use crate::learners::{ClipConfig, Learner, SgdConfig, StrategySpec};
    use crate::tasks::{decode_features, encode_features, Dataset};
    let mut fail = Vec::new();
    let mut rng = substream(seed, &[crate::rng::stream::DATA, 21]);
    for _ in 0..1000 {
        let m = rng.gen_range(1..400);
        let k: f64 = rng.gen_range(0.001..=1.0);
        let coding = CodingConfig::new(k, m)?;
        let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, active) = top_k_code(&v, &coding);
        if active.len() != active_count_for(k, m) || active.len() != (k * m as f64 - 1e-9).ceil().max(1.0) as usize {
            fail.push(format!("top-k support {} for k={k} m={m}", active.len()));
            break;
        }
    }
    let spec = |pre: Vec<PreLayerSpec>| ModelSpec {
        n_in: 12,
        pre_layers: pre,
        n_kc: 80,
        degree: 4,
        coding_level: 0.1,
        n_classes: 4,
        ablate_kc: false,
        head_bias: false,
        seed,
    };
    let x = ndarray::Array2::from_shape_fn((16, 12), |_| rng.gen_range(-1.0..1.0));
    let y: Vec<usize> = (0..16).map(|i| i % 4).collect();
    for pre in [vec![], vec![PreLayerSpec { width: 10, activation: Activation::Relu }]] {
        let model = FlyModel::new(spec(pre.clone()))?;
        let trace = model.forward_batch(x.view())?;
        let loss = masked_cross_entropy(trace.logits.view(), &y, None)?;
        let g = model.backward_batch(&trace, loss.dlogits.view())?;
        let mut worst: f64 = 0.0;
        for idx in (0..model.num_params()).step_by(7) {
            let f = |delta: f64| -> Result<f64> {
                let mut m = model.clone();
                m.params_mut()[idx] += delta;
                let t = m.forward_batch(x.view())?;
                // Keep the active set fixed so the loss is smooth in the parameter.
                if t.codes.as_ref().map(|c| &c.indices) != trace.codes.as_ref().map(|c| &c.indices) {
                    return Ok(f64::NAN);
                }
                Ok(masked_cross_entropy(t.logits.view(), &y, None)?.loss)
            };
            let h = 1e-6;
            let fd = (f(h)? - f(-h)?) / (2.0 * h);
            if fd.is_nan() {
                continue;
            }
            let err = (fd - g.values[idx]).abs() / fd.abs().max(g.values[idx].abs()).max(1e-8);
            worst = worst.max(err);
        }
        if worst >= 1e-4 {
            fail.push(format!("finite-difference error {worst:.2e} with {} pre-layers", pre.len()));
        }
        let bytes = encode_model(&model);
        if decode_model(&bytes)?.params() != model.params() {
            fail.push("checkpoint round trip".into());
        }
    }
    let base_model = FlyModel::new(spec(vec![PreLayerSpec { width: 10, activation: Activation::Relu }]))?;
    let run = |strategy: StrategySpec, steps: usize| -> Result<Vec<f64>> {
        let mut model = base_model.clone();
        let mut learner = Learner::new(&strategy, SgdConfig::new(0.1)?, ClipConfig::disabled(), &model, seed)?;
        let data = Dataset::new(x.clone(), y.clone(), 4)?;
        for step in 0..steps {
            let trace = model.forward_batch(x.view())?;
            if let Some(codes) = &trace.codes {
                let loss = masked_cross_entropy(trace.logits.view(), &y, None)?;
                let g = model.backward_batch(&trace, loss.dlogits.view())?;
                let head = model.layout().head_weight();
                let m = head.cols;
                for (j, v) in g.values[head.range()].iter().enumerate() {
                    let col = (j % m) as u32;
                    let active = (0..trace.batch()).any(|b| codes.sample(b).0.contains(&col));
                    if *v != 0.0 && !active {
                        return Err(Error::InvalidTrace("head gradient outside the active set".into()));
                    }
                }
                learner.step(&mut model, &g, &trace)?;
            }
            if step % 10 == 9 {
                learner.end_task(&mut model, &data, None)?;
            }
        }
        Ok(model.params().to_vec())
    };
    run(StrategySpec::Sgd, 100)?;
    let reference = run(StrategySpec::Sgd, 50)?;
    for s in [
        StrategySpec::Ewc { lambda: 0.0 },
        StrategySpec::Si { c: 0.0, xi: 1e-3 },
        StrategySpec::L2Init { alpha: 0.0 },
        StrategySpec::ShrinkPerturb { shrink: 0.0, perturb: 0.0 },
        StrategySpec::Cbp { decay: 0.99, replacement_rate: 0.0, maturity_threshold: 100 },
    ] {
        if run(s.clone(), 50)? != reference {
            fail.push(format!("{} off-switch differs from SGD", s.name()));
        }
    }
    let feats = Dataset::new(x.mapv(|v| (v as f32) as f64), y.clone(), 4)?;
    if decode_features(&encode_features(&feats)?)? != feats {
        fail.push("feature file round trip".into());
    }
    Ok(fail)
}

/// Figures and verdicts built from a report directory.
#[derive(Debug, Clone)]
pub struct Report {
    pub verdicts: Vec<Verdict>,
    /// `(file stem, CSV text)`.
    pub figures: Vec<(String, String)>,
}

fn family(root: &Path, run: &LoadedRun) -> String {
    run.path
        .strip_prefix(root)
        .ok()
        .and_then(|p| p.components().next())
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn stage_table(runs: &[&LoadedRun], metric: &str) -> String {
    let mut out = String::from("run,stage,mean,std,n\n");
    for r in runs {
        let t = r.ledgers.iter().map(|l| l.stages()).max().unwrap_or(0);
        for stage in 1..=t {
            let vals: Vec<f64> = r
                .ledgers
                .iter()
                .filter_map(|l| {
                    let scratch = (!l.scratch.is_empty()).then_some(l.scratch.as_slice());
                    let m = crate::metrics::stage_metrics(&l.accuracy, scratch, stage).ok()?;
                    match metric {
                        "acc" => Some(m.average_accuracy),
                        "bwt" => m.bwt,
                        _ => m.fwt,
                    }
                })
                .collect();
            if vals.is_empty() {
                continue;
            }
            let (m, s) = mean_std(&vals);
            let _ = writeln!(out, "{},{stage},{m:?},{s:?},{}", r.config.variant_name(), vals.len());
        }
    }
    out
}

fn keyed<'a>(runs: &[&'a LoadedRun], key: impl Fn(&ExperimentConfig) -> String) -> Result<BTreeMap<String, &'a LoadedRun>> {
    let mut out = BTreeMap::new();
    for r in runs {
        let k = key(&r.config);
        if out.insert(k.clone(), *r).is_some() {
            return Err(Error::Aggregation(format!("two runs share the cell {k}")));
        }
    }
    Ok(out)
}

fn total_runtime(runs: &[&LoadedRun]) -> Option<f64> {
    let mut total = 0.0;
    for r in runs {
        let text = std::fs::read_to_string(r.path.join(crate::harness::TIMING_FILE)).ok()?;
        let t: BTreeMap<String, Vec<f64>> = serde_json::from_str(&text).ok()?;
        total += t.values().flatten().sum::<f64>();
    }
    Some(total)
}

/// Builds figure tables from every run under `root` and evaluates all ten
/// criteria (the analytic ones are recomputed directly).
pub fn build_report(root: &Path) -> Result<Report> {
    let runs = find_runs(root)?;
    let by_family = |name: &str| -> Vec<&LoadedRun> { runs.iter().filter(|r| family(root, r) == name).collect() };
    let mut figures = Vec::new();
    let mut verdicts = Vec::new();

    let odor = by_family("odor");
    let odor_cells = keyed(&odor, |c| c.variant_name())?;
    figures.push(("fig2b_acc".into(), stage_table(&odor, "acc")));
    figures.push(("fig2b_bwt".into(), stage_table(&odor, "bwt")));
    figures.push(("fig2b_fwt".into(), stage_table(&odor, "fwt")));
    let variants: Variants = odor_cells.iter().map(|(k, r)| (k.clone(), r.summary.summaries())).collect();
    verdicts.push(if odor.is_empty() {
        Verdict::missing(1, "odor class-incremental reproduction", "no runs under odor/")
    } else {
        check_odor(&variants, total_runtime(&odor))
    });

    let sweep_table = |runs: &[&LoadedRun], label: &str, value: &dyn Fn(&ExperimentConfig) -> f64| {
        let mut out = String::from("parameter,value,metric,mean,std,n\n");
        let mut rows: Vec<(f64, &LoadedRun)> = runs.iter().map(|r| (value(&r.config), *r)).collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (v, r) in rows {
            for (metric, m) in &r.summary.aggregate.mean {
                let s = r.summary.aggregate.std.get(metric).copied().unwrap_or(0.0);
                let _ = writeln!(out, "{label},{v:?},{metric},{m:?},{s:?},{}", r.summary.aggregate.n);
            }
        }
        out
    };
    let coding = by_family("coding_level");
    keyed(&coding, |c| format!("{:?}", c.coding_level))?;
    figures.push(("fig2e_coding_level".into(), sweep_table(&coding, "coding_level", &|c| c.coding_level)));
    let pts: Vec<(f64, Vec<FinalSummary>)> = coding.iter().map(|r| (r.config.coding_level, r.summary.summaries())).collect();
    verdicts.push(check_coding_sweep(&pts));

    let expansion = by_family("expansion_ratio");
    let ratio = |c: &ExperimentConfig| c.kc as f64 / c.feature_dim() as f64;
    keyed(&expansion, |c| format!("{:?}", ratio(c)))?;
    figures.push(("fig2c_expansion_ratio".into(), sweep_table(&expansion, "expansion_ratio", &ratio)));
    let degree = by_family("degree");
    keyed(&degree, |c| c.degree.to_string())?;
    figures.push(("fig2d_degree".into(), sweep_table(&degree, "degree", &|c| c.degree as f64)));
    let mut angles = String::from("expansion_ratio,mean_angle_deg,std,n\n");
    let mut wmag = String::from("expansion_ratio,mean_head_weight_mag,std,n\n");
    let mut pts = Vec::new();
    for r in &expansion {
        let agg = &r.summary.aggregate;
        let get = |k: &str| (agg.mean.get(k).copied(), agg.std.get(k).copied().unwrap_or(0.0));
        if let (Some(m), s) = get("grad_angle") {
            let _ = writeln!(angles, "{:?},{m:?},{s:?},{}", ratio(&r.config), agg.n);
        }
        if let (Some(m), s) = get("final_head_weight_mag") {
            let _ = writeln!(wmag, "{:?},{m:?},{s:?},{}", ratio(&r.config), agg.n);
        }
        pts.push((ratio(&r.config), r.summary.summaries()));
    }
    figures.push(("fig3b_angles".into(), angles));
    figures.push(("fig3c_wmag".into(), wmag));
    verdicts.push(check_expansion(&pts));

    verdicts.push(check_birthday(1_000_000, 4));
    verdicts.push(check_angles(100_000, 5));
    verdicts.push(check_flops());

    let stream = by_family("stream");
    let stream_cells = keyed(&stream, |c| c.variant_name())?;
    let mut fig6 = String::from("run,task,metric,mean,std,n\n");
    for (name, r) in &stream_cells {
        let t = r.ledgers.iter().map(|l| l.online_batches.len()).max().unwrap_or(0);
        for task in 0..t {
            let mut cols: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for l in &r.ledgers {
                if let Some(a) = l.online_batches.get(task).and_then(|b| crate::metrics::online_accuracy(b).ok()) {
                    cols.entry("online_acc").or_default().push(a);
                }
                if let Some(d) = l.diagnostics.get(task) {
                    if let Some(v) = d.dormant {
                        cols.entry("dormant").or_default().push(v);
                    }
                    if let Some(v) = d.stable_rank {
                        cols.entry("stable_rank").or_default().push(v as f64);
                    }
                    cols.entry("weight_mag").or_default().push(d.weight_mag);
                }
            }
            for (metric, vals) in cols {
                let (m, s) = mean_std(&vals);
                let _ = writeln!(fig6, "{name},{},{metric},{m:?},{s:?},{}", task + 1, vals.len());
            }
        }
    }
    figures.push(("fig6_metrics".into(), fig6));
    let variants: Variants = stream_cells.iter().map(|(k, r)| (k.clone(), r.summary.summaries())).collect();
    verdicts.push(if stream.is_empty() {
        Verdict::missing(7, "streaming plasticity", "no runs under stream/")
    } else {
        check_streaming(&variants, total_runtime(&stream))
    });

    verdicts.push(check_properties(6));

    let imbalance = by_family("imbalance");
    let cells = keyed(&imbalance, |c| {
        let (g, o) = c.imbalance.unwrap_or((1.0, ImbalanceOrder::Normal));
        format!("{g:?}/{o:?}/{}", c.variant_name())
    })?;
    let mut grouped: BTreeMap<String, ImbalanceCell> = BTreeMap::new();
    for r in cells.values() {
        let c = &r.config;
        let Some((gamma, order)) = c.imbalance else {
            continue;
        };
        let key = format!("{gamma:?}/{order:?}/{}", c.strategy.name());
        let cell = grouped.entry(key).or_insert_with(|| ImbalanceCell {
            gamma,
            order,
            strategy: c.strategy.name().to_string(),
            n_classes: c.n_classes,
            n_max: c.n_max.unwrap_or(c.train_per_class),
            fly: Vec::new(),
            ablated: Vec::new(),
        });
        if c.ablate {
            cell.ablated = r.summary.summaries();
        } else {
            cell.fly = r.summary.summaries();
        }
    }
    let cells: Vec<ImbalanceCell> = grouped.into_values().collect();
    let mut table = String::from("gamma,order,strategy,fly_A,ablated_A\n");
    for c in &cells {
        let f = field_mean(&c.fly, |s| s.final_a).unwrap_or(f64::NAN);
        let a = field_mean(&c.ablated, |s| s.final_a).unwrap_or(f64::NAN);
        let _ = writeln!(table, "{:?},{:?},{},{f:?},{a:?}", c.gamma, c.order, c.strategy);
    }
    figures.push(("supp_fig3_imbalance".into(), table));
    verdicts.push(check_imbalance(&cells));

    verdicts.push(check_theorem());
    verdicts.sort_by_key(|v| v.id);
    Ok(Report { verdicts, figures })
}
