//! Per-run metric records and their CSV / JSON forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics;
use crate::{Error, Result};

/// Plasticity diagnostics taken at a task boundary.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Dormant fraction over the dense pre-layer neurons.
    pub dormant: Option<f64>,
    /// Dormant fraction over KC units (post-coding).
    pub dormant_kc: Option<f64>,
    pub stable_rank: Option<usize>,
    /// Mean |w| over every weight matrix (biases excluded).
    pub weight_mag: f64,
    /// Mean |w| over the head weights alone.
    pub head_weight_mag: f64,
}

/// Everything one (config, seed) run produced. Task indices are 0-based
/// here and 1-based in the CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLedger {
    pub seed: u64,
    /// `accuracy[t][i]`, `i ≤ t`.
    pub accuracy: Vec<Vec<f64>>,
    /// `scratch[i]`; the first task never has one.
    pub scratch: Vec<Option<f64>>,
    /// Prequential batch accuracies per task.
    pub online_batches: Vec<Vec<f64>>,
    /// One entry per task boundary.
    pub diagnostics: Vec<Diagnostics>,
    /// Scalars attached to a task: `(task, name, value)`.
    pub extras: Vec<(usize, String, f64)>,
    /// Seconds per task (class-incremental runs add one final entry for the
    /// scratch baselines and gradient angle); kept out of the deterministic
    /// outputs.
    pub wall_clock: Vec<f64>,
    /// Set when the run stopped early.
    pub aborted: Option<String>,
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub seed: u64,
    pub task_t: usize,
    pub task_i: usize,
    pub metric: String,
    pub value: f64,
}

pub const CSV_HEADER: &str = "seed,task_t,task_i,metric,value";

/// Final-stage numbers for the JSON summary.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FinalSummary {
    #[serde(rename = "final_A")]
    pub final_a: Option<f64>,
    #[serde(rename = "final_acc_acc")]
    pub final_acc_acc: Option<f64>,
    #[serde(rename = "final_BWT")]
    pub final_bwt: Option<f64>,
    #[serde(rename = "final_FWT")]
    pub final_fwt: Option<f64>,
    pub online_acc_first5: Option<f64>,
    pub online_acc_last5: Option<f64>,
    pub final_dormant: Option<f64>,
    pub final_dormant_kc: Option<f64>,
    pub final_stable_rank: Option<f64>,
    pub final_weight_mag: Option<f64>,
    pub final_head_weight_mag: Option<f64>,
    pub grad_angle: Option<f64>,
    pub aborted: Option<String>,
}

impl FinalSummary {
    /// Named numeric fields, for aggregation.
    pub fn fields(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("final_A", self.final_a),
            ("final_acc_acc", self.final_acc_acc),
            ("final_BWT", self.final_bwt),
            ("final_FWT", self.final_fwt),
            ("online_acc_first5", self.online_acc_first5),
            ("online_acc_last5", self.online_acc_last5),
            ("final_dormant", self.final_dormant),
            ("final_dormant_kc", self.final_dormant_kc),
            ("final_stable_rank", self.final_stable_rank),
            ("final_weight_mag", self.final_weight_mag),
            ("final_head_weight_mag", self.final_head_weight_mag),
            ("grad_angle", self.grad_angle),
        ]
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricsLedger {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Number of complete accuracy rows.
    pub fn stages(&self) -> usize {
        self.accuracy.len()
    }

    pub fn extra(&self, name: &str) -> Option<f64> {
        self.extras.iter().rev().find(|(_, n, _)| n == name).map(|e| e.2)
    }

    pub fn online_accuracies(&self) -> Vec<f64> {
        self.online_batches
            .iter()
            .filter_map(|b| metrics::online_accuracy(b).ok())
            .collect()
    }

    /// Mean online accuracy over the first (or last) `n` tasks.
    pub fn online_window(&self, n: usize, last: bool) -> Option<f64> {
        let acc = self.online_accuracies();
        if acc.is_empty() {
            return None;
        }
        let n = n.min(acc.len());
        let slice = if last { &acc[acc.len() - n..] } else { &acc[..n] };
        mean(slice)
    }

    pub fn summary(&self) -> FinalSummary {
        let t = self.stages();
        let scratch = (!self.scratch.is_empty()).then_some(self.scratch.as_slice());
        let last = self.diagnostics.last();
        FinalSummary {
            final_a: metrics::average_accuracy(&self.accuracy, t).ok(),
            final_acc_acc: metrics::accumulated_accuracy(&self.accuracy, t).ok(),
            final_bwt: metrics::backward_transfer(&self.accuracy, t).ok(),
            final_fwt: scratch.and_then(|s| metrics::forward_transfer(&self.accuracy, s, t).ok()),
            online_acc_first5: self.online_window(5, false),
            online_acc_last5: self.online_window(5, true),
            final_dormant: last.and_then(|d| d.dormant),
            final_dormant_kc: last.and_then(|d| d.dormant_kc),
            final_stable_rank: last.and_then(|d| d.stable_rank.map(|r| r as f64)),
            final_weight_mag: last.map(|d| d.weight_mag),
            final_head_weight_mag: last.map(|d| d.head_weight_mag),
            grad_angle: self.extra("grad_angle"),
            aborted: self.aborted.clone(),
        }
    }

    /// Long-format rows: raw accuracies, stage metrics, online accuracies,
    /// diagnostics and extras.
    pub fn rows(&self) -> Vec<LedgerRow> {
        let seed = self.seed;
        let mut rows = Vec::new();
        let mut push = |t: usize, i: usize, m: &str, v: f64| {
            rows.push(LedgerRow {
                seed,
                task_t: t + 1,
                task_i: i + 1,
                metric: m.to_string(),
                value: v,
            })
        };
        for (t, row) in self.accuracy.iter().enumerate() {
            for (i, &a) in row.iter().enumerate() {
                push(t, i, "acc", a);
            }
        }
        for (i, s) in self.scratch.iter().enumerate() {
            if let Some(s) = s {
                push(i, i, "scratch_acc", *s);
            }
        }
        let scratch = (!self.scratch.is_empty()).then_some(self.scratch.as_slice());
        for t in 1..=self.stages() {
            if let Ok(m) = metrics::stage_metrics(&self.accuracy, scratch, t) {
                push(t - 1, t - 1, "avg_acc", m.average_accuracy);
                push(t - 1, t - 1, "acc_acc", m.accumulated_accuracy);
                if let Some(b) = m.bwt {
                    push(t - 1, t - 1, "bwt", b);
                }
                if let Some(f) = m.fwt {
                    push(t - 1, t - 1, "fwt", f);
                }
            }
        }
        for (t, batches) in self.online_batches.iter().enumerate() {
            for (j, &a) in batches.iter().enumerate() {
                push(t, j, "batch_acc", a);
            }
            if let Ok(a) = metrics::online_accuracy(batches) {
                push(t, t, "online_acc", a);
            }
        }
        for (t, d) in self.diagnostics.iter().enumerate() {
            if let Some(v) = d.dormant {
                push(t, t, "dormant", v);
            }
            if let Some(v) = d.dormant_kc {
                push(t, t, "dormant_kc", v);
            }
            if let Some(v) = d.stable_rank {
                push(t, t, "stable_rank", v as f64);
            }
            push(t, t, "weight_mag", d.weight_mag);
            push(t, t, "head_weight_mag", d.head_weight_mag);
        }
        for (t, name, v) in &self.extras {
            push(*t, *t, name, *v);
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in self.rows() {
            // `{:?}` prints the shortest string that parses back to the same f64.
            let _ = writeln!(out, "{},{},{},{},{:?}", r.seed, r.task_t, r.task_i, r.metric, r.value);
        }
        out
    }

    /// Rebuilds a ledger from its CSV. Derived rows (stage metrics, online
    /// means) are ignored and recomputed on demand.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(Error::Aggregation("ledger CSV has an unexpected header".into()));
        }
        let mut ledger = MetricsLedger::default();
        let mut seed = None;
        let mut diag: BTreeMap<usize, Diagnostics> = BTreeMap::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Aggregation(format!("ledger CSV line {}: {line:?}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let s: u64 = f[0].parse().map_err(|_| bad())?;
            let t: usize = f[1].parse().map_err(|_| bad())?;
            let i: usize = f[2].parse().map_err(|_| bad())?;
            let v: f64 = f[4].parse().map_err(|_| bad())?;
            if t == 0 || i == 0 || *seed.get_or_insert(s) != s {
                return Err(bad());
            }
            let (t, i) = (t - 1, i - 1);
            let grow = |v: &mut Vec<Vec<f64>>, t: usize| {
                if v.len() <= t {
                    v.resize(t + 1, Vec::new());
                }
            };
            match f[3] {
                "acc" => {
                    grow(&mut ledger.accuracy, t);
                    let row = &mut ledger.accuracy[t];
                    if row.len() != i {
                        return Err(bad());
                    }
                    row.push(v);
                }
                "scratch_acc" => {
                    if ledger.scratch.len() <= t {
                        ledger.scratch.resize(t + 1, None);
                    }
                    ledger.scratch[t] = Some(v);
                }
                "batch_acc" => {
                    grow(&mut ledger.online_batches, t);
                    ledger.online_batches[t].push(v);
                }
                "dormant" => diag.entry(t).or_default().dormant = Some(v),
                "dormant_kc" => diag.entry(t).or_default().dormant_kc = Some(v),
                "stable_rank" => diag.entry(t).or_default().stable_rank = Some(v as usize),
                "weight_mag" => diag.entry(t).or_default().weight_mag = v,
                "head_weight_mag" => diag.entry(t).or_default().head_weight_mag = v,
                "avg_acc" | "acc_acc" | "bwt" | "fwt" | "online_acc" => {}
                other => ledger.extras.push((t, other.to_string(), v)),
            }
        }
        ledger.seed = seed.unwrap_or(0);
        ledger.diagnostics = diag.into_values().collect();
        if !ledger.scratch.is_empty() && ledger.scratch.len() < ledger.accuracy.len() {
            ledger.scratch.resize(ledger.accuracy.len(), None);
        }
        Ok(ledger)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricsLedger {
        MetricsLedger {
            seed: 3,
            accuracy: vec![vec![0.9], vec![0.8, 0.9], vec![0.7, 0.85, 0.95]],
            scratch: vec![None, Some(0.9), Some(0.92)],
            diagnostics: vec![Diagnostics {
                dormant: Some(0.25),
                dormant_kc: None,
                stable_rank: Some(12),
                weight_mag: 0.1,
                head_weight_mag: 0.2,
            }],
            extras: vec![(2, "grad_angle".into(), 88.5)],
            ..MetricsLedger::default()
        }
    }

    #[test]
    fn csv_round_trip() {
        let l = sample();
        let csv = l.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert!(csv.contains("3,3,3,bwt,"));
        let back = MetricsLedger::from_csv(&csv).unwrap();
        assert_eq!(back.accuracy, l.accuracy);
        assert_eq!(back.scratch, l.scratch);
        assert_eq!(back.diagnostics, l.diagnostics);
        assert_eq!(back.summary(), l.summary());
    }

    #[test]
    fn summary_values() {
        let s = sample().summary();
        assert!((s.final_bwt.unwrap() + 0.125).abs() < 1e-12);
        assert!((s.final_fwt.unwrap() - (0.0 + 0.03) / 2.0).abs() < 1e-12);
        assert_eq!(s.grad_angle, Some(88.5));
    }
}
