//! Accuracy and transfer metrics over an accuracy matrix, plus the
//! plasticity diagnostics (dormant units, stable rank, weight magnitude).
//!
//! Stages are numbered from 1 as in the usual formulas: `acc[t - 1][i - 1]`
//! holds the test accuracy on task `i` after training task `t`.

use ndarray::ArrayView2;

use crate::{Error, Result};

/// Threshold for dormant units and for the stable-rank mass.
pub const DEFAULT_DELTA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageMetrics {
    pub stage: usize,
    pub average_accuracy: f64,
    pub accumulated_accuracy: f64,
    /// Undefined for the first stage.
    pub bwt: Option<f64>,
    /// Undefined for the first stage or without scratch baselines.
    pub fwt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlasticityDiagnostics {
    pub online_accuracy: Vec<f64>,
    pub dormant_fraction: f64,
    pub stable_rank: Option<usize>,
    pub avg_weight_magnitude: f64,
}

fn row(acc: &[Vec<f64>], t: usize) -> Result<&[f64]> {
    if t == 0 {
        return Err(Error::UndefinedMetric("stages count from 1".into()));
    }
    match acc.get(t - 1) {
        Some(r) if r.len() >= t => Ok(&r[..t]),
        _ => Err(Error::MissingData(format!("accuracy row {t} is incomplete"))),
    }
}

/// `A_t = (1/t) Σ_{i≤t} a_{t,i}`.
pub fn average_accuracy(acc: &[Vec<f64>], t: usize) -> Result<f64> {
    let r = row(acc, t)?;
    Ok(r.iter().sum::<f64>() / t as f64)
}

/// `Ā_t = (1/t) Σ_{i≤t} A_i`.
pub fn accumulated_accuracy(acc: &[Vec<f64>], t: usize) -> Result<f64> {
    let mut sum = 0.0;
    for s in 1..=t {
        sum += average_accuracy(acc, s)?;
    }
    if t == 0 {
        return Err(Error::UndefinedMetric("stages count from 1".into()));
    }
    Ok(sum / t as f64)
}

fn bwt_sum(acc: &[Vec<f64>], t: usize, upper: usize) -> Result<f64> {
    if t < 2 {
        return Err(Error::UndefinedMetric("backward transfer needs t ≥ 2".into()));
    }
    let last = row(acc, t)?;
    let mut sum = 0.0;
    for i in 1..=upper {
        sum += last[i - 1] - row(acc, i)?[i - 1];
    }
    Ok(sum / (t - 1) as f64)
}

/// `BWT_t = (1/(t−1)) Σ_{i=1}^{t} (a_{t,i} − a_{i,i})`.
pub fn backward_transfer(acc: &[Vec<f64>], t: usize) -> Result<f64> {
    bwt_sum(acc, t, t)
}

/// Same as [`backward_transfer`] with the sum stopping at `t − 1`; the
/// dropped term is identically zero.
pub fn backward_transfer_excluding_last(acc: &[Vec<f64>], t: usize) -> Result<f64> {
    bwt_sum(acc, t, t.saturating_sub(1))
}

/// `FWT_t = (1/(t−1)) Σ_{i=2}^{t} (a_{i,i} − ã_i)`. `scratch[i - 1]` is `ã_i`.
pub fn forward_transfer(acc: &[Vec<f64>], scratch: &[Option<f64>], t: usize) -> Result<f64> {
    if t < 2 {
        return Err(Error::UndefinedMetric("forward transfer needs t ≥ 2".into()));
    }
    let mut sum = 0.0;
    for i in 2..=t {
        let base = scratch
            .get(i - 1)
            .copied()
            .flatten()
            .ok_or_else(|| Error::MissingBaseline(format!("no scratch accuracy for task {i}")))?;
        sum += row(acc, i)?[i - 1] - base;
    }
    Ok(sum / (t - 1) as f64)
}

pub fn stage_metrics(acc: &[Vec<f64>], scratch: Option<&[Option<f64>]>, t: usize) -> Result<StageMetrics> {
    Ok(StageMetrics {
        stage: t,
        average_accuracy: average_accuracy(acc, t)?,
        accumulated_accuracy: accumulated_accuracy(acc, t)?,
        bwt: if t >= 2 { Some(backward_transfer(acc, t)?) } else { None },
        fwt: match scratch {
            Some(s) if t >= 2 => Some(forward_transfer(acc, s, t)?),
            _ => None,
        },
    })
}

/// Mean of a task's prequential batch accuracies.
pub fn online_accuracy(batches: &[f64]) -> Result<f64> {
    if batches.is_empty() {
        return Err(Error::MissingData("task has no logged batches".into()));
    }
    Ok(batches.iter().sum::<f64>() / batches.len() as f64)
}

/// Fraction of neurons whose mean absolute activation is below `delta`.
pub fn dormant_fraction(mean_abs: &[f64], delta: f64) -> Result<f64> {
    if mean_abs.is_empty() {
        return Err(Error::EmptyData("no neurons to classify".into()));
    }
    let dormant = mean_abs.iter().filter(|&&a| a < delta).count();
    Ok(dormant as f64 / mean_abs.len() as f64)
}

/// Singular values in descending order, with values below `1e-12 · σ_max`
/// set to zero.
pub fn singular_values(w: ArrayView2<'_, f64>) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[[i, j]]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let cutoff = s.first().copied().unwrap_or(0.0) * 1e-12;
    for v in &mut s {
        if *v < cutoff {
            *v = 0.0;
        }
    }
    s
}

/// Smallest `k` such that the top `k` singular values hold a `1 − δ`
/// fraction of the total.
pub fn stable_rank_from_singular_values(s: &[f64], delta: f64) -> Result<usize> {
    let total: f64 = s.iter().sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedMetric("stable rank of a zero matrix".into()));
    }
    // Relative slack so that exact ties with the threshold count as reached.
    let target = (1.0 - delta) * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for (k, v) in s.iter().enumerate() {
        cum += v;
        if cum >= target {
            return Ok(k + 1);
        }
    }
    Ok(s.len())
}

pub fn stable_rank(w: ArrayView2<'_, f64>, delta: f64) -> Result<usize> {
    stable_rank_from_singular_values(&singular_values(w), delta)
}

/// Mean absolute value.
pub fn avg_weight_magnitude(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::EmptyData("no weights".into()));
    }
    Ok(weights.iter().map(|w| w.abs()).sum::<f64>() / weights.len() as f64)
}
