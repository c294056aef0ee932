use ndarray::s;

use super::angles::angle_between;
use crate::fly::{masked_cross_entropy, FlyModel};
use crate::tasks::Dataset;
use crate::{Error, Result};

/// Gradients shorter than this are treated as vanishing.
pub const MIN_GRADIENT_NORM: f64 = 1e-10;

/// Angle between two vectors in degrees.
pub fn gradient_angle(g1: &[f64], g2: &[f64]) -> Result<f64> {
    Ok(angle_between(g1, g2)?.to_degrees())
}

/// Parameters at the end of a task, with that task's data and the class
/// mask that was active while it trained.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimumSnapshot {
    pub params: Vec<f64>,
    pub data: Dataset,
    pub mask: Vec<bool>,
}

/// Full-batch mean gradient of the masked loss, restricted to the head.
fn head_gradient(model: &FlyModel, snap: &OptimumSnapshot) -> Result<Vec<f64>> {
    const CHUNK: usize = 512;
    let mut m = model.clone();
    m.set_params(snap.params.clone())?;
    let n = snap.data.len();
    if n == 0 {
        return Err(Error::EmptyData("snapshot has no samples".into()));
    }
    let range = m.layout().head_range();
    let mut total = vec![0.0; range.len()];
    let x = snap.data.features();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let trace = m.forward_batch(x.slice(s![start..end, ..]))?;
        let loss = masked_cross_entropy(trace.logits.view(), &snap.data.labels()[start..end], Some(&snap.mask))?;
        let g = m.backward_batch(&trace, loss.dlogits.view())?;
        let w = (end - start) as f64 / n as f64;
        for (t, v) in total.iter_mut().zip(&g.values[range.clone()]) {
            *t += w * v;
        }
        start = end;
    }
    Ok(total)
}

/// Angle in degrees between `∇L_first(w_first*)` and `∇L_last(w_last*)`
/// over the head parameters. `None` when either gradient vanishes.
pub fn task_optima_gradient_angle(
    model: &FlyModel,
    first: &OptimumSnapshot,
    last: &OptimumSnapshot,
) -> Result<Option<f64>> {
    let g1 = head_gradient(model, first)?;
    let g2 = head_gradient(model, last)?;
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm(&g1) < MIN_GRADIENT_NORM || norm(&g2) < MIN_GRADIENT_NORM {
        return Ok(None);
    }
    gradient_angle(&g1, &g2).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_angles() {
        assert!((gradient_angle(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 90.0).abs() < 1e-12);
        assert!(gradient_angle(&[1.0, 2.0], &[1.0, 2.0]).unwrap().abs() < 1e-6);
        assert!((gradient_angle(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - 45.0).abs() < 1e-12);
        let a = gradient_angle(&[0.3, -2.0], &[1.5, 0.7]).unwrap();
        let b = gradient_angle(&[0.9, -6.0], &[0.015, 0.007]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(gradient_angle(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }
}
