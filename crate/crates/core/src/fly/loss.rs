use ndarray::{Array2, ArrayView2};

use crate::error::{shape, Stage};
use crate::{Error, Result};

/// Softmax cross-entropy of one logit vector against `label`.
///
/// Returns the loss and its gradient w.r.t. the logits,
/// `softmax(logits) − one_hot(label)`.
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidLabel {
            label,
            n_classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grad: Vec<f64> = logits.iter().map(|&o| (o - max).exp()).collect();
    let z: f64 = grad.iter().sum();
    let loss = z.ln() - (logits[label] - max);
    for g in &mut grad {
        *g /= z;
    }
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Loss, gradient and accuracy of one batch.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    /// Mean loss over the batch.
    pub loss: f64,
    /// Gradient of the mean loss w.r.t. the logits (already divided by the
    /// batch size). Masked-out classes carry exactly zero.
    pub dlogits: Array2<f64>,
    /// Number of samples whose masked argmax equals the label.
    pub correct: usize,
}

/// Argmax over the allowed classes, lowest index on ties.
pub fn predict(logits: &[f64], mask: Option<&[bool]>) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for (c, &v) in logits.iter().enumerate() {
        if mask.is_some_and(|m| !m[c]) {
            continue;
        }
        if best == usize::MAX || v > best_v {
            best = c;
            best_v = v;
        }
    }
    best
}

/// Mean softmax cross-entropy over a batch, with logits outside `mask`
/// removed from the softmax entirely.
pub fn masked_cross_entropy(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    mask: Option<&[bool]>,
) -> Result<BatchLoss> {
    shape(Stage::Loss, logits.nrows(), labels.len())?;
    let n_classes = logits.ncols();
    if let Some(m) = mask {
        shape(Stage::Loss, n_classes, m.len())?;
    }
    let allowed = |c: usize| mask.map_or(true, |m| m[c]);
    let batch = labels.len();
    let inv = 1.0 / batch.max(1) as f64;
    let mut dlogits = Array2::zeros((batch, n_classes));
    let mut total = 0.0;
    let mut correct = 0;
    for (b, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        if y >= n_classes || !allowed(y) {
            return Err(Error::InvalidLabel {
                label: y,
                n_classes,
            });
        }
        let max = (0..n_classes)
            .filter(|&c| allowed(c))
            .map(|c| row[c])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut drow = dlogits.row_mut(b);
        for c in (0..n_classes).filter(|&c| allowed(c)) {
            let e = (row[c] - max).exp();
            drow[c] = e;
            z += e;
        }
        total += z.ln() - (row[y] - max);
        for c in (0..n_classes).filter(|&c| allowed(c)) {
            drow[c] *= inv / z;
        }
        drow[y] -= inv;
        if predict(row.as_slice().expect("contiguous logits"), mask) == y {
            correct += 1;
        }
    }
    Ok(BatchLoss {
        loss: total * inv,
        dlogits,
        correct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn symmetric_two_class() {
        let (loss, grad) = cross_entropy_loss(&[0.0, 0.0], 0).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(grad, vec![-0.5, 0.5]);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let (loss, grad) = cross_entropy_loss(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        let (loss, _) = cross_entropy_loss(&[1000.0, 0.0], 1).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_sums_to_zero() {
        let (_, grad) = cross_entropy_loss(&[0.3, -1.7, 4.2, 0.0], 2).unwrap();
        assert!(grad.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            cross_entropy_loss(&[0.0, 1.0], 2),
            Err(Error::InvalidLabel { label: 2, n_classes: 2 })
        ));
    }

    #[test]
    fn masked_classes_get_no_gradient() {
        let logits = array![[5.0, 1.0, 9.0], [0.0, 2.0, 9.0]];
        let mask = [true, true, false];
        let out = masked_cross_entropy(logits.view(), &[0, 1], Some(&mask)).unwrap();
        assert_eq!(out.dlogits[[0, 2]], 0.0);
        assert_eq!(out.dlogits[[1, 2]], 0.0);
        // Class 2 has the largest logit but is masked, so both predictions count.
        assert_eq!(out.correct, 2);
        let (l0, _) = cross_entropy_loss(&[5.0, 1.0], 0).unwrap();
        let (l1, _) = cross_entropy_loss(&[0.0, 2.0], 1).unwrap();
        assert!((out.loss - (l0 + l1) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn masked_label_is_rejected() {
        let logits = array![[0.0, 1.0]];
        assert!(masked_cross_entropy(logits.view(), &[1], Some(&[true, false])).is_err());
    }

    #[test]
    fn predict_ties_and_mask() {
        assert_eq!(predict(&[1.0, 3.0, 3.0], None), 1);
        assert_eq!(predict(&[1.0, 3.0, 3.0], Some(&[true, false, true])), 2);
    }
}
