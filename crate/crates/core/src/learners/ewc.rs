use ndarray::{Array2, ArrayView2};

use crate::fly::FlyModel;
use crate::{Error, Result};

/// Elastic weight consolidation state: a running diagonal Fisher and the
/// parameters at the latest consolidation.
#[derive(Debug, Clone, PartialEq)]
pub struct EwcState {
    pub lambda: f64,
    pub fisher: Vec<f64>,
    pub anchor: Vec<f64>,
    pub tasks_consolidated: usize,
}

impl EwcState {
    pub fn new(lambda: f64, n_params: usize) -> Self {
        Self {
            lambda,
            fisher: vec![0.0; n_params],
            anchor: vec![0.0; n_params],
            tasks_consolidated: 0,
        }
    }

    /// Adds the penalty gradient into `grads` and returns the penalty value.
    pub(crate) fn add_penalty(&self, params: &[f64], grads: &mut [f64]) -> f64 {
        if self.tasks_consolidated == 0 || self.lambda == 0.0 {
            return 0.0;
        }
        let mut penalty = 0.0;
        for (((g, &p), &a), &f) in grads.iter_mut().zip(params).zip(&self.anchor).zip(&self.fisher)
        {
            let d = p - a;
            penalty += f * d * d;
            *g += self.lambda * f * d;
        }
        0.5 * self.lambda * penalty
    }
}

/// `(λ/2) Σ F_i (θ_i − θ*_i)²` and its gradient `λ F_i (θ_i − θ*_i)`.
pub fn ewc_penalty_and_grad(params: &[f64], state: &EwcState) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let penalty = state.add_penalty(params, &mut grad);
    (penalty, grad)
}

const FISHER_CHUNK: usize = 64;

/// Diagonal Fisher of the model's predictive distribution over the allowed
/// classes, averaged over the rows of `features`:
/// `F = mean_x Σ_y p(y|x) (∇ log p(y|x))²`.
pub fn diagonal_fisher(
    model: &FlyModel,
    features: ArrayView2<'_, f64>,
    mask: Option<&[bool]>,
) -> Result<Vec<f64>> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::EmptyData("Fisher estimate needs at least one sample".into()));
    }
    let n_classes = model.n_classes();
    let classes: Vec<usize> = (0..n_classes)
        .filter(|&c| mask.map_or(true, |m| m[c]))
        .collect();
    let kk = classes.len();
    let mut total = vec![0.0; model.num_params()];
    let mut start = 0;
    while start < n {
        let end = (start + FISHER_CHUNK).min(n);
        let trace = model.forward_batch(features.slice(ndarray::s![start..end, ..]))?;
        let mut dl = Array2::zeros(((end - start) * kk, n_classes));
        for b in 0..end - start {
            let logits = trace.logits.row(b);
            let max = classes
                .iter()
                .map(|&c| logits[c])
                .fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = classes.iter().map(|&c| (logits[c] - max).exp()).sum();
            let p: Vec<f64> = classes.iter().map(|&c| (logits[c] - max).exp() / z).collect();
            for (yi, &y) in classes.iter().enumerate() {
                let w = p[yi].sqrt();
                let mut row = dl.row_mut(b * kk + yi);
                for (ci, &c) in classes.iter().enumerate() {
                    row[c] = -w * p[ci];
                }
                row[y] += w;
            }
        }
        let rep = FlyModel::repeat_rows(&trace, kk);
        let sq = model.squared_gradient_sum(&rep, dl.view())?;
        for (t, s) in total.iter_mut().zip(&sq) {
            *t += s;
        }
        start = end;
    }
    let inv = 1.0 / n as f64;
    total.iter_mut().for_each(|t| *t *= inv);
    Ok(total)
}

/// Adds this task's Fisher to the running total and re-anchors at the
/// current parameters.
pub fn ewc_consolidate(
    model: &FlyModel,
    features: ArrayView2<'_, f64>,
    mask: Option<&[bool]>,
    state: &mut EwcState,
) -> Result<()> {
    let fisher = diagonal_fisher(model, features, mask)?;
    if state.fisher.len() != fisher.len() {
        state.fisher = vec![0.0; fisher.len()];
    }
    for (acc, f) in state.fisher.iter_mut().zip(&fisher) {
        *acc += f;
    }
    state.anchor = model.params().to_vec();
    state.tasks_consolidated += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consolidated(lambda: f64, fisher: Vec<f64>, anchor: Vec<f64>) -> EwcState {
        EwcState {
            lambda,
            fisher,
            anchor,
            tasks_consolidated: 1,
        }
    }

    #[test]
    fn single_term() {
        let s = consolidated(4.0, vec![0.5], vec![0.0]);
        let (p, g) = ewc_penalty_and_grad(&[2.0], &s);
        assert_eq!(p, 4.0);
        assert_eq!(g, vec![4.0]);
    }

    #[test]
    fn anchor_is_fixed_point() {
        let s = consolidated(3.0, vec![0.2, 1.7], vec![0.4, -1.0]);
        let (p, g) = ewc_penalty_and_grad(&[0.4, -1.0], &s);
        assert_eq!(p, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn inactive_before_consolidation() {
        let mut s = EwcState::new(10.0, 2);
        s.fisher = vec![1.0, 1.0];
        let (p, g) = ewc_penalty_and_grad(&[5.0, 5.0], &s);
        assert_eq!(p, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn empty_data_is_an_error() {
        use crate::fly::ModelSpec;
        let model = FlyModel::new(ModelSpec {
            n_in: 2,
            pre_layers: vec![],
            n_kc: 0,
            degree: 0,
            coding_level: 1.0,
            n_classes: 2,
            ablate_kc: true,
            head_bias: false,
            seed: 0,
        })
        .unwrap();
        let empty = Array2::<f64>::zeros((0, 2));
        let mut s = EwcState::new(1.0, model.num_params());
        assert!(matches!(
            ewc_consolidate(&model, empty.view(), None, &mut s),
            Err(Error::EmptyData(_))
        ));
    }
}
