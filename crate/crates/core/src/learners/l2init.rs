/// L2 Init: pull parameters back toward their initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct L2InitState {
    pub alpha: f64,
    theta0: Vec<f64>,
}

impl L2InitState {
    pub fn new(alpha: f64, params: &[f64]) -> Self {
        Self {
            alpha,
            theta0: params.to_vec(),
        }
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub(crate) fn add_penalty(&self, params: &[f64], grads: &mut [f64]) -> f64 {
        if self.alpha == 0.0 {
            return 0.0;
        }
        let mut penalty = 0.0;
        for ((g, &p), &p0) in grads.iter_mut().zip(params).zip(&self.theta0) {
            let d = p - p0;
            penalty += d * d;
            *g += 2.0 * self.alpha * d;
        }
        self.alpha * penalty
    }
}

/// `α ‖θ − θ0‖²` and its gradient `2α (θ − θ0)`.
pub fn l2init_penalty_and_grad(params: &[f64], state: &L2InitState) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let penalty = state.add_penalty(params, &mut grad);
    (penalty, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_terms() {
        let s = L2InitState::new(0.5, &[0.0, 0.0]);
        let (p, g) = l2init_penalty_and_grad(&[1.0, 2.0], &s);
        assert_eq!(p, 2.5);
        assert_eq!(g, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_at_init() {
        let s = L2InitState::new(7.0, &[0.3, -0.2]);
        let (p, g) = l2init_penalty_and_grad(&[0.3, -0.2], &s);
        assert_eq!(p, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }
}
