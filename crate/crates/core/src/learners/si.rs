/// Synaptic intelligence: a per-parameter path integral of loss decrease
/// within a task, consolidated into importances at task boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SiState {
    pub c: f64,
    /// Damping ξ in the importance denominator.
    pub xi: f64,
    pub omega_running: Vec<f64>,
    /// Consolidated importance Ω.
    pub importance: Vec<f64>,
    pub anchor: Vec<f64>,
    pub task_start_params: Vec<f64>,
}

impl SiState {
    pub fn new(c: f64, xi: f64, params: &[f64]) -> Self {
        Self {
            c,
            xi,
            omega_running: vec![0.0; params.len()],
            importance: vec![0.0; params.len()],
            anchor: params.to_vec(),
            task_start_params: params.to_vec(),
        }
    }

    pub(crate) fn add_penalty(&self, params: &[f64], grads: &mut [f64]) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        let mut penalty = 0.0;
        let two_c = 2.0 * self.c;
        for (((g, &p), &a), &w) in grads
            .iter_mut()
            .zip(params)
            .zip(&self.anchor)
            .zip(&self.importance)
        {
            let d = p - a;
            penalty += w * d * d;
            *g += two_c * w * d;
        }
        self.c * penalty
    }
}

/// `ω_k += −g_k · Δθ_k` for one optimizer step.
pub fn si_accumulate_step(state: &mut SiState, grads: &[f64], param_delta: &[f64]) {
    for ((w, g), d) in state.omega_running.iter_mut().zip(grads).zip(param_delta) {
        *w -= g * d;
    }
}

/// Folds the task's path integral into Ω and starts a new task.
pub fn si_consolidate(state: &mut SiState, params: &[f64]) {
    for k in 0..params.len() {
        let delta = params[k] - state.task_start_params[k];
        state.importance[k] += state.omega_running[k].max(0.0) / (delta * delta + state.xi);
    }
    state.anchor.copy_from_slice(params);
    state.task_start_params.copy_from_slice(params);
    state.omega_running.iter_mut().for_each(|w| *w = 0.0);
}

/// `c Σ Ω_k (θ_k − θ*_k)²` and its gradient `2c Ω_k (θ_k − θ*_k)`.
pub fn si_penalty_and_grad(params: &[f64], state: &SiState) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let penalty = state.add_penalty(params, &mut grad);
    (penalty, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descent_step_contributes_positively() {
        let mut s = SiState::new(1.0, 1e-3, &[0.0]);
        si_accumulate_step(&mut s, &[2.0], &[-0.1]);
        assert!((s.omega_running[0] - 0.2).abs() < 1e-15);
        si_accumulate_step(&mut s, &[5.0], &[0.0]);
        assert!((s.omega_running[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn consolidation_formula() {
        let mut s = SiState::new(1.0, 0.01, &[0.0]);
        s.omega_running[0] = 0.2;
        si_consolidate(&mut s, &[0.1]);
        assert!((s.importance[0] - 10.0).abs() < 1e-12);
        assert_eq!(s.omega_running[0], 0.0);
        assert_eq!(s.anchor, vec![0.1]);
        assert_eq!(s.task_start_params, vec![0.1]);
    }

    #[test]
    fn negative_path_integral_is_clamped() {
        let mut s = SiState::new(1.0, 0.01, &[0.0]);
        s.omega_running[0] = -3.0;
        si_consolidate(&mut s, &[0.5]);
        assert_eq!(s.importance[0], 0.0);
    }

    #[test]
    fn zero_displacement_uses_damping() {
        let mut s = SiState::new(1.0, 0.01, &[0.3]);
        s.omega_running[0] = 0.2;
        si_consolidate(&mut s, &[0.3]);
        assert!((s.importance[0] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_single_term_and_off_switch() {
        let mut s = SiState::new(1.0, 1e-3, &[1.0]);
        s.importance = vec![3.0];
        let (p, g) = si_penalty_and_grad(&[2.0], &s);
        assert_eq!(p, 3.0);
        assert_eq!(g, vec![6.0]);
        s.c = 0.0;
        let (p, g) = si_penalty_and_grad(&[2.0], &s);
        assert_eq!(p, 0.0);
        assert_eq!(g, vec![0.0]);
    }
}
