use crate::error::{shape, Stage};
use crate::{Error, Result};

/// Plain gradient descent: `θ ← θ − lr · g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    learning_rate: f64,
}

impl SgdConfig {
    pub fn new(learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self { learning_rate })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }
}

pub fn sgd_step(params: &mut [f64], grads: &[f64], cfg: &SgdConfig) -> Result<()> {
    shape(Stage::Parameters, params.len(), grads.len())?;
    let lr = cfg.learning_rate;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let mut p = [1.0];
        sgd_step(&mut p, &[2.0], &SgdConfig::new(0.5).unwrap()).unwrap();
        assert_eq!(p, [0.0]);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = [1.5, -2.0];
        sgd_step(&mut p, &[0.0, 0.0], &SgdConfig::new(0.1).unwrap()).unwrap();
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn validation() {
        assert!(SgdConfig::new(0.0).is_err());
        assert!(SgdConfig::new(-1.0).is_err());
        let mut p = [1.0];
        assert!(sgd_step(&mut p, &[1.0, 2.0], &SgdConfig::new(0.1).unwrap()).is_err());
    }

    // Two steps on a nonlinear loss differ from one step with the summed
    // gradient, because the second gradient depends on where the first
    // step landed.
    #[test]
    fn steps_do_not_compose_on_nonlinear_loss() {
        let grad = |w: f64| 4.0 * w * w * w; // d/dw of w^4
        let cfg = SgdConfig::new(0.1).unwrap();
        let mut two = [1.0];
        let g1 = grad(two[0]);
        sgd_step(&mut two, &[g1], &cfg).unwrap();
        let g2 = grad(two[0]);
        sgd_step(&mut two, &[g2], &cfg).unwrap();
        let mut one = [1.0];
        sgd_step(&mut one, &[g1 + grad(1.0)], &cfg).unwrap();
        assert!((two[0] - one[0]).abs() > 1e-3);
    }
}
