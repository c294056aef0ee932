use crate::{Error, Result};

/// Shrink & Perturb, applied at task boundaries:
/// `w' = (1 − shrink) · w + perturb · w⁰` with `w⁰` the initial parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkPerturbConfig {
    pub shrink: f64,
    pub perturb: f64,
    w0: Vec<f64>,
}

impl ShrinkPerturbConfig {
    pub fn new(shrink: f64, perturb: f64, w0: &[f64]) -> Result<Self> {
        if !(0.0..1.0).contains(&shrink) && shrink != 1.0 {
            return Err(Error::Config(format!("shrink must lie in [0, 1], got {shrink}")));
        }
        if !(perturb >= 0.0) {
            return Err(Error::Config(format!("perturb must be nonnegative, got {perturb}")));
        }
        Ok(Self {
            shrink,
            perturb,
            w0: w0.to_vec(),
        })
    }

    pub fn w0(&self) -> &[f64] {
        &self.w0
    }
}

pub fn shrink_perturb_apply(params: &mut [f64], cfg: &ShrinkPerturbConfig) {
    let keep = 1.0 - cfg.shrink;
    for (w, &w0) in params.iter_mut().zip(&cfg.w0) {
        *w = keep * *w + cfg.perturb * w0;
    }
}
