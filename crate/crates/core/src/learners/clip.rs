/// Global-norm gradient clipping; `None` disables it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClipConfig {
    pub max_norm: Option<f64>,
}

impl ClipConfig {
    pub fn disabled() -> Self {
        Self { max_norm: None }
    }

    pub fn new(max_norm: f64) -> crate::Result<Self> {
        if !(max_norm > 0.0) {
            return Err(crate::Error::Config(format!(
                "clip norm must be positive, got {max_norm}"
            )));
        }
        Ok(Self {
            max_norm: Some(max_norm),
        })
    }
}

/// Rescales `grads` in place so their L2 norm is at most `max_norm`.
/// Returns the factor applied (1 when nothing changed).
pub fn clip_gradients(grads: &mut [f64], cfg: &ClipConfig) -> f64 {
    let Some(max_norm) = cfg.max_norm else {
        return 1.0;
    };
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
        scale
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_threshold_untouched() {
        let mut g = [3.0, 4.0];
        assert_eq!(clip_gradients(&mut g, &ClipConfig::new(10.0).unwrap()), 1.0);
        assert_eq!(g, [3.0, 4.0]);
    }

    #[test]
    fn above_threshold_rescaled() {
        let mut g = [3.0, 4.0];
        clip_gradients(&mut g, &ClipConfig::new(1.0).unwrap());
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn disabled_is_identity() {
        let mut g = [300.0, 400.0];
        clip_gradients(&mut g, &ClipConfig::disabled());
        assert_eq!(g, [300.0, 400.0]);
        assert!(ClipConfig::new(0.0).is_err());
    }
}
