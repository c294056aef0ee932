use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::rng::{stream, substream};
use crate::{Error, Result};

/// Gaussian clouds around uniform random class prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct OdorConfig {
    pub n_dims: usize,
    pub n_classes: usize,
    pub noise_sigma: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for OdorConfig {
    fn default() -> Self {
        Self {
            n_dims: 50,
            n_classes: 10,
            noise_sigma: 0.5,
            train_per_class: 5000,
            test_per_class: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdorData {
    pub train: Dataset,
    pub test: Dataset,
    /// One prototype per row.
    pub prototypes: Array2<f64>,
}

/// Prototypes are drawn once from `U[0,1]^n`; every sample adds independent
/// `N(0, σ²)` noise per dimension. Samples are grouped by class, class 0
/// first. Train and test use separate noise streams.
pub fn gen_odor_dataset(cfg: &OdorConfig) -> Result<OdorData> {
    if cfg.n_dims == 0 || cfg.n_classes == 0 || cfg.train_per_class == 0 || cfg.test_per_class == 0
    {
        return Err(Error::Config("odor dimensions and counts must be positive".into()));
    }
    let noise = Normal::new(0.0, cfg.noise_sigma)
        .map_err(|_| Error::Config(format!("invalid noise sigma {}", cfg.noise_sigma)))?;
    let mut rng = substream(cfg.seed, &[stream::DATA, 0]);
    let prototypes = Array2::from_shape_fn((cfg.n_classes, cfg.n_dims), |_| rng.gen::<f64>());
    let draw = |per_class: usize, split: u64| -> Result<Dataset> {
        let mut rng = substream(cfg.seed, &[stream::DATA, split]);
        let n = per_class * cfg.n_classes;
        let mut features = Array2::zeros((n, cfg.n_dims));
        let mut labels = Vec::with_capacity(n);
        for c in 0..cfg.n_classes {
            for s in 0..per_class {
                let mut row = features.row_mut(c * per_class + s);
                for (v, &p) in row.iter_mut().zip(prototypes.row(c)) {
                    *v = p + noise.sample(&mut rng);
                }
                labels.push(c);
            }
        }
        Dataset::new(features, labels, cfg.n_classes)
    };
    let train = draw(cfg.train_per_class, 1)?;
    let test = draw(cfg.test_per_class, 2)?;
    Ok(OdorData {
        train,
        test,
        prototypes,
    })
}
