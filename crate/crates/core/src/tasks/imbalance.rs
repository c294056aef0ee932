use rand::seq::SliceRandom;

use super::Dataset;
use crate::rng::{stream, substream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImbalanceOrder {
    /// Largest class first.
    Normal,
    /// Smallest class first.
    Reverse,
    /// Sizes shuffled over classes.
    Random,
}

impl std::str::FromStr for ImbalanceOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Self::Normal),
            "reverse" => Ok(Self::Reverse),
            "random" => Ok(Self::Random),
            _ => Err(Error::Config(format!("unknown imbalance order {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalanceSpec {
    /// Ratio of the largest to the smallest class size.
    pub gamma: f64,
    pub order: ImbalanceOrder,
    pub n_max: usize,
    pub seed: u64,
}

/// Target size per class, indexed by class. The k-th size in the descending
/// sequence is `round(n_max · γ^(−k/(C−1)))` for k = 0..C.
pub fn imbalance_sizes(n_classes: usize, spec: &ImbalanceSpec) -> Result<Vec<usize>> {
    if !(spec.gamma >= 1.0 && spec.gamma.is_finite()) {
        return Err(Error::Config(format!("gamma must be at least 1, got {}", spec.gamma)));
    }
    if n_classes == 0 || spec.n_max == 0 {
        return Err(Error::Config("imbalance needs classes and a positive n_max".into()));
    }
    let denom = (n_classes.max(2) - 1) as f64;
    let mut sizes: Vec<usize> = (0..n_classes)
        .map(|k| (spec.n_max as f64 * spec.gamma.powf(-(k as f64) / denom)).round() as usize)
        .collect();
    match spec.order {
        ImbalanceOrder::Normal => {}
        ImbalanceOrder::Reverse => sizes.reverse(),
        ImbalanceOrder::Random => sizes.shuffle(&mut substream(spec.seed, &[stream::IMBALANCE])),
    }
    Ok(sizes)
}

/// Keeps the first `n_k` samples of each class, where classes are learned in
/// index order (class 0 first).
pub fn apply_imbalance(dataset: &Dataset, spec: &ImbalanceSpec) -> Result<Dataset> {
    let sizes = imbalance_sizes(dataset.n_classes(), spec)?;
    let counts = dataset.class_counts();
    for (c, (&want, &have)) in sizes.iter().zip(&counts).enumerate() {
        if want > have {
            return Err(Error::InsufficientData(format!(
                "class {c} needs {want} samples, has {have}"
            )));
        }
    }
    let mut taken = vec![0; dataset.n_classes()];
    let keep: Vec<usize> = dataset
        .labels()
        .iter()
        .enumerate()
        .filter(|&(_, &y)| {
            taken[y] += 1;
            taken[y] <= sizes[y]
        })
        .map(|(i, _)| i)
        .collect();
    Ok(dataset.select(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(gamma: f64, order: ImbalanceOrder, n_max: usize) -> ImbalanceSpec {
        ImbalanceSpec {
            gamma,
            order,
            n_max,
            seed: 1,
        }
    }

    #[test]
    fn ten_classes_ratio_ten() {
        let s = imbalance_sizes(10, &spec(10.0, ImbalanceOrder::Normal, 500)).unwrap();
        assert_eq!(s[0], 500);
        assert_eq!(s[9], 50);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn three_classes() {
        let s = imbalance_sizes(3, &spec(4.0, ImbalanceOrder::Normal, 400)).unwrap();
        assert_eq!(s, vec![400, 200, 100]);
        let r = imbalance_sizes(3, &spec(4.0, ImbalanceOrder::Reverse, 400)).unwrap();
        assert_eq!(r, vec![100, 200, 400]);
    }

    #[test]
    fn balanced_when_gamma_is_one() {
        let s = imbalance_sizes(5, &spec(1.0, ImbalanceOrder::Random, 70)).unwrap();
        assert_eq!(s, vec![70; 5]);
    }

    #[test]
    fn insufficient_samples() {
        let d = Dataset::new(ndarray::Array2::zeros((4, 1)), vec![0, 0, 1, 1], 2).unwrap();
        let err = apply_imbalance(&d, &spec(2.0, ImbalanceOrder::Normal, 3)).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
        let ok = apply_imbalance(&d, &spec(2.0, ImbalanceOrder::Normal, 2)).unwrap();
        assert_eq!(ok.class_counts(), vec![2, 1]);
    }
}
