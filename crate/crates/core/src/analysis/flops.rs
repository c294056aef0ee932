use crate::fly::active_count_for;
use crate::{Error, Result};

/// Operations charged per active head weight for one update.
pub const HEAD_UPDATE_FACTOR: u64 = 6;

/// Operation counts for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsReport {
    /// Dense `n_kc × n_in` layer: one multiply and one add per entry.
    pub dense_forward: u64,
    /// Sparse 0/1 projection: `r` additions per KC.
    pub fly_forward: u64,
    /// `HEAD_UPDATE_FACTOR · ceil(k · n_kc) · n_classes`.
    pub head_update: u64,
    pub notes: String,
}

pub fn flops_report(n_in: u64, n_kc: u64, degree: u64, coding_level: f64, n_classes: u64) -> Result<FlopsReport> {
    if n_in == 0 || n_kc == 0 || degree == 0 || degree > n_in || n_classes == 0 {
        return Err(Error::Domain("dimensions must be positive with degree ≤ n_in".into()));
    }
    if !(coding_level > 0.0 && coding_level <= 1.0) {
        return Err(Error::Domain(format!("coding level {coding_level} outside (0, 1]")));
    }
    let active = active_count_for(coding_level, n_kc as usize) as u64;
    Ok(FlopsReport {
        dense_forward: 2 * n_in * n_kc,
        fly_forward: degree * n_kc,
        head_update: HEAD_UPDATE_FACTOR * active * n_classes,
        notes: format!(
            "dense = 2·n_in·n_kc (multiply+add); fly = r·n_kc (additions only); \
             head update = {HEAD_UPDATE_FACTOR}·active·classes with active = {active}"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn olfactory_counts() {
        let f = flops_report(50, 2000, 6, 0.01, 10).unwrap();
        assert_eq!((f.dense_forward, f.fly_forward, f.head_update), (200_000, 12_000, 1_200));
    }

    #[test]
    fn sparse_is_cheaper_for_every_valid_degree() {
        for r in 1..=50 {
            let f = flops_report(50, 2000, r, 0.05, 10).unwrap();
            assert!(f.fly_forward < f.dense_forward);
        }
        assert!(flops_report(50, 2000, 51, 0.05, 10).is_err());
    }
}
