use std::cmp::Ordering;

use crate::{Error, Result};

/// How ties at the k-th position are resolved. Only one policy exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    #[default]
    LowestIndexWins,
}

/// Top-k winner-take-all settings: the fraction `level` of KCs that stay
/// active, and the resulting integer count for a given layer width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodingConfig {
    level: f64,
    active_count: usize,
    tie_policy: TiePolicy,
}

/// `ceil(level · n)`, computed so that products which are integers up to
/// rounding (0.01 · 2000) do not round up to the next count.
pub fn active_count_for(level: f64, n: usize) -> usize {
    let x = level * n as f64;
    let r = x.round();
    let count = if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r
    } else {
        x.ceil()
    };
    (count as usize).clamp(1, n.max(1))
}

impl CodingConfig {
    pub fn new(level: f64, n_out: usize) -> Result<Self> {
        if !(level > 0.0 && level <= 1.0) {
            return Err(Error::InvalidCoding(level));
        }
        Ok(Self {
            level,
            active_count: active_count_for(level, n_out),
            tie_policy: TiePolicy::LowestIndexWins,
        })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    pub fn tie_policy(&self) -> TiePolicy {
        self.tie_policy
    }
}

/// Larger value first; equal values by lower index. NaN sorts last.
fn rank(values: &[f64], a: u32, b: u32) -> Ordering {
    let (va, vb) = (values[a as usize], values[b as usize]);
    match (va.is_nan(), vb.is_nan()) {
        (false, true) => Ordering::Less,
        (true, false) => Ordering::Greater,
        (true, true) => a.cmp(&b),
        (false, false) => vb.total_cmp(&va).then(a.cmp(&b)),
    }
}

/// Indices of the `k` winners of `values`, ascending. `scratch` is reused
/// between calls to avoid reallocating the candidate list.
pub(crate) fn select_top_k(values: &[f64], k: usize, scratch: &mut Vec<u32>) -> Vec<u32> {
    let n = values.len();
    let k = k.min(n);
    scratch.clear();
    scratch.extend(0..n as u32);
    if k == 0 {
        return Vec::new();
    }
    if k < n {
        scratch.select_nth_unstable_by(k - 1, |&a, &b| rank(values, a, b));
    }
    let mut winners = scratch[..k].to_vec();
    winners.sort_unstable();
    winners
}

/// Keeps the `active_count` largest entries of `kc_raw` and zeros the rest.
/// Returns the coded vector and the ascending active set.
pub fn top_k_code(kc_raw: &[f64], coding: &CodingConfig) -> (Vec<f64>, Vec<usize>) {
    let mut scratch = Vec::new();
    let winners = select_top_k(kc_raw, coding.active_count, &mut scratch);
    let mut coded = vec![0.0; kc_raw.len()];
    for &j in &winners {
        coded[j as usize] = kc_raw[j as usize];
    }
    (coded, winners.into_iter().map(|j| j as usize).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(count: usize, n: usize) -> CodingConfig {
        CodingConfig::new(count as f64 / n as f64, n).unwrap()
    }

    #[test]
    fn keeps_largest_signed_values() {
        let (coded, active) = top_k_code(&[0.5, -1.0, 3.0, 2.0, 0.1], &cfg(2, 5));
        assert_eq!(coded, vec![0.0, 0.0, 3.0, 2.0, 0.0]);
        assert_eq!(active, vec![2, 3]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let (coded, active) = top_k_code(&[1.0; 4], &cfg(2, 4));
        assert_eq!(coded, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(active, vec![0, 1]);
        let (_, active) = top_k_code(&[0.0, 2.0, 1.0, 2.0, 1.0], &cfg(3, 5));
        assert_eq!(active, vec![1, 2, 3]);
    }

    #[test]
    fn full_level_is_identity() {
        let raw = [0.3, -2.0, 7.0, 0.0];
        let (coded, active) = top_k_code(&raw, &CodingConfig::new(1.0, 4).unwrap());
        assert_eq!(coded, raw.to_vec());
        assert_eq!(active, vec![0, 1, 2, 3]);
    }

    #[test]
    fn level_validation() {
        assert!(CodingConfig::new(0.0, 10).is_err());
        assert!(CodingConfig::new(1.5, 10).is_err());
        assert!(CodingConfig::new(f64::NAN, 10).is_err());
        assert_eq!(CodingConfig::new(1e-9, 10).unwrap().active_count(), 1);
    }

    #[test]
    fn active_count_rounding() {
        assert_eq!(active_count_for(0.01, 2000), 20);
        assert_eq!(active_count_for(0.07, 100), 7);
        assert_eq!(active_count_for(0.001, 31360), 32);
        assert_eq!(active_count_for(0.3, 10), 3);
        assert_eq!(active_count_for(0.25, 10), 3);
    }
}
