use crate::fly::SparseCodes;
use crate::{Error, Result};

/// A KC belongs to a task's profile when it is active for at least this
/// fraction of the task's samples.
pub const PROFILE_THRESHOLD: f64 = 0.5;

/// KCs selected by the coding step in at least `threshold` of the samples.
pub fn active_profile(codes: &SparseCodes, n_kc: usize, threshold: f64) -> Vec<bool> {
    let mut counts = vec![0usize; n_kc];
    for &j in &codes.indices {
        counts[j as usize] += 1;
    }
    let need = threshold * codes.batch() as f64;
    counts.iter().map(|&c| c > 0 && c as f64 >= need).collect()
}

/// Jaccard index of the two tasks' active profiles.
pub fn kc_overlap(a: &SparseCodes, b: &SparseCodes, n_kc: usize, threshold: f64) -> Result<f64> {
    let pa = active_profile(a, n_kc, threshold);
    let pb = active_profile(b, n_kc, threshold);
    let inter = pa.iter().zip(&pb).filter(|(x, y)| **x && **y).count();
    let union = pa.iter().zip(&pb).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        return Err(Error::UndefinedMetric("both active profiles are empty".into()));
    }
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(sets: &[[u32; 2]]) -> SparseCodes {
        SparseCodes {
            active_count: 2,
            indices: sets.iter().flatten().copied().collect(),
            values: vec![1.0; sets.len() * 2],
        }
    }

    #[test]
    fn identical_and_disjoint() {
        let a = codes(&[[0, 1], [0, 1], [0, 2]]);
        assert_eq!(kc_overlap(&a, &a, 6, 0.5).unwrap(), 1.0);
        let b = codes(&[[3, 4], [3, 4]]);
        assert_eq!(kc_overlap(&a, &b, 6, 0.5).unwrap(), 0.0);
        assert_eq!(active_profile(&a, 6, 0.5), vec![true, true, false, false, false, false]);
    }

    #[test]
    fn empty_profiles() {
        let a = codes(&[[0, 1], [2, 3], [4, 5]]);
        assert!(kc_overlap(&a, &a, 6, 0.5).is_err());
    }
}
