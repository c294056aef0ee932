use crate::{Error, Result};

/// `C(n, r)` exactly, or `None` on overflow.
pub fn binomial(n: u64, r: u64) -> Option<u128> {
    if r > n {
        return Some(0);
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc · (n − i) is divisible by (i + 1) at every step.
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Probability that `m` rows, each an independent uniform `r`-subset of `n`
/// inputs, are pairwise distinct.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Birthday {
    pub p: f64,
    pub ln_p: f64,
    /// Number of possible subsets, `C(n, r)`.
    pub subsets: f64,
}

/// `p = R! / ((R − m)! R^m)` with `R = C(n, r)`, evaluated as
/// `Σ_{i<m} ln(1 − i/R)`.
pub fn birthday_probability(n: u64, r: u64, m: u64) -> Result<Birthday> {
    if r == 0 || r > n {
        return Err(Error::Domain(format!("degree {r} must lie in 1..={n}")));
    }
    if m == 0 {
        return Err(Error::Domain("need at least one row".into()));
    }
    let subsets = match binomial(n, r) {
        Some(c) => c as f64,
        None => {
            let (n, r) = (n as f64, r as f64);
            (libm::lgamma(n + 1.0) - libm::lgamma(r + 1.0) - libm::lgamma(n - r + 1.0)).exp()
        }
    };
    if m as f64 > subsets {
        return Ok(Birthday {
            p: 0.0,
            ln_p: f64::NEG_INFINITY,
            subsets,
        });
    }
    let ln_p: f64 = (1..m).map(|i| (-(i as f64) / subsets).ln_1p()).sum();
    Ok(Birthday {
        p: ln_p.exp(),
        ln_p,
        subsets,
    })
}

/// The degree in `1..=n` maximizing the probability (lowest on ties).
pub fn birthday_argmax(n: u64, m: u64) -> Result<u64> {
    let mut best = (1, f64::NEG_INFINITY);
    for r in 1..=n {
        let b = birthday_probability(n, r, m)?;
        if b.ln_p > best.1 {
            best = (r, b.ln_p);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), Some(6));
        assert_eq!(binomial(50, 25), Some(126_410_606_437_752));
        assert_eq!(binomial(3, 5), Some(0));
    }

    #[test]
    fn small_cases() {
        assert_eq!(birthday_probability(10, 3, 1).unwrap().p, 1.0);
        let b = birthday_probability(4, 2, 2).unwrap();
        assert!((b.p - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(birthday_probability(4, 2, 7).unwrap().p, 0.0);
        assert!(birthday_probability(4, 5, 2).is_err());
    }

    #[test]
    fn half_degree_is_best() {
        assert_eq!(birthday_argmax(50, 2000).unwrap(), 25);
    }
}
