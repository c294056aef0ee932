use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use crate::rng::substream;
use crate::{Error, Result};

fn check_dim(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("angle distribution needs n ≥ 2, got {n}")));
    }
    Ok(())
}

fn log_norm(n: usize) -> f64 {
    let n = n as f64;
    libm::lgamma(n / 2.0) - libm::lgamma((n - 1.0) / 2.0) - 0.5 * PI.ln()
}

/// Density of the angle between two independent isotropic vectors in `R^n`:
/// `Z_n sin^{n−2} θ` with `Z_n = Γ(n/2) / (Γ((n−1)/2) √π)`.
pub fn angle_pdf(n: usize, theta: f64) -> Result<f64> {
    check_dim(n)?;
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Domain(format!("angle {theta} outside [0, π]")));
    }
    if n == 2 {
        return Ok(1.0 / PI);
    }
    let s = theta.sin();
    if s <= 0.0 {
        return Ok(0.0);
    }
    Ok((log_norm(n) + (n - 2) as f64 * s.ln()).exp())
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Integral of `g(θ) p_n(θ)` over `[lo, hi]`. The range is cut into panels
/// first so the narrow peak at large `n` is never skipped.
fn integrate(n: usize, lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    check_dim(n)?;
    const PANELS: usize = 64;
    let f = |t: f64| g(t) * angle_pdf(n, t.clamp(0.0, PI)).unwrap_or(0.0);
    let h = (hi - lo) / PANELS as f64;
    Ok((0..PANELS)
        .map(|i| {
            let a = lo + i as f64 * h;
            adaptive_simpson(&f, a, a + h, 1e-12 / PANELS as f64)
        })
        .sum())
}

/// Probability mass of `p_n` on `[lo, hi]`.
pub fn angle_pdf_mass(n: usize, lo: f64, hi: f64) -> Result<f64> {
    integrate(n, lo, hi, |_| 1.0)
}

/// `∫ (θ − π/2)² p_n(θ) dθ`.
pub fn angle_variance(n: usize) -> Result<f64> {
    integrate(n, 0.0, PI, |t| (t - PI / 2.0).powi(2))
}

/// Angle in radians; errors when either vector is zero.
pub fn angle_between(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedMetric("angle with a zero vector".into()));
    }
    // 2·atan2(|â − b̂|, |â + b̂|) stays accurate near 0 and π, unlike acos.
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// Equal-width histogram of sampled angles over `[0, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleHistogram {
    pub n: usize,
    pub edges: Vec<f64>,
    /// Fraction of pairs in each bin.
    pub mass: Vec<f64>,
    pub mean: f64,
}

impl AngleHistogram {
    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    /// Mass divided by bin width.
    pub fn density(&self) -> Vec<f64> {
        let w = PI / self.bins() as f64;
        self.mass.iter().map(|m| m / w).collect()
    }
}

/// Angles between `n_pairs` pairs of independent standard-normal vectors.
pub fn sample_angle_histogram(n: usize, n_pairs: usize, bins: usize, seed: u64) -> Result<AngleHistogram> {
    check_dim(n)?;
    if n_pairs == 0 || bins == 0 {
        return Err(Error::Domain("need at least one pair and one bin".into()));
    }
    let mut rng = substream(seed, &[crate::rng::stream::DATA, 4]);
    let mut counts = vec![0usize; bins];
    let mut sum = 0.0;
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    let mut done = 0;
    while done < n_pairs {
        for v in a.iter_mut().chain(b.iter_mut()) {
            *v = StandardNormal.sample(&mut rng);
        }
        let Ok(theta) = angle_between(&a, &b) else {
            continue;
        };
        let bin = ((theta / PI * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
        sum += theta;
        done += 1;
    }
    let total = n_pairs as f64;
    Ok(AngleHistogram {
        n,
        edges: (0..=bins).map(|i| PI * i as f64 / bins as f64).collect(),
        mass: counts.iter().map(|&c| c as f64 / total).collect(),
        mean: sum / total,
    })
}

/// `Σ_bins |p̂_bin − P_bin|`, with `P_bin` the exact mass of `p_n` on the bin.
pub fn histogram_l1_to_pdf(h: &AngleHistogram) -> Result<f64> {
    let mut l1 = 0.0;
    for (i, &m) in h.mass.iter().enumerate() {
        l1 += (m - angle_pdf_mass(h.n, h.edges[i], h.edges[i + 1])?).abs();
    }
    Ok(l1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_dimensional_closed_forms() {
        for t in [0.0, 0.3, PI / 2.0, 3.0] {
            assert!((angle_pdf(2, t).unwrap() - 1.0 / PI).abs() < 1e-15);
            assert!((angle_pdf(3, t).unwrap() - t.sin() / 2.0).abs() < 1e-14);
        }
        assert!(angle_pdf(1, 0.5).is_err());
        assert!(angle_pdf(3, 4.0).is_err());
    }

    #[test]
    fn uniform_variance() {
        let v = angle_variance(2).unwrap();
        assert!((v - PI * PI / 12.0).abs() < 1e-10);
    }

    #[test]
    fn self_angle_is_zero() {
        let v = [0.3, -1.2, 4.0];
        assert!(angle_between(&v, &v).unwrap().abs() < 1e-7);
        assert!(angle_between(&v, &[0.0; 3]).is_err());
    }

    #[test]
    fn quadrature_of_polynomial() {
        let q = adaptive_simpson(&|x| x * x * x, 0.0, 2.0, 1e-12);
        assert!((q - 4.0).abs() < 1e-12);
    }
}
