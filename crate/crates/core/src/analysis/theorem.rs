//! Mean-value check for how much one SGD step on a later task changes an
//! earlier task's loss:
//!
//! `L₁(w) − L₁(w') = η ⟨∇L₁(w − ξ η ∇L_t(w)), ∇L_t(w)⟩` for some `ξ ∈ [0, 1]`,
//! where `w' = w − η ∇L_t(w)`. The more orthogonal the two gradients, the
//! less the earlier loss moves.

use ndarray::{Array1, Array2};

use crate::{Error, Result};

/// `L(w) = ½ (w − c)ᵀ H (w − c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub h: Array2<f64>,
    pub center: Array1<f64>,
}

impl Quadratic {
    pub fn new(h: Array2<f64>, center: Array1<f64>) -> Result<Self> {
        if h.nrows() != h.ncols() || h.nrows() != center.len() {
            return Err(Error::Domain("Hessian must be square and match the center".into()));
        }
        Ok(Self { h, center })
    }

    pub fn value(&self, w: &Array1<f64>) -> f64 {
        let d = w - &self.center;
        0.5 * d.dot(&self.h.dot(&d))
    }

    pub fn grad(&self, w: &Array1<f64>) -> Array1<f64> {
        self.h.dot(&(w - &self.center))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanValueCheck {
    pub xi: f64,
    /// `|L₁(w) − L₁(w') − η⟨∇L₁(w − ξη g_t), g_t⟩|` at the chosen `ξ`.
    pub residual: f64,
    /// `L₁(w) − L₁(w')`.
    pub loss_diff: f64,
    /// `⟨∇L₁(w), ∇L_t(w)⟩`.
    pub inner: f64,
}

/// Scans `ξ` on a grid of `grid + 1` points, then bisects any sign change of
/// the residual next to the best grid point.
pub fn mean_value_check(
    l1: &Quadratic,
    lt: &Quadratic,
    w: &Array1<f64>,
    eta: f64,
    grid: usize,
) -> Result<MeanValueCheck> {
    if grid == 0 || !(eta > 0.0) {
        return Err(Error::Domain("need a positive step and a non-empty grid".into()));
    }
    let gt = lt.grad(w);
    let w_next = w - &(eta * &gt);
    let loss_diff = l1.value(w) - l1.value(&w_next);
    let signed = |xi: f64| {
        let probe = w - &(xi * eta * &gt);
        loss_diff - eta * l1.grad(&probe).dot(&gt)
    };
    let xs: Vec<f64> = (0..=grid).map(|j| j as f64 / grid as f64).collect();
    let rs: Vec<f64> = xs.iter().map(|&x| signed(x)).collect();
    let best = (0..xs.len())
        .min_by(|&a, &b| rs[a].abs().total_cmp(&rs[b].abs()))
        .expect("grid is non-empty");
    let mut xi = xs[best];
    let mut residual = rs[best].abs();
    for j in [best.saturating_sub(1), best] {
        if j + 1 < xs.len() && rs[j].signum() != rs[j + 1].signum() {
            let (mut lo, mut hi, mut flo) = (xs[j], xs[j + 1], rs[j]);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let fm = signed(mid);
                if fm.abs() < residual {
                    xi = mid;
                    residual = fm.abs();
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
        }
    }
    Ok(MeanValueCheck {
        xi,
        residual,
        loss_diff,
        inner: l1.grad(w).dot(&gt),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationPoint {
    pub angle_deg: f64,
    pub check: MeanValueCheck,
}

/// Two-task toy in the plane: `L₁` has Hessian `diag(2, 1)` centered at the
/// origin; at `w = (1, 1)` the later task's gradient is `∇L₁(w)` rotated by
/// each angle in turn (the later task is an isotropic bowl placed to produce
/// exactly that gradient).
pub fn rotation_sweep(eta: f64, angles_deg: &[f64], grid: usize) -> Result<Vec<RotationPoint>> {
    let l1 = Quadratic::new(
        ndarray::array![[2.0, 0.0], [0.0, 1.0]],
        ndarray::array![0.0, 0.0],
    )?;
    let w = ndarray::array![1.0, 1.0];
    let g1 = l1.grad(&w);
    angles_deg
        .iter()
        .map(|&deg| {
            let (s, c) = deg.to_radians().sin_cos();
            let gt = ndarray::array![c * g1[0] - s * g1[1], s * g1[0] + c * g1[1]];
            let lt = Quadratic::new(Array2::eye(2), &w - &gt)?;
            Ok(RotationPoint {
                angle_deg: deg,
                check: mean_value_check(&l1, &lt, &w, eta, grid)?,
            })
        })
        .collect()
}
