//! Synthetic handwritten-style digits: 28×28 grayscale renderings of stroke
//! templates under random affine distortion, stroke width and vertex jitter.
//! A stand-in for MNIST when the real files are not available.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::rng::{stream, substream, Rng};
use crate::{Error, Result};

pub const SIDE: usize = 28;
const BOX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DigitsConfig {
    pub n_per_class: usize,
    pub seed: u64,
}

type Stroke = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64, steps: usize) -> Stroke {
    (0..=steps)
        .map(|i| {
            let a = from + (to - from) * i as f64 / steps as f64;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

/// Strokes in a unit box, x to the right and y downward.
fn template(digit: usize) -> Vec<Stroke> {
    use std::f64::consts::PI;
    match digit {
        0 => vec![ellipse(0.5, 0.5, 0.3, 0.42, 0.0, 2.0 * PI, 20)],
        1 => vec![vec![(0.32, 0.25), (0.52, 0.08), (0.52, 0.92)]],
        2 => {
            let mut s = ellipse(0.5, 0.3, 0.28, 0.2, PI, 2.1 * PI, 10);
            s.extend([(0.2, 0.9), (0.82, 0.9)]);
            vec![s]
        }
        3 => vec![
            ellipse(0.48, 0.3, 0.27, 0.2, -0.9 * PI, 0.5 * PI, 10),
            ellipse(0.48, 0.7, 0.3, 0.2, -0.5 * PI, 0.9 * PI, 10),
        ],
        4 => vec![vec![(0.66, 0.92), (0.66, 0.08), (0.18, 0.66), (0.84, 0.66)]],
        5 => {
            let mut s = vec![(0.78, 0.1), (0.3, 0.1), (0.26, 0.46)];
            s.extend(ellipse(0.48, 0.66, 0.3, 0.23, -0.75 * PI, 0.85 * PI, 12));
            vec![s]
        }
        6 => vec![
            vec![(0.72, 0.1), (0.42, 0.3), (0.24, 0.66)],
            ellipse(0.5, 0.68, 0.26, 0.22, 0.0, 2.0 * PI, 16),
        ],
        7 => vec![vec![(0.18, 0.1), (0.82, 0.1), (0.42, 0.92)]],
        8 => vec![
            ellipse(0.5, 0.28, 0.22, 0.19, 0.0, 2.0 * PI, 14),
            ellipse(0.5, 0.7, 0.28, 0.22, 0.0, 2.0 * PI, 16),
        ],
        9 => vec![
            ellipse(0.5, 0.32, 0.26, 0.22, 0.0, 2.0 * PI, 16),
            vec![(0.76, 0.32), (0.66, 0.92)],
        ],
        _ => unreachable!("digits are 0..10"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn render(digit: usize, rng: &mut Rng, out: &mut [f64]) {
    let jitter = Normal::new(0.0, 0.02).unwrap();
    let angle = rng.gen_range(-0.26..0.26f64);
    let shear = rng.gen_range(-0.25..0.25);
    let (sx, sy) = (rng.gen_range(0.75..1.1), rng.gen_range(0.8..1.1));
    let (tx, ty) = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
    let width = rng.gen_range(0.035..0.08);
    let (c, s) = (angle.cos(), angle.sin());
    let strokes: Vec<Stroke> = template(digit)
        .into_iter()
        .map(|stroke| {
            stroke
                .into_iter()
                .map(|(x, y)| {
                    let (x, y) = (x - 0.5 + jitter.sample(rng), y - 0.5 + jitter.sample(rng));
                    let (x, y) = (sx * (x + shear * y), sy * y);
                    (c * x - s * y + 0.5 + tx, s * x + c * y + 0.5 + ty)
                })
                .collect()
        })
        .collect();
    let margin = (SIDE as f64 - BOX) / 2.0;
    let soft = 0.6 / BOX;
    for py in 0..SIDE {
        for px in 0..SIDE {
            let p = ((px as f64 + 0.5 - margin) / BOX, (py as f64 + 0.5 - margin) / BOX);
            let d = strokes
                .iter()
                .flat_map(|st| st.windows(2).map(|w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let v = (1.0 - (d - width) / soft).clamp(0.0, 1.0);
            out[py * SIDE + px] = (v * 255.0).round() / 255.0;
        }
    }
}

/// `10 · n_per_class` images; sample `i` shows digit `i mod 10`.
pub fn gen_digits(cfg: &DigitsConfig) -> Result<Dataset> {
    if cfg.n_per_class == 0 {
        return Err(Error::Config("digit count per class must be positive".into()));
    }
    let n = cfg.n_per_class * 10;
    let mut rng = substream(cfg.seed, &[stream::DATA, 3]);
    let mut features = Array2::zeros((n, SIDE * SIDE));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        render(i % 10, &mut rng, row.as_slice_mut().expect("standard layout"));
    }
    Dataset::new(features, (0..n).map(|i| i % 10).collect(), 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_range() {
        let d = gen_digits(&DigitsConfig {
            n_per_class: 3,
            seed: 1,
        })
        .unwrap();
        assert_eq!(d.features().dim(), (30, 784));
        assert!(d.features().iter().all(|&v| (0.0..=1.0).contains(&v)));
        for row in d.features().rows() {
            let ink: f64 = row.sum();
            assert!(ink > 20.0 && ink < 400.0, "ink {ink}");
        }
        assert_eq!(d.class_counts(), vec![3; 10]);
    }

    #[test]
    fn class_means_differ() {
        let d = gen_digits(&DigitsConfig {
            n_per_class: 20,
            seed: 2,
        })
        .unwrap();
        let m1 = d.filter_classes(&[1]).features().mean_axis(ndarray::Axis(0)).unwrap();
        let m0 = d.filter_classes(&[0]).features().mean_axis(ndarray::Axis(0)).unwrap();
        let dist: f64 = (&m1 - &m0).mapv(|v| v * v).sum();
        assert!(dist > 5.0);
    }
}
