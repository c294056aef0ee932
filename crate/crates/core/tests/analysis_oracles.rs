use std::f64::consts::PI;

use flycl::analysis::{
    angle_pdf, angle_pdf_mass, angle_variance, birthday_argmax, birthday_probability,
    flops_report, gradient_angle, mean_value_check, rotation_sweep, sample_angle_histogram,
    Quadratic,
};
use ndarray::array;
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn exact_distinct(n: u64, r: u64, m: u64) -> f64 {
    let binom = |n: u64, k: u64| (0..k).fold(BigInt::from(1), |acc, i| acc * (n - i) / (i + 1));
    let big_r = binom(n, r);
    let mut p = BigRational::from_integer(BigInt::from(1));
    for i in 0..m {
        p *= BigRational::new(big_r.clone() - BigInt::from(i), big_r.clone());
    }
    let (num, den) = (p.numer().to_string(), p.denom().to_string());
    num.parse::<f64>().unwrap() / den.parse::<f64>().unwrap()
}

#[test]
fn birthday_matches_exact_rationals() {
    for (n, r) in [(4, 2), (5, 2), (6, 3), (7, 2), (9, 2)] {
        for m in 1..=8 {
            let got = birthday_probability(n, r, m).unwrap().p;
            assert!((got - exact_distinct(n, r, m)).abs() < 1e-12, "n={n} r={r} m={m}");
        }
    }
}

#[test]
fn birthday_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 200_000;
    let mut distinct = 0;
    for _ in 0..trials {
        let mut a = sample(&mut rng, 4, 2).into_vec();
        let mut b = sample(&mut rng, 4, 2).into_vec();
        a.sort_unstable();
        b.sort_unstable();
        distinct += usize::from(a != b);
    }
    let p = birthday_probability(4, 2, 2).unwrap().p;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((distinct as f64 / trials as f64 - p).abs() < 4.0 * sigma);
}

#[test]
fn birthday_shape() {
    assert_eq!(birthday_argmax(50, 2000).unwrap(), 25);
    for m in 1..30 {
        assert!(birthday_probability(10, 3, m + 1).unwrap().p < birthday_probability(10, 3, m).unwrap().p);
    }
    assert_eq!(birthday_probability(4, 2, 7).unwrap().p, 0.0);
    assert!(birthday_probability(4, 5, 1).is_err());
}

#[test]
fn angle_pdf_closed_forms() {
    for theta in [0.1, 1.0, 2.5] {
        assert!((angle_pdf(2, theta).unwrap() - 1.0 / PI).abs() < 1e-12);
        assert!((angle_pdf(3, theta).unwrap() - theta.sin() / 2.0).abs() < 1e-12);
    }
    assert!((angle_variance(2).unwrap() - PI * PI / 12.0).abs() < 1e-8);
    assert!(angle_variance(2000).unwrap() < 1e-3);
    for n in [2, 10, 100, 2000] {
        assert!((angle_pdf_mass(n, 0.0, PI).unwrap() - 1.0).abs() < 1e-6);
    }
    assert!(angle_pdf(1, 0.5).is_err());
}

#[test]
fn sampled_angles_center_on_right_angle() {
    let h = sample_angle_histogram(100, 20_000, 20, 1).unwrap();
    assert!((h.mean - PI / 2.0).abs() < 0.01);
}

#[test]
fn gradient_angle_is_scale_invariant() {
    let a = gradient_angle(&[0.2, -1.0, 3.0], &[1.0, 1.0, 0.5]).unwrap();
    let b = gradient_angle(&[0.6, -3.0, 9.0], &[0.01, 0.01, 0.005]).unwrap();
    assert!((a - b).abs() < 1e-10);
}

#[test]
fn flops_counts() {
    let f = flops_report(50, 2000, 6, 0.01, 10).unwrap();
    assert_eq!((f.dense_forward, f.fly_forward, f.head_update), (200_000, 12_000, 1_200));
    let edge = flops_report(50, 2000, 100, 0.01, 10);
    assert!(edge.is_err() || edge.unwrap().fly_forward == 200_000);
}

#[test]
fn mean_value_identity_on_quadratics() {
    let l1 = Quadratic::new(array![[3.0, 0.5], [0.5, 1.0]], array![0.2, -0.4]).unwrap();
    let lt = Quadratic::new(array![[1.0, 0.0], [0.0, 2.0]], array![1.0, 1.0]).unwrap();
    let w = array![0.7, 0.3];
    let check = mean_value_check(&l1, &lt, &w, 0.05, 1000).unwrap();
    assert!(check.residual < 1e-10);
    assert!((0.0..=1.0).contains(&check.xi));
    // For quadratics the identity holds at the midpoint.
    assert!((check.xi - 0.5).abs() < 1e-6);
    let sweep = rotation_sweep(1e-3, &[0.0, 30.0, 60.0, 89.0], 500).unwrap();
    let mags: Vec<f64> = sweep.iter().map(|p| p.check.loss_diff.abs()).collect();
    assert!(mags.windows(2).all(|w| w[1] < w[0]));
}
