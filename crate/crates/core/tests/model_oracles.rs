use flycl::fly::{
    active_count_for, decode_model, encode_model, masked_cross_entropy, top_k_code, Activation,
    CodingConfig, FlyModel, ModelSpec, PreLayerSpec, SparseBinaryProjection,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(pre: &[usize], ablate: bool, bias: bool) -> ModelSpec {
    ModelSpec {
        n_in: 9,
        pre_layers: pre
            .iter()
            .map(|&width| PreLayerSpec {
                width,
                activation: Activation::Relu,
            })
            .collect(),
        n_kc: 60,
        degree: 3,
        coding_level: 0.1,
        n_classes: 4,
        ablate_kc: ablate,
        head_bias: bias,
        seed: 11,
    }
}

fn batch(seed: u64, rows: usize, cols: usize) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0));
    let y = (0..rows).map(|i| i % 4).collect();
    (x, y)
}

fn loss(model: &FlyModel, x: &Array2<f64>, y: &[usize]) -> f64 {
    let t = model.forward_batch(x.view()).unwrap();
    masked_cross_entropy(t.logits.view(), y, None).unwrap().loss
}

/// Plain multilayer perceptron written against the flat parameter layout.
fn mlp_logits(model: &FlyModel, x: &[f64]) -> Vec<f64> {
    let s = model.spec();
    let p = model.params();
    let mut h = x.to_vec();
    let mut off = 0;
    for layer in &s.pre_layers {
        let (rows, cols) = (layer.width, h.len());
        let w = &p[off..off + rows * cols];
        let b = &p[off + rows * cols..off + rows * cols + rows];
        h = (0..rows)
            .map(|r| (b[r] + (0..cols).map(|c| w[r * cols + c] * h[c]).sum::<f64>()).max(0.0))
            .collect();
        off += rows * cols + rows;
    }
    let cols = h.len();
    let w = &p[off..off + s.n_classes * cols];
    let bias = if s.head_bias { Some(&p[off + s.n_classes * cols..]) } else { None };
    (0..s.n_classes)
        .map(|r| bias.map_or(0.0, |b| b[r]) + (0..cols).map(|c| w[r * cols + c] * h[c]).sum::<f64>())
        .collect()
}

#[test]
fn ablated_model_matches_dense_mlp() {
    for pre in [&[][..], &[7], &[7, 5]] {
        let model = FlyModel::new(spec(pre, true, true)).unwrap();
        let (x, _) = batch(1, 6, 9);
        let t = model.forward_batch(x.view()).unwrap();
        for (b, row) in x.rows().into_iter().enumerate() {
            let want = mlp_logits(&model, row.as_slice().unwrap());
            for (c, w) in want.iter().enumerate() {
                assert!((t.logits[[b, c]] - w).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn finite_differences_match_backprop() {
    for (pre, ablate) in [(&[][..], false), (&[8][..], false), (&[8, 6][..], false), (&[8][..], true)] {
        let model = FlyModel::new(spec(pre, ablate, false)).unwrap();
        let (x, y) = batch(2, 12, 9);
        let t = model.forward_batch(x.view()).unwrap();
        let l = masked_cross_entropy(t.logits.view(), &y, None).unwrap();
        let g = model.backward_batch(&t, l.dlogits.view()).unwrap();
        let h = 1e-6;
        let mut checked = 0;
        for i in 0..model.num_params() {
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let same_codes = |m: &FlyModel| {
                m.forward_batch(x.view()).unwrap().codes.map(|c| c.indices) == t.codes.as_ref().map(|c| c.indices.clone())
            };
            // A perturbation that flips a top-k winner crosses a kink; skip it.
            if !same_codes(&plus) || !same_codes(&minus) {
                continue;
            }
            let fd = (loss(&plus, &x, &y) - loss(&minus, &x, &y)) / (2.0 * h);
            let scale = fd.abs().max(g.values[i].abs());
            if scale > 1e-7 {
                assert!((fd - g.values[i]).abs() / scale < 1e-4, "param {i}: fd {fd} vs {}", g.values[i]);
            } else {
                assert!((fd - g.values[i]).abs() < 1e-8);
            }
            checked += 1;
        }
        assert!(checked > model.num_params() / 2);
    }
}

#[test]
fn full_coding_and_full_degree_is_all_ones_matrix() {
    let mut s = spec(&[], false, false);
    s.degree = s.n_in;
    s.coding_level = 1.0;
    let model = FlyModel::new(s).unwrap();
    let (x, _) = batch(3, 5, 9);
    let t = model.forward_batch(x.view()).unwrap();
    let p = model.params();
    for (b, row) in x.rows().into_iter().enumerate() {
        let total: f64 = row.sum();
        for c in 0..4 {
            let want: f64 = (0..60).map(|j| p[c * 60 + j] * total).sum();
            assert!((t.logits[[b, c]] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn head_gradient_only_on_active_columns() {
    let model = FlyModel::new(spec(&[8], false, false)).unwrap();
    let (x, y) = batch(4, 1, 9);
    let t = model.forward_batch(x.view()).unwrap();
    let l = masked_cross_entropy(t.logits.view(), &y, None).unwrap();
    let g = model.backward_batch(&t, l.dlogits.view()).unwrap();
    let active = t.codes.as_ref().unwrap().sample(0).0.to_vec();
    let head = model.layout().head_weight();
    for (i, v) in g.values[head.range()].iter().enumerate() {
        if !active.contains(&((i % head.cols) as u32)) {
            assert_eq!(*v, 0.0);
        }
    }
}

#[test]
fn projection_rows_are_distinct_and_fan_out_is_uniform() {
    let (n_in, n_out, r) = (50, 20_000, 6);
    let p = SparseBinaryProjection::build(n_in, n_out, r, 9).unwrap();
    for row in p.rows() {
        let mut v = row.to_vec();
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), r);
        assert!(v.iter().all(|&i| (i as usize) < n_in));
    }
    // Pearson chi-square against equal fan-out, 49 degrees of freedom.
    let expected = (n_out * r) as f64 / n_in as f64;
    let chi2: f64 = p.fan_out().iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 85.0, "chi-square {chi2}");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = FlyModel::new(spec(&[8, 6], false, true)).unwrap();
    let back = decode_model(&encode_model(&model)).unwrap();
    assert_eq!(back.spec(), model.spec());
    let a: Vec<u64> = model.params().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = back.params().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn top_k_support_is_exact(values in prop::collection::vec(-10.0f64..10.0, 1..300), k in 0.001f64..=1.0) {
        let m = values.len();
        let cfg = CodingConfig::new(k, m).unwrap();
        let (coded, active) = top_k_code(&values, &cfg);
        prop_assert_eq!(active.len(), active_count_for(k, m));
        let min_kept = active.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
        for i in 0..m {
            if !active.contains(&i) {
                prop_assert_eq!(coded[i], 0.0);
                prop_assert!(values[i] <= min_kept);
            }
        }
    }
}
