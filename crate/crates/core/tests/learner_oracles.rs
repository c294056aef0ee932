use flycl::fly::{masked_cross_entropy, Activation, FlyModel, ModelSpec, PreLayerSpec};
use flycl::learners::{
    decode_experiment, diagonal_fisher, encode_experiment, ClipConfig, Learner, SgdConfig,
    StrategySpec,
};
use flycl::tasks::Dataset;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model() -> FlyModel {
    FlyModel::new(ModelSpec {
        n_in: 6,
        pre_layers: vec![PreLayerSpec {
            width: 5,
            activation: Activation::Relu,
        }],
        n_kc: 40,
        degree: 2,
        coding_level: 0.1,
        n_classes: 3,
        ablate_kc: false,
        head_bias: false,
        seed: 3,
    })
    .unwrap()
}

fn data(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((24, 6), |_| rng.gen_range(0.0..1.0));
    Dataset::new(x, (0..24).map(|i| i % 3).collect(), 3).unwrap()
}

/// Runs `tasks` tasks of `steps` full-batch steps and returns the final
/// parameters together with the learner.
fn train(strategy: &StrategySpec, tasks: usize, steps: usize) -> (FlyModel, Learner) {
    let mut m = model();
    let mut l = Learner::new(strategy, SgdConfig::new(0.2).unwrap(), ClipConfig::disabled(), &m, 9).unwrap();
    for t in 0..tasks {
        let d = data(t as u64);
        for _ in 0..steps {
            let trace = m.forward_batch(d.features()).unwrap();
            let loss = masked_cross_entropy(trace.logits.view(), d.labels(), None).unwrap();
            let g = m.backward_batch(&trace, loss.dlogits.view()).unwrap();
            l.step(&mut m, &g, &trace).unwrap();
        }
        l.end_task(&mut m, &d, None).unwrap();
    }
    (m, l)
}

fn bits(m: &FlyModel) -> Vec<u64> {
    m.params().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn zero_coefficients_reproduce_sgd_exactly() {
    let (reference, _) = train(&StrategySpec::Sgd, 3, 17);
    for s in [
        StrategySpec::Ewc { lambda: 0.0 },
        StrategySpec::Si { c: 0.0, xi: 1e-3 },
        StrategySpec::L2Init { alpha: 0.0 },
        StrategySpec::ShrinkPerturb { shrink: 0.0, perturb: 0.0 },
        StrategySpec::Cbp { decay: 0.99, replacement_rate: 0.0, maturity_threshold: 5 },
    ] {
        let (m, _) = train(&s, 3, 17);
        assert_eq!(bits(&m), bits(&reference), "{}", s.name());
    }
}

#[test]
fn regularizers_pull_toward_their_anchor() {
    let (sgd, _) = train(&StrategySpec::Sgd, 2, 30);
    let (ewc, _) = train(&StrategySpec::Ewc { lambda: 10.0 }, 2, 30);
    let (l2, _) = train(&StrategySpec::L2Init { alpha: 1.0 }, 2, 30);
    let (first, _) = train(&StrategySpec::Sgd, 1, 30);
    let init = model();
    let dist = |a: &FlyModel, b: &FlyModel| -> f64 {
        a.params().iter().zip(b.params()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    assert!(dist(&ewc, &first) < dist(&sgd, &first));
    assert!(dist(&l2, &init) < dist(&sgd, &init));
}

/// Fisher by explicit enumeration: one sample, one class at a time.
#[test]
fn fisher_matches_per_sample_enumeration() {
    let m = model();
    let d = data(7);
    let got = diagonal_fisher(&m, d.features(), None).unwrap();
    let mut want = vec![0.0; m.num_params()];
    for i in 0..d.len() {
        let x = d.features().slice(ndarray::s![i..i + 1, ..]).to_owned();
        let trace = m.forward_batch(x.view()).unwrap();
        let logits = trace.logits.row(0).to_vec();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
        for y in 0..3 {
            let p = (logits[y] - max).exp() / z;
            let loss = masked_cross_entropy(trace.logits.view(), &[y], None).unwrap();
            let g = m.backward_batch(&trace, loss.dlogits.view()).unwrap();
            for (w, gv) in want.iter_mut().zip(&g.values) {
                *w += p * gv * gv / d.len() as f64;
            }
        }
    }
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12), "{a} vs {b}");
    }
}

#[test]
fn experiment_checkpoint_round_trip() {
    for s in [
        StrategySpec::Sgd,
        StrategySpec::Ewc { lambda: 2.0 },
        StrategySpec::Si { c: 0.5, xi: 1e-3 },
        StrategySpec::L2Init { alpha: 0.1 },
        StrategySpec::ShrinkPerturb { shrink: 0.1, perturb: 0.01 },
        StrategySpec::Cbp { decay: 0.9, replacement_rate: 0.05, maturity_threshold: 2 },
    ] {
        let (m, l) = train(&s, 2, 5);
        let bytes = encode_experiment(&m, &l);
        let (m2, l2) = decode_experiment(&bytes).unwrap();
        assert_eq!(bits(&m2), bits(&m));
        assert_eq!(l2, l);
        assert_eq!(encode_experiment(&m2, &l2), bytes);
        let mut truncated = bytes.clone();
        truncated.pop();
        assert!(decode_experiment(&truncated).is_err());
    }
}

#[test]
fn clipping_bounds_the_step() {
    let mut m = model();
    let before = m.params().to_vec();
    let mut l = Learner::new(&StrategySpec::Sgd, SgdConfig::new(1.0).unwrap(), ClipConfig::new(0.01).unwrap(), &m, 1).unwrap();
    let d = data(1);
    let trace = m.forward_batch(d.features()).unwrap();
    let loss = masked_cross_entropy(trace.logits.view(), d.labels(), None).unwrap();
    let g = m.backward_batch(&trace, loss.dlogits.view()).unwrap();
    l.step(&mut m, &g, &trace).unwrap();
    let step: f64 = m.params().iter().zip(&before).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(step <= 0.01 + 1e-12);
}
