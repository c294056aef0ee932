use std::cmp::Ordering;

use crate::fly::{BatchTrace, FlyModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbpConfig {
    /// Utility decay η_u in [0, 1).
    pub decay: f64,
    /// Expected reinitializations per eligible neuron per step.
    pub replacement_rate: f64,
    /// Minimum age, in steps, before a neuron may be replaced.
    pub maturity_threshold: u64,
}

impl Default for CbpConfig {
    fn default() -> Self {
        Self {
            decay: 0.99,
            replacement_rate: 1e-4,
            maturity_threshold: 100,
        }
    }
}

/// Utilities and ages of one hidden population.
#[derive(Debug, Clone, PartialEq)]
pub struct CbpLayer {
    pub utilities: Vec<f64>,
    pub ages: Vec<u64>,
    /// Fractional replacements carried over between steps.
    pub pending: f64,
}

/// Continual backprop state over every dense pre-layer of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct CbpState {
    pub config: CbpConfig,
    pub layers: Vec<CbpLayer>,
}

impl CbpState {
    pub fn new(config: CbpConfig, model: &FlyModel) -> Result<Self> {
        if model.n_pre_layers() == 0 {
            return Err(Error::NotApplicable(
                "continual backprop needs at least one hidden pre-layer".into(),
            ));
        }
        if !(0.0..1.0).contains(&config.decay) {
            return Err(Error::Config(format!(
                "CBP decay must lie in [0, 1), got {}",
                config.decay
            )));
        }
        if !(config.replacement_rate >= 0.0) {
            return Err(Error::Config("CBP replacement rate must be nonnegative".into()));
        }
        let layers = model
            .spec()
            .pre_layers
            .iter()
            .map(|l| CbpLayer {
                utilities: vec![0.0; l.width],
                ages: vec![0; l.width],
                pending: 0.0,
            })
            .collect();
        Ok(Self { config, layers })
    }
}

/// Replaces neuron `i` of pre-layer `l`: fresh incoming weights, zero bias,
/// zero outgoing weights (when they are trainable), zero utility and age.
pub fn cbp_reinit(
    model: &mut FlyModel,
    state: &mut CbpState,
    l: usize,
    i: usize,
    rng: &mut impl rand::Rng,
) {
    model.reinit_pre_neuron(l, i, rng);
    model.zero_outgoing(l, i);
    state.layers[l].utilities[i] = 0.0;
    state.layers[l].ages[i] = 0;
}

/// One continual-backprop step after a parameter update. `trace` holds the
/// activations of the step's batch; `|h|` is their batch mean.
///
/// Returns how many neurons were replaced.
pub fn cbp_step(
    model: &mut FlyModel,
    trace: &BatchTrace,
    state: &mut CbpState,
    rng: &mut impl rand::Rng,
) -> Result<usize> {
    if state.layers.len() != model.n_pre_layers() || trace.pre_outputs.len() != state.layers.len()
    {
        return Err(Error::NotApplicable(
            "CBP state does not match the model's hidden layers".into(),
        ));
    }
    let eta = state.config.decay;
    let n = trace.batch().max(1) as f64;
    let mut replaced = 0;
    for l in 0..state.layers.len() {
        let mass = model.outgoing_weight_mass(l);
        let acts = &trace.pre_outputs[l];
        {
            let layer = &mut state.layers[l];
            for (i, (u, age)) in layer.utilities.iter_mut().zip(&mut layer.ages).enumerate() {
                let h = acts.column(i).iter().map(|v| v.abs()).sum::<f64>() / n;
                *u = eta * *u + (1.0 - eta) * h * mass[i];
                *age += 1;
            }
        }
        if state.config.replacement_rate == 0.0 {
            continue;
        }
        let layer = &mut state.layers[l];
        let mut eligible: Vec<usize> = (0..layer.ages.len())
            .filter(|&i| layer.ages[i] >= state.config.maturity_threshold)
            .collect();
        layer.pending += state.config.replacement_rate * eligible.len() as f64;
        let count = (layer.pending.floor() as usize).min(eligible.len());
        if count == 0 {
            continue;
        }
        layer.pending -= count as f64;
        let u = &layer.utilities;
        eligible.sort_by(|&a, &b| u[a].partial_cmp(&u[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        for &i in &eligible[..count] {
            cbp_reinit(model, state, l, i, rng);
        }
        replaced += count;
    }
    Ok(replaced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fly::{Activation, ModelSpec, PreLayerSpec};
    use crate::rng::substream;
    use ndarray::Array2;

    fn model(ablate: bool) -> FlyModel {
        FlyModel::new(ModelSpec {
            n_in: 4,
            pre_layers: vec![
                PreLayerSpec {
                    width: 6,
                    activation: Activation::Relu,
                },
                PreLayerSpec {
                    width: 5,
                    activation: Activation::Relu,
                },
            ],
            n_kc: 20,
            degree: 2,
            coding_level: 0.2,
            n_classes: 3,
            ablate_kc: ablate,
            head_bias: false,
            seed: 9,
        })
        .unwrap()
    }

    #[test]
    fn utility_update_formula() {
        let m = model(true);
        let mut state = CbpState::new(
            CbpConfig {
                decay: 0.9,
                replacement_rate: 0.0,
                maturity_threshold: 0,
            },
            &m,
        )
        .unwrap();
        state.layers[0].utilities[0] = 1.0;
        let mass = m.outgoing_weight_mass(0)[0];
        let x = Array2::from_shape_fn((3, 4), |(b, j)| 0.2 * (b + j) as f64);
        let trace = m.forward_batch(x.view()).unwrap();
        let h = trace.pre_outputs[0].column(0).iter().map(|v| v.abs()).sum::<f64>() / 3.0;
        let mut mm = m.clone();
        cbp_step(&mut mm, &trace, &mut state, &mut substream(0, &[])).unwrap();
        let expected = 0.9 * 1.0 + 0.1 * h * mass;
        assert!((state.layers[0].utilities[0] - expected).abs() < 1e-15);
        assert_eq!(mm, m, "rate 0 must leave the model untouched");
    }

    #[test]
    fn reinit_zeroes_outgoing_and_age() {
        let mut m = model(true);
        let mut state = CbpState::new(CbpConfig::default(), &m).unwrap();
        state.layers[1].ages[2] = 500;
        state.layers[1].utilities[2] = 3.0;
        cbp_reinit(&mut m, &mut state, 1, 2, &mut substream(1, &[]));
        let head = m.head().weights;
        assert!(head.column(2).iter().all(|&w| w == 0.0));
        assert_eq!(state.layers[1].ages[2], 0);
        assert_eq!(state.layers[1].utilities[2], 0.0);
        let mut m2 = model(true);
        cbp_reinit(&mut m2, &mut state, 0, 3, &mut substream(1, &[]));
        assert!(m2.pre_layer(1).weights.column(3).iter().all(|&w| w == 0.0));
    }

    #[test]
    fn frozen_projection_counts_as_unit_weights() {
        let m = model(false);
        let fan = m.projection().unwrap().fan_out();
        let mass = m.outgoing_weight_mass(1);
        assert_eq!(mass, fan.iter().map(|&c| c as f64).collect::<Vec<_>>());
    }

    #[test]
    fn replaces_lowest_utility_mature_neurons() {
        let m0 = model(true);
        let mut m = m0.clone();
        let mut state = CbpState::new(
            CbpConfig {
                decay: 0.0,
                replacement_rate: 0.5,
                maturity_threshold: 1,
            },
            &m,
        )
        .unwrap();
        let x = Array2::from_shape_fn((4, 4), |(b, j)| 0.3 * (b * 2 + j) as f64 - 0.5);
        let trace = m.forward_batch(x.view()).unwrap();
        let replaced = cbp_step(&mut m, &trace, &mut state, &mut substream(2, &[])).unwrap();
        // 6 eligible neurons × 0.5 = 3, plus 5 × 0.5 = 2.5 → 2.
        assert_eq!(replaced, 5);
        assert_eq!(m.num_params(), m0.num_params());
    }

    #[test]
    fn needs_hidden_layers() {
        let m = FlyModel::new(ModelSpec {
            n_in: 4,
            pre_layers: vec![],
            n_kc: 20,
            degree: 2,
            coding_level: 0.2,
            n_classes: 3,
            ablate_kc: false,
            head_bias: false,
            seed: 9,
        })
        .unwrap();
        assert!(matches!(
            CbpState::new(CbpConfig::default(), &m),
            Err(Error::NotApplicable(_))
        ));
    }
}
