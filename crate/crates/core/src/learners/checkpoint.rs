//! Experiment checkpoints: a FLYM model block followed by an `LRNR` section
//! with the learner's configuration, strategy state and RNG position.

use std::path::Path;

use rand_chacha::rand_core::SeedableRng;

use super::{
    CbpConfig, CbpLayer, CbpState, ClipConfig, EwcState, L2InitState, Learner, Rule, SgdConfig,
    ShrinkPerturbConfig, SiState,
};
use crate::codec::{put_f64s, write_atomic, ByteReader};
use crate::fly::checkpoint::{read_model, write_model};
use crate::fly::FlyModel;
use crate::rng::Rng;
use crate::Result;

pub const LEARNER_TAG: &[u8; 4] = b"LRNR";
const VERSION: u16 = 1;

fn put_vec(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
    put_f64s(out, v);
}

fn get_vec(r: &mut ByteReader<'_>, expected: usize, what: &str) -> Result<Vec<f64>> {
    let n = r.u64_le(what)?;
    if n != expected as u64 {
        return r.fail(format!("{what} has {n} entries, model has {expected} parameters"));
    }
    r.f64_vec(expected, what)
}

pub fn encode_experiment(model: &FlyModel, learner: &Learner) -> Vec<u8> {
    let mut out = Vec::new();
    write_model(&mut out, model);
    out.extend_from_slice(LEARNER_TAG);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&learner.sgd.learning_rate().to_le_bytes());
    match learner.clip.max_norm {
        Some(c) => {
            out.push(1);
            out.extend_from_slice(&c.to_le_bytes());
        }
        None => out.push(0),
    }
    match learner.fisher_samples {
        Some(n) => {
            out.push(1);
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        None => out.push(0),
    }
    match &learner.rule {
        Rule::Sgd => out.push(0),
        Rule::Ewc(s) => {
            out.push(1);
            out.extend_from_slice(&s.lambda.to_le_bytes());
            out.extend_from_slice(&(s.tasks_consolidated as u64).to_le_bytes());
            put_vec(&mut out, &s.fisher);
            put_vec(&mut out, &s.anchor);
        }
        Rule::Si(s) => {
            out.push(2);
            out.extend_from_slice(&s.c.to_le_bytes());
            out.extend_from_slice(&s.xi.to_le_bytes());
            put_vec(&mut out, &s.omega_running);
            put_vec(&mut out, &s.importance);
            put_vec(&mut out, &s.anchor);
            put_vec(&mut out, &s.task_start_params);
        }
        Rule::L2Init(s) => {
            out.push(3);
            out.extend_from_slice(&s.alpha.to_le_bytes());
            put_vec(&mut out, s.theta0());
        }
        Rule::ShrinkPerturb(s) => {
            out.push(4);
            out.extend_from_slice(&s.shrink.to_le_bytes());
            out.extend_from_slice(&s.perturb.to_le_bytes());
            put_vec(&mut out, s.w0());
        }
        Rule::Cbp(s) => {
            out.push(5);
            out.extend_from_slice(&s.config.decay.to_le_bytes());
            out.extend_from_slice(&s.config.replacement_rate.to_le_bytes());
            out.extend_from_slice(&s.config.maturity_threshold.to_le_bytes());
            out.extend_from_slice(&(s.layers.len() as u32).to_le_bytes());
            for layer in &s.layers {
                out.extend_from_slice(&(layer.utilities.len() as u32).to_le_bytes());
                put_f64s(&mut out, &layer.utilities);
                for a in &layer.ages {
                    out.extend_from_slice(&a.to_le_bytes());
                }
                out.extend_from_slice(&layer.pending.to_le_bytes());
            }
        }
    }
    let rng = learner.rng();
    out.extend_from_slice(&rng.get_seed());
    out.extend_from_slice(&rng.get_stream().to_le_bytes());
    out.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    out
}

pub fn decode_experiment(bytes: &[u8]) -> Result<(FlyModel, Learner)> {
    let mut r = ByteReader::new(bytes);
    let model = read_model(&mut r)?;
    let n = model.num_params();
    r.expect_tag(LEARNER_TAG)?;
    let version = r.u16_le("learner version")?;
    if version != VERSION {
        return r.fail(format!("unsupported LRNR version {version}"));
    }
    let lr = r.f64_le("learning rate")?;
    let sgd = SgdConfig::new(lr).or_else(|e| r.fail(e.to_string()))?;
    let clip = match r.u8("clip flag")? {
        0 => ClipConfig::disabled(),
        1 => {
            let c = r.f64_le("clip norm")?;
            ClipConfig::new(c).or_else(|e| r.fail(e.to_string()))?
        }
        other => return r.fail(format!("invalid clip flag {other}")),
    };
    let fisher_samples = match r.u8("fisher flag")? {
        0 => None,
        1 => Some(r.u64_le("fisher samples")? as usize),
        other => return r.fail(format!("invalid fisher flag {other}")),
    };
    let rule = match r.u8("strategy")? {
        0 => Rule::Sgd,
        1 => {
            let lambda = r.f64_le("lambda")?;
            let tasks_consolidated = r.u64_le("consolidated tasks")? as usize;
            let fisher = get_vec(&mut r, n, "fisher")?;
            let anchor = get_vec(&mut r, n, "anchor")?;
            Rule::Ewc(EwcState {
                lambda,
                fisher,
                anchor,
                tasks_consolidated,
            })
        }
        2 => {
            let c = r.f64_le("c")?;
            let xi = r.f64_le("xi")?;
            Rule::Si(SiState {
                c,
                xi,
                omega_running: get_vec(&mut r, n, "running omega")?,
                importance: get_vec(&mut r, n, "importance")?,
                anchor: get_vec(&mut r, n, "anchor")?,
                task_start_params: get_vec(&mut r, n, "task start")?,
            })
        }
        3 => {
            let alpha = r.f64_le("alpha")?;
            let theta0 = get_vec(&mut r, n, "theta0")?;
            Rule::L2Init(L2InitState::new(alpha, &theta0))
        }
        4 => {
            let shrink = r.f64_le("shrink")?;
            let perturb = r.f64_le("perturb")?;
            let w0 = get_vec(&mut r, n, "w0")?;
            let cfg = ShrinkPerturbConfig::new(shrink, perturb, &w0).or_else(|e| r.fail(e.to_string()))?;
            Rule::ShrinkPerturb(cfg)
        }
        5 => {
            let config = CbpConfig {
                decay: r.f64_le("decay")?,
                replacement_rate: r.f64_le("replacement rate")?,
                maturity_threshold: r.u64_le("maturity")?,
            };
            let n_layers = r.u32_le("CBP layer count")? as usize;
            if n_layers != model.n_pre_layers() {
                return r.fail(format!(
                    "CBP state has {n_layers} layers, model has {}",
                    model.n_pre_layers()
                ));
            }
            let mut layers = Vec::with_capacity(n_layers);
            for l in 0..n_layers {
                let width = r.u32_le("CBP width")? as usize;
                if width != model.spec().pre_layers[l].width {
                    return r.fail(format!("CBP layer {l} width {width} does not match the model"));
                }
                let utilities = r.f64_vec(width, "utilities")?;
                let mut ages = Vec::with_capacity(width);
                for _ in 0..width {
                    ages.push(r.u64_le("age")?);
                }
                let pending = r.f64_le("pending")?;
                layers.push(CbpLayer {
                    utilities,
                    ages,
                    pending,
                });
            }
            Rule::Cbp(CbpState { config, layers })
        }
        other => return r.fail(format!("unknown strategy code {other}")),
    };
    let seed: [u8; 32] = r.take(32, "rng seed")?.try_into().unwrap();
    let stream = r.u64_le("rng stream")?;
    let word_pos = u128::from_le_bytes(r.take(16, "rng position")?.try_into().unwrap());
    let mut rng = Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    if r.remaining() != 0 {
        return r.fail(format!("{} trailing bytes", r.remaining()));
    }
    Ok((model, Learner::from_parts(sgd, clip, rule, fisher_samples, rng)))
}

pub fn save_experiment(path: &Path, model: &FlyModel, learner: &Learner) -> Result<()> {
    write_atomic(path, &encode_experiment(model, learner))
}

pub fn load_experiment(path: &Path) -> Result<(FlyModel, Learner)> {
    decode_experiment(&std::fs::read(path)?)
}
