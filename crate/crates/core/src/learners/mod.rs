//! Synaptic update strategies.
//!
//! Every strategy wraps the same SGD step. Regularizers (EWC, SI, L2 Init)
//! add their penalty gradient to the task gradient before clipping; Shrink &
//! Perturb and the consolidations of EWC/SI run at task boundaries; CBP runs
//! after each update.

mod cbp;
mod checkpoint;
mod clip;
mod ewc;
mod l2init;
mod sgd;
mod shrink_perturb;
mod si;

use serde::{Deserialize, Serialize};

pub use cbp::{cbp_reinit, cbp_step, CbpConfig, CbpLayer, CbpState};
pub use checkpoint::{
    decode_experiment, encode_experiment, load_experiment, save_experiment, LEARNER_TAG,
};
pub use clip::{clip_gradients, ClipConfig};
pub use ewc::{diagonal_fisher, ewc_consolidate, ewc_penalty_and_grad, EwcState};
pub use l2init::{l2init_penalty_and_grad, L2InitState};
pub use sgd::{sgd_step, SgdConfig};
pub use shrink_perturb::{shrink_perturb_apply, ShrinkPerturbConfig};
pub use si::{si_accumulate_step, si_consolidate, si_penalty_and_grad, SiState};

use crate::error::{shape, Stage};
use crate::fly::{BatchTrace, FlyModel, GradientSet};
use crate::rng::{stream, substream, Rng};
use crate::tasks::Dataset;
use crate::Result;

/// Which update rule to use, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum StrategySpec {
    Sgd,
    Ewc { lambda: f64 },
    Si { c: f64, xi: f64 },
    L2Init { alpha: f64 },
    #[serde(rename = "sp")]
    ShrinkPerturb { shrink: f64, perturb: f64 },
    Cbp {
        decay: f64,
        replacement_rate: f64,
        maturity_threshold: u64,
    },
}

impl StrategySpec {
    pub fn name(&self) -> &'static str {
        match self {
            StrategySpec::Sgd => "sgd",
            StrategySpec::Ewc { .. } => "ewc",
            StrategySpec::Si { .. } => "si",
            StrategySpec::L2Init { .. } => "l2init",
            StrategySpec::ShrinkPerturb { .. } => "sp",
            StrategySpec::Cbp { .. } => "cbp",
        }
    }
}

/// Strategy state bound to one model.
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Sgd,
    Ewc(EwcState),
    Si(SiState),
    L2Init(L2InitState),
    ShrinkPerturb(ShrinkPerturbConfig),
    Cbp(CbpState),
}

/// What one optimizer step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub penalty: f64,
    pub clip_scale: f64,
    pub replaced: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub sgd: SgdConfig,
    pub clip: ClipConfig,
    pub rule: Rule,
    /// Cap on samples used for a Fisher estimate at a boundary.
    pub fisher_samples: Option<usize>,
    rng: Rng,
}

impl Learner {
    /// Binds a strategy to `model`, snapshotting whatever initial state the
    /// strategy needs. `seed` feeds the CBP reinitialization stream.
    pub fn new(
        strategy: &StrategySpec,
        sgd: SgdConfig,
        clip: ClipConfig,
        model: &FlyModel,
        seed: u64,
    ) -> Result<Self> {
        let params = model.params();
        let rule = match *strategy {
            StrategySpec::Sgd => Rule::Sgd,
            StrategySpec::Ewc { lambda } => Rule::Ewc(EwcState::new(lambda, params.len())),
            StrategySpec::Si { c, xi } => {
                if !(xi > 0.0) {
                    return Err(crate::Error::Config(format!("SI damping must be positive, got {xi}")));
                }
                Rule::Si(SiState::new(c, xi, params))
            }
            StrategySpec::L2Init { alpha } => Rule::L2Init(L2InitState::new(alpha, params)),
            StrategySpec::ShrinkPerturb { shrink, perturb } => {
                Rule::ShrinkPerturb(ShrinkPerturbConfig::new(shrink, perturb, params)?)
            }
            StrategySpec::Cbp {
                decay,
                replacement_rate,
                maturity_threshold,
            } => Rule::Cbp(CbpState::new(
                CbpConfig {
                    decay,
                    replacement_rate,
                    maturity_threshold,
                },
                model,
            )?),
        };
        Ok(Self {
            sgd,
            clip,
            rule,
            fisher_samples: None,
            rng: substream(seed, &[stream::CBP]),
        })
    }

    pub(crate) fn rng(&self) -> &Rng {
        &self.rng
    }

    pub(crate) fn from_parts(
        sgd: SgdConfig,
        clip: ClipConfig,
        rule: Rule,
        fisher_samples: Option<usize>,
        rng: Rng,
    ) -> Self {
        Self {
            sgd,
            clip,
            rule,
            fisher_samples,
            rng,
        }
    }

    /// One update from the task-loss gradient of a batch. `trace` is the
    /// forward pass that produced the gradient.
    pub fn step(
        &mut self,
        model: &mut FlyModel,
        task_grads: &GradientSet,
        trace: &BatchTrace,
    ) -> Result<StepInfo> {
        shape(Stage::Parameters, model.num_params(), task_grads.values.len())?;
        let mut total = task_grads.values.clone();
        let penalty = match &self.rule {
            Rule::Ewc(s) => s.add_penalty(model.params(), &mut total),
            Rule::Si(s) => s.add_penalty(model.params(), &mut total),
            Rule::L2Init(s) => s.add_penalty(model.params(), &mut total),
            _ => 0.0,
        };
        let clip_scale = clip_gradients(&mut total, &self.clip);
        let mut replaced = 0;
        match &mut self.rule {
            Rule::Si(state) => {
                let before = model.params().to_vec();
                sgd_step(model.params_mut(), &total, &self.sgd)?;
                let delta: Vec<f64> = model
                    .params()
                    .iter()
                    .zip(&before)
                    .map(|(a, b)| a - b)
                    .collect();
                let task: Vec<f64> = task_grads.values.iter().map(|g| g * clip_scale).collect();
                si_accumulate_step(state, &task, &delta);
            }
            Rule::Cbp(state) => {
                sgd_step(model.params_mut(), &total, &self.sgd)?;
                replaced = cbp_step(model, trace, state, &mut self.rng)?;
            }
            _ => sgd_step(model.params_mut(), &total, &self.sgd)?,
        }
        Ok(StepInfo {
            penalty,
            clip_scale,
            replaced,
        })
    }

    /// Task-boundary hook: EWC/SI consolidation or Shrink & Perturb.
    /// `mask` restricts the Fisher estimate to the classes seen so far.
    pub fn end_task(
        &mut self,
        model: &mut FlyModel,
        data: &Dataset,
        mask: Option<&[bool]>,
    ) -> Result<()> {
        match &mut self.rule {
            Rule::Ewc(state) => {
                let n = self.fisher_samples.map_or(data.len(), |c| c.min(data.len()));
                let rows = data.features().slice_move(ndarray::s![..n, ..]);
                ewc_consolidate(model, rows, mask, state)?;
            }
            Rule::Si(state) => si_consolidate(state, model.params()),
            Rule::ShrinkPerturb(cfg) => shrink_perturb_apply(model.params_mut(), cfg),
            _ => {}
        }
        Ok(())
    }
}
