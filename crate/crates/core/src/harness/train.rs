//! Training loops: class-incremental runs, scratch baselines and
//! prequential streaming runs.

use std::time::Instant;

use ndarray::{s, Axis};
use rand::seq::{index, SliceRandom};

use super::config::{DatasetKind, ExperimentConfig, ProtocolKind};
use super::ledger::{Diagnostics, MetricsLedger};
use crate::analysis::{task_optima_gradient_angle, OptimumSnapshot};
use crate::fly::{masked_cross_entropy, predict, FlyModel};
use crate::learners::Learner;
use crate::metrics::{self, DEFAULT_DELTA};
use crate::rng::{derive_seed, stream, substream};
use crate::tasks::{
    apply_imbalance, class_mask, gen_digits, gen_odor_dataset, load_feature_file, load_idx,
    split_cil, ClassOrder, Dataset, DigitsConfig, OdorConfig, PermutationSpec, PermutedStream,
    TaskSource, TaskStream,
};
use crate::{Error, Result};

/// Evaluation batch size; evaluation is pure, so this only affects speed.
pub const EVAL_BATCH: usize = 512;

/// Scratch-baseline shuffles are keyed by the task's classes rather than its
/// position, so a baseline does not depend on where its task sits.
const SCRATCH_TAG: u64 = 0x5C4A_7C11;

/// Fraction of `data` classified correctly, predictions restricted to `mask`.
pub fn evaluate(model: &FlyModel, data: &Dataset, mask: Option<&[bool]>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData("evaluation set is empty".into()));
    }
    let x = data.features();
    let mut correct = 0usize;
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_BATCH).min(data.len());
        let trace = model.forward_batch(x.slice(s![start..end, ..]))?;
        for (row, &y) in trace.logits.rows().into_iter().zip(&data.labels()[start..end]) {
            if predict(row.as_slice().expect("row"), mask) == y {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains on `data` for `epochs` epochs, reshuffling each epoch from the
/// substream `tags ++ [epoch]`. Logits outside `mask` are excluded from the
/// loss.
#[allow(clippy::too_many_arguments)]
pub fn train_task(
    model: &mut FlyModel,
    learner: &mut Learner,
    data: &Dataset,
    mask: Option<&[bool]>,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    tags: &[u64],
    task: usize,
) -> Result<()> {
    let x = data.features();
    let mut step = 0;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut t = tags.to_vec();
        t.push(epoch as u64);
        order.shuffle(&mut substream(seed, &t));
        for rows in order.chunks(batch_size) {
            let xb = x.select(Axis(0), rows);
            let yb: Vec<usize> = rows.iter().map(|&r| data.labels()[r]).collect();
            let trace = model.forward_batch(xb.view())?;
            let loss = masked_cross_entropy(trace.logits.view(), &yb, mask)?;
            if !loss.loss.is_finite() {
                return Err(Error::NonFinite { task, step });
            }
            let grads = model.backward_batch(&trace, loss.dlogits.view())?;
            learner.step(model, &grads, &trace)?;
            step += 1;
        }
    }
    Ok(())
}

/// Weight magnitudes always; activity-based diagnostics when a probe is
/// given; stable rank when the model has a pre-layer.
pub fn diagnostics(model: &FlyModel, probe: Option<&Dataset>) -> Result<Diagnostics> {
    let mut weights = Vec::new();
    for seg in model.layout().segments() {
        if seg.is_weight() {
            weights.extend_from_slice(&model.params()[seg.range()]);
        }
    }
    let head = model.layout().head_weight();
    let mut d = Diagnostics {
        weight_mag: metrics::avg_weight_magnitude(&weights)?,
        head_weight_mag: metrics::avg_weight_magnitude(&model.params()[head.range()])?,
        stable_rank: model
            .last_pre_weights()
            .and_then(|w| metrics::stable_rank(w, DEFAULT_DELTA).ok()),
        ..Diagnostics::default()
    };
    if let Some(probe) = probe.filter(|p| !p.is_empty()) {
        const CHUNK: usize = 100;
        let x = probe.features();
        let n = probe.len() as f64;
        let (mut pre, mut kc): (Vec<f64>, Option<Vec<f64>>) = (Vec::new(), None);
        let mut start = 0;
        while start < probe.len() {
            let end = (start + CHUNK).min(probe.len());
            let trace = model.forward_batch(x.slice(s![start..end, ..]))?;
            let (p, k) = model.mean_abs_activity(&trace);
            let w = (end - start) as f64 / n;
            if pre.is_empty() {
                pre = vec![0.0; p.len()];
            }
            for (a, v) in pre.iter_mut().zip(&p) {
                *a += w * v;
            }
            if let Some(k) = k {
                let acc = kc.get_or_insert_with(|| vec![0.0; k.len()]);
                for (a, v) in acc.iter_mut().zip(&k) {
                    *a += w * v;
                }
            }
            start = end;
        }
        d.dormant = metrics::dormant_fraction(&pre, DEFAULT_DELTA).ok();
        d.dormant_kc = kc.and_then(|k| metrics::dormant_fraction(&k, DEFAULT_DELTA).ok());
    }
    Ok(d)
}

fn check_dim(cfg: &ExperimentConfig, dim: usize) -> Result<()> {
    if dim != cfg.pn {
        return Err(Error::Config(format!(
            "data has {dim} features but pn = {}",
            cfg.pn
        )));
    }
    Ok(())
}

/// Train and test sets for a class-incremental run.
pub fn load_cil_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = match cfg.dataset {
        DatasetKind::Odor => {
            let d = gen_odor_dataset(&OdorConfig {
                n_dims: cfg.pn,
                n_classes: cfg.n_classes,
                noise_sigma: cfg.noise,
                train_per_class: cfg.train_per_class,
                test_per_class: cfg.test_per_class,
                seed,
            })?;
            (d.train, d.test)
        }
        DatasetKind::Digits => (
            gen_digits(&DigitsConfig {
                n_per_class: cfg.train_per_class,
                seed,
            })?,
            gen_digits(&DigitsConfig {
                n_per_class: cfg.test_per_class,
                seed: derive_seed(seed, &[stream::DATA, 11]),
            })?,
        ),
        DatasetKind::Features => {
            let (Some(tr), Some(te)) = (&cfg.train_file, &cfg.test_file) else {
                return Err(Error::Config("features need `train_file` and `test_file`".into()));
            };
            (load_feature_file(tr)?, load_feature_file(te)?)
        }
        DatasetKind::Idx => {
            return Err(Error::Config(
                "IDX input has no test split; convert it with ingest-idx and use `features`".into(),
            ))
        }
    };
    check_dim(cfg, train.dim())?;
    let train = match cfg.imbalance_spec(train.class_counts().into_iter().max().unwrap_or(0), seed) {
        Some(spec) => apply_imbalance(&train, &spec)?,
        None => train,
    };
    Ok((train, test))
}

pub fn build_cil_stream(cfg: &ExperimentConfig, seed: u64) -> Result<TaskStream> {
    let (train, test) = load_cil_data(cfg, seed)?;
    let order = if cfg.shuffle_classes {
        ClassOrder::Shuffled(seed)
    } else {
        ClassOrder::Natural
    };
    split_cil(&train, &test, cfg.classes_per_task, order, cfg.batch_size, cfg.epochs)
}

pub fn new_model_and_learner(cfg: &ExperimentConfig, n_classes: usize, seed: u64) -> Result<(FlyModel, Learner)> {
    let model = FlyModel::new(cfg.model_spec(n_classes, seed))?;
    let mut learner = Learner::new(&cfg.strategy, cfg.sgd_config()?, cfg.clip_config()?, &model, seed)?;
    learner.fisher_samples = cfg.fisher_samples;
    Ok((model, learner))
}

fn probe_set(data: &Dataset, size: usize, seed: u64) -> Dataset {
    let n = size.min(data.len());
    let mut rng = substream(seed, &[stream::PROBE]);
    let mut rows = index::sample(&mut rng, data.len(), n).into_vec();
    rows.sort_unstable();
    data.select(&rows)
}

/// A finished class-incremental run with the final model and the parameter
/// snapshots at the end of the first and last tasks.
#[derive(Debug, Clone)]
pub struct CilRun {
    pub ledger: MetricsLedger,
    pub model: FlyModel,
    pub stream: TaskStream,
    pub first_optimum: Option<Vec<f64>>,
    pub last_optimum: Option<Vec<f64>>,
}

/// Class-incremental run over a prepared stream. After each task: boundary
/// hooks, then `a[t][i]` for every `i ≤ t` with logits restricted to the
/// classes seen so far, then diagnostics on a probe from the first task.
pub fn run_cil_on(cfg: &ExperimentConfig, stream: TaskStream, seed: u64) -> Result<CilRun> {
    let n_classes = stream.n_classes();
    let (mut model, mut learner) = new_model_and_learner(cfg, n_classes, seed)?;
    let mut ledger = MetricsLedger::new(seed);
    let mut seen: Vec<usize> = Vec::new();
    let probe = stream.tasks.first().map(|t| probe_set(&t.train, cfg.probe_samples, seed));
    let (mut first_optimum, mut last_optimum) = (None, None);
    for (t, task) in stream.tasks.iter().enumerate() {
        let started = Instant::now();
        seen.extend(&task.classes);
        let mask = class_mask(n_classes, &seen);
        let trained = train_task(
            &mut model,
            &mut learner,
            &task.train,
            Some(&mask),
            stream.epochs_per_task,
            stream.batch_size,
            seed,
            &[stream::SHUFFLE, t as u64],
            t,
        );
        if let Err(e @ Error::NonFinite { .. }) = trained {
            ledger.aborted = Some(e.to_string());
            break;
        }
        trained?;
        learner.end_task(&mut model, &task.train, Some(&mask))?;
        let mut row = Vec::with_capacity(t + 1);
        for earlier in &stream.tasks[..=t] {
            let test = earlier
                .test
                .as_ref()
                .ok_or_else(|| Error::MissingData("class-incremental task without a test split".into()))?;
            row.push(evaluate(&model, test, Some(&mask))?);
        }
        ledger.accuracy.push(row);
        ledger.diagnostics.push(diagnostics(&model, probe.as_ref())?);
        if t == 0 {
            first_optimum = Some(model.params().to_vec());
        }
        last_optimum = Some(model.params().to_vec());
        ledger.wall_clock.push(started.elapsed().as_secs_f64());
    }
    let started = Instant::now();
    if cfg.scratch && ledger.aborted.is_none() {
        ledger.scratch = run_scratch_baselines(cfg, &stream, seed)?;
    }
    let t_last = ledger.stages();
    if t_last >= 2 && ledger.aborted.is_none() {
        let mask_first = class_mask(n_classes, &stream.tasks[0].classes);
        let snap = |params: &Option<Vec<f64>>, task: usize, mask: Vec<bool>| OptimumSnapshot {
            params: params.clone().expect("snapshot"),
            data: stream.tasks[task].train.clone(),
            mask,
        };
        let first = snap(&first_optimum, 0, mask_first);
        let last = snap(&last_optimum, t_last - 1, class_mask(n_classes, &seen));
        if let Some(angle) = task_optima_gradient_angle(&model, &first, &last)? {
            ledger.extras.push((t_last - 1, "grad_angle".into(), angle));
        }
    }
    ledger.wall_clock.push(started.elapsed().as_secs_f64());
    Ok(CilRun {
        ledger,
        model,
        stream,
        first_optimum,
        last_optimum,
    })
}

pub fn run_cil_detailed(cfg: &ExperimentConfig, seed: u64) -> Result<CilRun> {
    run_cil_on(cfg, build_cil_stream(cfg, seed)?, seed)
}

pub fn run_cil(cfg: &ExperimentConfig, seed: u64) -> Result<MetricsLedger> {
    Ok(run_cil_detailed(cfg, seed)?.ledger)
}

/// `ã_i` for every task after the first: a fresh model from `seed`, trained
/// on task `i` alone with the same budget and evaluated over that task's
/// classes. Entry 0 is `None`.
pub fn run_scratch_baselines(cfg: &ExperimentConfig, stream: &TaskStream, seed: u64) -> Result<Vec<Option<f64>>> {
    let n_classes = stream.n_classes();
    let mut out = vec![None];
    for (i, task) in stream.tasks.iter().enumerate().skip(1) {
        let (mut model, mut learner) = new_model_and_learner(cfg, n_classes, seed)?;
        let mask = class_mask(n_classes, &task.classes);
        let mut tags = vec![stream::SHUFFLE, SCRATCH_TAG];
        tags.extend(task.classes.iter().map(|&c| c as u64));
        train_task(
            &mut model,
            &mut learner,
            &task.train,
            Some(&mask),
            stream.epochs_per_task,
            stream.batch_size,
            seed,
            &tags,
            i,
        )?;
        let test = task
            .test
            .as_ref()
            .ok_or_else(|| Error::MissingData("task without a test split".into()))?;
        out.push(Some(evaluate(&model, test, Some(&mask))?));
    }
    Ok(out)
}

/// The permuted task source for a streaming run. The base pool holds
/// `base_samples` rows: synthetic digits, or a seeded subset of IDX/FLYF
/// data.
pub fn build_stream_source(cfg: &ExperimentConfig, seed: u64) -> Result<PermutedStream> {
    let subset = |d: Dataset| -> Dataset {
        if cfg.base_samples >= d.len() {
            return d;
        }
        let mut rng = substream(seed, &[stream::DATA, 12]);
        let mut rows = index::sample(&mut rng, d.len(), cfg.base_samples).into_vec();
        rows.sort_unstable();
        d.select(&rows)
    };
    let base = match cfg.dataset {
        DatasetKind::Digits => gen_digits(&DigitsConfig {
            n_per_class: cfg.base_samples.div_ceil(10),
            seed,
        })?,
        DatasetKind::Idx => {
            let (Some(i), Some(l)) = (&cfg.images, &cfg.labels) else {
                return Err(Error::Config("idx needs `images` and `labels`".into()));
            };
            subset(load_idx(i, l)?)
        }
        DatasetKind::Features => {
            let Some(f) = &cfg.train_file else {
                return Err(Error::Config("features need `train_file`".into()));
            };
            subset(load_feature_file(f)?)
        }
        DatasetKind::Odor => {
            let d = gen_odor_dataset(&OdorConfig {
                n_dims: cfg.pn,
                n_classes: cfg.n_classes,
                noise_sigma: cfg.noise,
                train_per_class: cfg.train_per_class,
                test_per_class: 1,
                seed,
            })?;
            subset(d.train)
        }
    };
    check_dim(cfg, base.dim())?;
    PermutedStream::new(
        base,
        PermutationSpec {
            mode: cfg.permute,
            seed,
        },
        cfg.tasks,
        cfg.samples_per_task,
    )
}

/// Prequential streaming run: each batch is scored before the update on it.
/// Boundary hooks run at the declared task ends, followed by diagnostics on
/// a fixed probe drawn from the first task.
pub fn run_streaming_on(cfg: &ExperimentConfig, source: &dyn TaskSource, seed: u64) -> Result<MetricsLedger> {
    let n_classes = source.n_classes();
    let (mut model, mut learner) = new_model_and_learner(cfg, n_classes, seed)?;
    let mut ledger = MetricsLedger::new(seed);
    let mut probe = None;
    'tasks: for t in 0..source.n_tasks() {
        let started = Instant::now();
        let task = source.task(t)?;
        if t == 0 {
            probe = Some(probe_set(&task.train, cfg.probe_samples, seed));
        }
        let data = &task.train;
        let x = data.features();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut substream(seed, &[stream::SHUFFLE, t as u64, 0]));
        let mut batches = Vec::with_capacity(order.len().div_ceil(cfg.batch_size));
        for (step, rows) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), rows);
            let yb: Vec<usize> = rows.iter().map(|&r| data.labels()[r]).collect();
            let trace = model.forward_batch(xb.view())?;
            let loss = masked_cross_entropy(trace.logits.view(), &yb, None)?;
            batches.push(loss.correct as f64 / yb.len() as f64);
            if !loss.loss.is_finite() {
                ledger.online_batches.push(batches);
                ledger.aborted = Some(Error::NonFinite { task: t, step }.to_string());
                break 'tasks;
            }
            let grads = model.backward_batch(&trace, loss.dlogits.view())?;
            learner.step(&mut model, &grads, &trace)?;
        }
        ledger.online_batches.push(batches);
        learner.end_task(&mut model, data, None)?;
        ledger.diagnostics.push(diagnostics(&model, probe.as_ref())?);
        ledger.wall_clock.push(started.elapsed().as_secs_f64());
    }
    Ok(ledger)
}

pub fn run_streaming(cfg: &ExperimentConfig, seed: u64) -> Result<MetricsLedger> {
    let source = build_stream_source(cfg, seed)?;
    run_streaming_on(cfg, &source, seed)
}

/// Runs the experiment the config's protocol names.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<MetricsLedger> {
    match cfg.protocol {
        ProtocolKind::Cil => run_cil(cfg, seed),
        ProtocolKind::Stream => run_streaming(cfg, seed),
    }
}
