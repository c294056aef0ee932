use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::coding::{select_top_k, CodingConfig};
use super::projection::SparseBinaryProjection;
use crate::error::{shape, Stage};
use crate::rng::{derive_seed, stream, substream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreLayerSpec {
    pub width: usize,
    pub activation: Activation,
}

/// Everything needed to rebuild a model bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_in: usize,
    pub pre_layers: Vec<PreLayerSpec>,
    pub n_kc: usize,
    pub degree: usize,
    pub coding_level: f64,
    pub n_classes: usize,
    /// Bypass expansion and coding; the head reads the pre-layer output.
    pub ablate_kc: bool,
    pub head_bias: bool,
    pub seed: u64,
}

impl ModelSpec {
    /// Width of the features entering the expansion stage (or the head, when
    /// ablated).
    pub fn feature_dim(&self) -> usize {
        self.pre_layers.last().map_or(self.n_in, |l| l.width)
    }

    pub fn head_fan_in(&self) -> usize {
        if self.ablate_kc {
            self.feature_dim()
        } else {
            self.n_kc
        }
    }

    pub fn projection_seed(&self) -> u64 {
        derive_seed(self.seed, &[stream::PROJECTION])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    PreWeight(usize),
    PreBias(usize),
    HeadWeight,
    HeadBias,
}

/// A contiguous block of the flat parameter vector, row-major `rows × cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Weight matrices, as opposed to bias vectors.
    pub fn is_weight(&self) -> bool {
        matches!(self.kind, SegmentKind::PreWeight(_) | SegmentKind::HeadWeight)
    }
}

/// Order of the trainable parameters: each pre-layer's weights then bias,
/// then the head weights and optional head bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    total: usize,
}

impl ParamLayout {
    fn for_spec(spec: &ModelSpec) -> Self {
        let mut segments = Vec::new();
        let mut offset = 0;
        let mut push = |kind, rows, cols| {
            segments.push(Segment {
                kind,
                offset,
                rows,
                cols,
            });
            offset += rows * cols;
        };
        let mut fan_in = spec.n_in;
        for (l, layer) in spec.pre_layers.iter().enumerate() {
            push(SegmentKind::PreWeight(l), layer.width, fan_in);
            push(SegmentKind::PreBias(l), 1, layer.width);
            fan_in = layer.width;
        }
        push(SegmentKind::HeadWeight, spec.n_classes, spec.head_fan_in());
        if spec.head_bias {
            push(SegmentKind::HeadBias, 1, spec.n_classes);
        }
        Self {
            segments,
            total: offset,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn find(&self, kind: SegmentKind) -> Option<&Segment> {
        self.segments.iter().find(|s| s.kind == kind)
    }

    pub fn pre_weight(&self, l: usize) -> &Segment {
        self.find(SegmentKind::PreWeight(l)).expect("pre-layer exists")
    }

    pub fn pre_bias(&self, l: usize) -> &Segment {
        self.find(SegmentKind::PreBias(l)).expect("pre-layer exists")
    }

    pub fn head_weight(&self) -> &Segment {
        self.find(SegmentKind::HeadWeight).expect("head exists")
    }

    pub fn head_bias(&self) -> Option<&Segment> {
        self.find(SegmentKind::HeadBias)
    }

    /// Range covering the head weights and bias.
    pub fn head_range(&self) -> Range<usize> {
        let w = self.head_weight();
        let end = self.head_bias().map_or(w.range().end, |b| b.range().end);
        w.offset..end
    }
}

/// Gradients laid out exactly like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub values: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn segment<'a>(&'a self, seg: &Segment) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((seg.rows, seg.cols), &self.values[seg.range()]).expect("layout")
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Read-only view of one trainable dense pre-layer.
#[derive(Debug, Clone)]
pub struct DensePreLayer<'a> {
    pub weights: ArrayView2<'a, f64>,
    pub bias: ArrayView1<'a, f64>,
    pub activation: Activation,
}

/// Read-only view of the trainable readout `W_{K→M}`.
#[derive(Debug, Clone)]
pub struct DenseLinearHead<'a> {
    pub weights: ArrayView2<'a, f64>,
    pub bias: Option<ArrayView1<'a, f64>>,
}

/// Top-k codes of a batch: `active_count` ascending KC indices and their
/// values per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodes {
    pub active_count: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseCodes {
    pub fn batch(&self) -> usize {
        self.indices.len() / self.active_count.max(1)
    }

    pub fn sample(&self, b: usize) -> (&[u32], &[f64]) {
        let r = b * self.active_count..(b + 1) * self.active_count;
        (&self.indices[r.clone()], &self.values[r])
    }
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    pub input: Array2<f64>,
    /// Affine outputs of each pre-layer, before the activation.
    pub pre_linear: Vec<Array2<f64>>,
    /// Activation outputs of each pre-layer.
    pub pre_outputs: Vec<Array2<f64>>,
    /// Present unless the model is ablated.
    pub codes: Option<SparseCodes>,
    pub logits: Array2<f64>,
}

impl BatchTrace {
    pub fn batch(&self) -> usize {
        self.input.nrows()
    }

    /// The features entering the expansion stage (or the head, if ablated).
    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.pre_outputs.last().unwrap_or(&self.input).view()
    }
}

/// Intermediate values of a single-sample forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre_linear: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
    /// `h`, the KC drive. Empty when the model is ablated.
    pub kc_raw: Vec<f64>,
    /// `z`, the coded KC vector. Empty when the model is ablated.
    pub kc_coded: Vec<f64>,
    pub active_set: Vec<usize>,
    pub logits: Vec<f64>,
}

/// Dense pre-layers, frozen sparse expansion, top-k coding and a linear head.
///
/// All trainable parameters live in one flat vector described by
/// [`ParamLayout`]; the projection is rebuilt from its seed and never changes.
#[derive(Debug, Clone, PartialEq)]
pub struct FlyModel {
    spec: ModelSpec,
    projection: Option<SparseBinaryProjection>,
    coding: Option<CodingConfig>,
    layout: ParamLayout,
    params: Vec<f64>,
}

pub(crate) fn init_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

impl FlyModel {
    /// Builds the model and draws its initial parameters from `spec.seed`.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let mut model = Self::uninitialized(spec)?;
        let spec = &model.spec;
        let mut fan_in = spec.n_in;
        for l in 0..spec.pre_layers.len() {
            let mut rng = substream(spec.seed, &[stream::PRE_INIT, l as u64]);
            let dist = Uniform::new_inclusive(-init_bound(fan_in), init_bound(fan_in));
            let w = model.layout.pre_weight(l).range();
            let b = model.layout.pre_bias(l).range();
            for v in &mut model.params[w] {
                *v = dist.sample(&mut rng);
            }
            for v in &mut model.params[b] {
                *v = dist.sample(&mut rng);
            }
            fan_in = spec.pre_layers[l].width;
        }
        let mut rng = substream(spec.seed, &[stream::HEAD_INIT]);
        let bound = init_bound(spec.head_fan_in());
        let dist = Uniform::new_inclusive(-bound, bound);
        for v in &mut model.params[model.layout.head_range()] {
            *v = dist.sample(&mut rng);
        }
        Ok(model)
    }

    /// Validated structure with all parameters zero.
    pub(crate) fn uninitialized(spec: ModelSpec) -> Result<Self> {
        if spec.n_in == 0 {
            return Err(Error::InvalidShape {
                stage: Stage::Input,
                expected: 1,
                got: 0,
            });
        }
        if spec.n_classes == 0 {
            return Err(Error::InvalidShape {
                stage: Stage::Head,
                expected: 1,
                got: 0,
            });
        }
        for (l, layer) in spec.pre_layers.iter().enumerate() {
            if layer.width == 0 {
                return Err(Error::InvalidShape {
                    stage: Stage::PreLayer(l),
                    expected: 1,
                    got: 0,
                });
            }
        }
        let (projection, coding) = if spec.ablate_kc {
            (None, None)
        } else {
            let p = SparseBinaryProjection::build(
                spec.feature_dim(),
                spec.n_kc,
                spec.degree,
                spec.projection_seed(),
            )?;
            (Some(p), Some(CodingConfig::new(spec.coding_level, spec.n_kc)?))
        };
        let layout = ParamLayout::for_spec(&spec);
        let params = vec![0.0; layout.total()];
        Ok(Self {
            spec,
            projection,
            coding,
            layout,
            params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn projection(&self) -> Option<&SparseBinaryProjection> {
        self.projection.as_ref()
    }

    pub fn coding(&self) -> Option<&CodingConfig> {
        self.coding.as_ref()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn n_pre_layers(&self) -> usize {
        self.spec.pre_layers.len()
    }

    pub fn pre_layer(&self, l: usize) -> DensePreLayer<'_> {
        let w = self.layout.pre_weight(l);
        let b = self.layout.pre_bias(l);
        DensePreLayer {
            weights: self.segment(w),
            bias: ArrayView1::from(&self.params[b.range()]),
            activation: self.spec.pre_layers[l].activation,
        }
    }

    pub fn head(&self) -> DenseLinearHead<'_> {
        DenseLinearHead {
            weights: self.segment(self.layout.head_weight()),
            bias: self
                .layout
                .head_bias()
                .map(|b| ArrayView1::from(&self.params[b.range()])),
        }
    }

    pub fn segment(&self, seg: &Segment) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((seg.rows, seg.cols), &self.params[seg.range()]).expect("layout")
    }

    pub fn segment_mut(&mut self, seg: &Segment) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((seg.rows, seg.cols), &mut self.params[seg.range()])
            .expect("layout")
    }

    /// Uniform bound used to initialize weights with the given fan-in.
    pub fn init_bound(&self, fan_in: usize) -> f64 {
        init_bound(fan_in)
    }

    /// Batched forward pass; `x` is `batch × n_in`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<BatchTrace> {
        shape(Stage::Input, self.spec.n_in, x.ncols())?;
        let mut pre_linear = Vec::with_capacity(self.n_pre_layers());
        let mut pre_outputs: Vec<Array2<f64>> = Vec::with_capacity(self.n_pre_layers());
        for l in 0..self.n_pre_layers() {
            let layer = self.pre_layer(l);
            let input = pre_outputs.last().map_or(x.view(), |a| a.view());
            let mut lin = input.dot(&layer.weights.t());
            lin += &layer.bias;
            let out = lin.mapv(|v| layer.activation.apply(v));
            pre_linear.push(lin);
            pre_outputs.push(out);
        }
        let features = pre_outputs.last().map_or(x.view(), |a| a.view());
        let batch = x.nrows();
        let head = self.head();
        let (codes, mut logits) = match (&self.projection, &self.coding) {
            (Some(proj), Some(coding)) => {
                let ht = proj.expand_batch_t(features)?;
                let k = coding.active_count();
                let m = proj.n_out();
                let mut indices = Vec::with_capacity(batch * k);
                let mut values = Vec::with_capacity(batch * k);
                let mut column = vec![0.0; m];
                let mut scratch = Vec::with_capacity(m);
                let mut logits = Array2::zeros((batch, self.spec.n_classes));
                for b in 0..batch {
                    for (dst, src) in column.iter_mut().zip(ht.column(b)) {
                        *dst = *src;
                    }
                    let winners = select_top_k(&column, k, &mut scratch);
                    let mut row = logits.row_mut(b);
                    for &j in &winners {
                        let v = column[j as usize];
                        indices.push(j);
                        values.push(v);
                        for (o, w) in row.iter_mut().zip(head.weights.column(j as usize)) {
                            *o += w * v;
                        }
                    }
                }
                let codes = SparseCodes {
                    active_count: k,
                    indices,
                    values,
                };
                (Some(codes), logits)
            }
            _ => (None, features.dot(&head.weights.t())),
        };
        if let Some(bias) = head.bias {
            logits += &bias;
        }
        Ok(BatchTrace {
            input: x.to_owned(),
            pre_linear,
            pre_outputs,
            codes,
            logits,
        })
    }

    /// Single-sample forward pass with every intermediate recorded.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        shape(Stage::Input, self.spec.n_in, x.len())?;
        let xb = ArrayView2::from_shape((1, x.len()), x).expect("row");
        let trace = self.forward_batch(xb)?;
        let row = |a: &Array2<f64>| a.row(0).to_vec();
        let (kc_raw, kc_coded, active_set) = match (&self.projection, &trace.codes) {
            (Some(proj), Some(codes)) => {
                let raw = proj.expand(trace.features().row(0).as_slice().expect("row"))?;
                let mut coded = vec![0.0; raw.len()];
                let (idx, vals) = codes.sample(0);
                for (&j, &v) in idx.iter().zip(vals) {
                    coded[j as usize] = v;
                }
                (raw, coded, idx.iter().map(|&j| j as usize).collect())
            }
            _ => (Vec::new(), Vec::new(), Vec::new()),
        };
        Ok(ForwardTrace {
            input: x.to_vec(),
            pre_linear: trace.pre_linear.iter().map(row).collect(),
            pre_activations: trace.pre_outputs.iter().map(row).collect(),
            kc_raw,
            kc_coded,
            active_set,
            logits: row(&trace.logits),
        })
    }

    /// Gradient of `Σ_b ⟨dlogits_b, logits_b⟩` w.r.t. every trainable
    /// parameter. Pass the gradient of a mean loss to get the mean gradient.
    pub fn backward_batch(
        &self,
        trace: &BatchTrace,
        dlogits: ArrayView2<'_, f64>,
    ) -> Result<GradientSet> {
        self.backprop(trace, dlogits, false)
    }

    /// Sum over rows of the element-wise squared per-row gradients.
    ///
    /// Row `b` of `dlogits` defines its own per-sample gradient; the result is
    /// `Σ_b g_b ⊙ g_b`, the building block of a diagonal Fisher estimate.
    pub fn squared_gradient_sum(
        &self,
        trace: &BatchTrace,
        dlogits: ArrayView2<'_, f64>,
    ) -> Result<Vec<f64>> {
        Ok(self.backprop(trace, dlogits, true)?.values)
    }

    /// Single-sample backward pass.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &[f64]) -> Result<GradientSet> {
        let stale = |what: &str| Error::InvalidTrace(format!("{what} does not match the model"));
        if trace.input.len() != self.spec.n_in || trace.logits.len() != self.spec.n_classes {
            return Err(stale("input or logit width"));
        }
        if trace.pre_linear.len() != self.n_pre_layers()
            || trace.pre_activations.len() != self.n_pre_layers()
        {
            return Err(stale("pre-layer count"));
        }
        let one = |v: &Vec<f64>| Array2::from_shape_vec((1, v.len()), v.clone()).expect("row");
        let codes = match &self.coding {
            Some(coding) => {
                if trace.kc_coded.len() != self.spec.n_kc
                    || trace.active_set.len() != coding.active_count()
                {
                    return Err(stale("KC code"));
                }
                Some(SparseCodes {
                    active_count: coding.active_count(),
                    indices: trace.active_set.iter().map(|&j| j as u32).collect(),
                    values: trace.active_set.iter().map(|&j| trace.kc_coded[j]).collect(),
                })
            }
            None => None,
        };
        let batch = BatchTrace {
            input: one(&trace.input),
            pre_linear: trace.pre_linear.iter().map(one).collect(),
            pre_outputs: trace.pre_activations.iter().map(one).collect(),
            codes,
            logits: one(&trace.logits),
        };
        let dl = ArrayView2::from_shape((1, dlogits.len()), dlogits)
            .map_err(|_| stale("logit gradient"))?;
        self.backward_batch(&batch, dl)
    }

    fn check_trace(&self, trace: &BatchTrace, dlogits: &ArrayView2<'_, f64>) -> Result<()> {
        let stale = |what: String| Err(Error::InvalidTrace(what));
        let batch = trace.batch();
        if dlogits.dim() != (batch, self.spec.n_classes) {
            return stale(format!(
                "logit gradient is {:?}, expected ({batch}, {})",
                dlogits.dim(),
                self.spec.n_classes
            ));
        }
        if trace.input.ncols() != self.spec.n_in {
            return stale(format!("input width {} != {}", trace.input.ncols(), self.spec.n_in));
        }
        if trace.pre_linear.len() != self.n_pre_layers()
            || trace.pre_outputs.len() != self.n_pre_layers()
        {
            return stale("pre-layer count differs".into());
        }
        for (l, spec) in self.spec.pre_layers.iter().enumerate() {
            for a in [&trace.pre_linear[l], &trace.pre_outputs[l]] {
                if a.dim() != (batch, spec.width) {
                    return stale(format!("pre-layer {l} activations are {:?}", a.dim()));
                }
            }
        }
        match (&self.coding, &trace.codes) {
            (None, None) => {}
            (Some(coding), Some(codes)) => {
                let k = coding.active_count();
                if codes.active_count != k
                    || codes.indices.len() != batch * k
                    || codes.values.len() != batch * k
                    || codes.indices.iter().any(|&j| j as usize >= self.spec.n_kc)
                {
                    return stale("KC codes do not match the coding config".into());
                }
            }
            _ => return stale("trace and model disagree on the KC stage".into()),
        }
        Ok(())
    }

    fn backprop(
        &self,
        trace: &BatchTrace,
        dlogits: ArrayView2<'_, f64>,
        squared: bool,
    ) -> Result<GradientSet> {
        self.check_trace(trace, &dlogits)?;
        let sq = |a: &ArrayView2<'_, f64>| a.mapv(|v| v * v);
        let mut grads = GradientSet::zeros(self.num_params());
        let head_w = *self.layout.head_weight();
        let features = trace.features();
        let need_feature_grad = self.n_pre_layers() > 0;
        let head = self.head();

        let mut d_features = match &trace.codes {
            None => {
                let g = if squared {
                    sq(&dlogits).t().dot(&sq(&features))
                } else {
                    dlogits.t().dot(&features)
                };
                write_segment(&mut grads.values, &head_w, g.view());
                need_feature_grad.then(|| dlogits.dot(&head.weights))
            }
            Some(codes) => {
                let m = head_w.cols;
                let gw = &mut grads.values[head_w.range()];
                let proj = self.projection.as_ref().expect("projection with codes");
                let mut d_features =
                    need_feature_grad.then(|| Array2::<f64>::zeros(features.raw_dim()));
                for b in 0..trace.batch() {
                    let (idx, vals) = codes.sample(b);
                    let dl = dlogits.row(b);
                    for (&j, &z) in idx.iter().zip(vals) {
                        let j = j as usize;
                        for (c, &d) in dl.iter().enumerate() {
                            let g = d * z;
                            gw[c * m + j] += if squared { g * g } else { g };
                        }
                        if let Some(df) = d_features.as_mut() {
                            let gz: f64 = head.weights.column(j).dot(&dl);
                            let mut row = df.row_mut(b);
                            for &p in proj.row(j) {
                                row[p as usize] += gz;
                            }
                        }
                    }
                }
                d_features
            }
        };
        if let Some(bias) = self.layout.head_bias() {
            let g = if squared {
                sq(&dlogits).sum_axis(Axis(0))
            } else {
                dlogits.sum_axis(Axis(0))
            };
            grads.values[bias.range()].copy_from_slice(g.as_slice().expect("contiguous"));
        }

        for l in (0..self.n_pre_layers()).rev() {
            let d_out = d_features.take().expect("feature gradient");
            let act = self.spec.pre_layers[l].activation;
            let mut d_lin = d_out;
            ndarray::Zip::from(&mut d_lin)
                .and(&trace.pre_linear[l])
                .for_each(|d, &pre| *d *= act.derivative(pre));
            let input = if l == 0 {
                trace.input.view()
            } else {
                trace.pre_outputs[l - 1].view()
            };
            let (w_seg, b_seg) = (*self.layout.pre_weight(l), *self.layout.pre_bias(l));
            let (gw, gb) = if squared {
                let d2 = sq(&d_lin.view());
                (d2.t().dot(&sq(&input)), d2.sum_axis(Axis(0)))
            } else {
                (d_lin.t().dot(&input), d_lin.sum_axis(Axis(0)))
            };
            write_segment(&mut grads.values, &w_seg, gw.view());
            grads.values[b_seg.range()].copy_from_slice(gb.as_slice().expect("contiguous"));
            if l > 0 {
                d_features = Some(d_lin.dot(&self.pre_layer(l).weights));
            }
        }
        Ok(grads)
    }

    /// Redraws the incoming weights of neuron `i` in pre-layer `l` from the
    /// init distribution and zeros its bias.
    pub fn reinit_pre_neuron(&mut self, l: usize, i: usize, rng: &mut impl rand::Rng) {
        let seg = *self.layout.pre_weight(l);
        let bound = init_bound(seg.cols);
        let dist = Uniform::new_inclusive(-bound, bound);
        let row = seg.offset + i * seg.cols;
        for v in &mut self.params[row..row + seg.cols] {
            *v = rng.sample(dist);
        }
        let b = self.layout.pre_bias(l).offset + i;
        self.params[b] = 0.0;
    }

    /// The trainable weights reading from pre-layer `l`'s neuron `i`, as
    /// (segment, column). `None` when the next stage is the frozen projection.
    pub fn outgoing_column(&self, l: usize) -> Option<Segment> {
        if l + 1 < self.n_pre_layers() {
            Some(*self.layout.pre_weight(l + 1))
        } else if self.spec.ablate_kc {
            Some(*self.layout.head_weight())
        } else {
            None
        }
    }

    /// Sum of |outgoing weight| for every neuron in pre-layer `l`. Frozen
    /// projection edges count with weight 1.
    pub fn outgoing_weight_mass(&self, l: usize) -> Vec<f64> {
        match self.outgoing_column(l) {
            Some(seg) => {
                let w = self.segment(&seg);
                (0..seg.cols)
                    .map(|i| w.column(i).iter().map(|v| v.abs()).sum())
                    .collect()
            }
            None => self
                .projection
                .as_ref()
                .expect("projection")
                .fan_out()
                .into_iter()
                .map(|c| c as f64)
                .collect(),
        }
    }

    /// Zeros the trainable weights leaving neuron `i` of pre-layer `l`.
    pub fn zero_outgoing(&mut self, l: usize, i: usize) {
        if let Some(seg) = self.outgoing_column(l) {
            let mut w = self.segment_mut(&seg);
            w.column_mut(i).fill(0.0);
        }
    }

    /// The head block (weights, then bias) of the parameter vector.
    pub fn head_params(&self) -> &[f64] {
        &self.params[self.layout.head_range()]
    }

    /// Trace rows for a subset of the batch, repeated `times` times each
    /// (row `r` of the result is sample `r / times`).
    pub(crate) fn repeat_rows(trace: &BatchTrace, times: usize) -> BatchTrace {
        let rep = |a: &Array2<f64>| {
            let mut out = Array2::zeros((a.nrows() * times, a.ncols()));
            for (r, mut row) in out.rows_mut().into_iter().enumerate() {
                row.assign(&a.row(r / times));
            }
            out
        };
        let codes = trace.codes.as_ref().map(|c| {
            let k = c.active_count;
            let mut indices = Vec::with_capacity(c.indices.len() * times);
            let mut values = Vec::with_capacity(c.values.len() * times);
            for b in 0..c.batch() {
                for _ in 0..times {
                    indices.extend_from_slice(&c.indices[b * k..(b + 1) * k]);
                    values.extend_from_slice(&c.values[b * k..(b + 1) * k]);
                }
            }
            SparseCodes {
                active_count: k,
                indices,
                values,
            }
        });
        BatchTrace {
            input: rep(&trace.input),
            pre_linear: trace.pre_linear.iter().map(rep).collect(),
            pre_outputs: trace.pre_outputs.iter().map(rep).collect(),
            codes,
            logits: rep(&trace.logits),
        }
    }

    /// Replaces all parameters; the length must match the layout.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        shape(Stage::Parameters, self.layout.total(), params.len())?;
        self.params = params;
        Ok(())
    }

    /// Weights of the dense layer right before the expansion stage.
    pub fn last_pre_weights(&self) -> Option<ArrayView2<'_, f64>> {
        let l = self.n_pre_layers().checked_sub(1)?;
        Some(self.pre_layer(l).weights)
    }

    /// Per-neuron mean |activation| over a batch for every pre-layer,
    /// concatenated, and for the coded KC layer (if present).
    pub fn mean_abs_activity(&self, trace: &BatchTrace) -> (Vec<f64>, Option<Vec<f64>>) {
        let n = trace.batch().max(1) as f64;
        let pre = trace
            .pre_outputs
            .iter()
            .flat_map(|a| {
                a.axis_iter(Axis(1))
                    .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n)
                    .collect::<Vec<_>>()
            })
            .collect();
        let kc = trace.codes.as_ref().map(|codes| {
            let mut acc = vec![0.0; self.spec.n_kc];
            for (&j, &v) in codes.indices.iter().zip(&codes.values) {
                acc[j as usize] += v.abs();
            }
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        });
        (pre, kc)
    }
}

fn write_segment(values: &mut [f64], seg: &Segment, g: ArrayView2<'_, f64>) {
    let mut dst =
        ArrayViewMut2::from_shape((seg.rows, seg.cols), &mut values[seg.range()]).expect("layout");
    dst.assign(&g);
}
