//! The Fly Model: frozen sparse binary expansion, top-k winner-take-all
//! coding and a trainable linear readout, optionally behind trainable dense
//! pre-layers.

pub(crate) mod checkpoint;
mod coding;
mod loss;
mod model;
mod projection;

pub use checkpoint::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC};
pub use coding::{active_count_for, top_k_code, CodingConfig, TiePolicy};
pub use loss::{cross_entropy_loss, masked_cross_entropy, predict, BatchLoss};
pub use model::{
    Activation, BatchTrace, DenseLinearHead, DensePreLayer, FlyModel, ForwardTrace, GradientSet,
    ModelSpec, ParamLayout, PreLayerSpec, Segment, SegmentKind, SparseCodes,
};
pub use projection::SparseBinaryProjection;
