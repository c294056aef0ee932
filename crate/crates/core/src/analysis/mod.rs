//! Side results about the expansion layer: angle statistics of random
//! vectors, distinct-subset combinatorics, gradient orthogonality, KC
//! overlap and FLOPs accounting.

mod angles;
mod birthday;
mod flops;
mod gradients;
mod overlap;
mod theorem;

pub use angles::{
    adaptive_simpson, angle_between, angle_pdf, angle_pdf_mass, angle_variance,
    histogram_l1_to_pdf, sample_angle_histogram, AngleHistogram,
};
pub use birthday::{binomial, birthday_argmax, birthday_probability, Birthday};
pub use flops::{flops_report, FlopsReport, HEAD_UPDATE_FACTOR};
pub use gradients::{gradient_angle, task_optima_gradient_angle, OptimumSnapshot, MIN_GRADIENT_NORM};
pub use overlap::{active_profile, kc_overlap, PROFILE_THRESHOLD};
pub use theorem::{mean_value_check, rotation_sweep, MeanValueCheck, Quadratic, RotationPoint};
