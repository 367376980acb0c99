//! Desk-scale training harness: optimizers with the poly learning-rate
//! policy, confusion-matrix metrics, a deterministic synthetic dataset, and
//! the training loop.

mod metrics;
mod optim;
mod run;
mod synth;

pub use metrics::{argmax_predictions, Metrics};
pub use optim::{
    poly_lr, OptimConfig, Optimizer, OptimizerKind, ADAM_BETAS, ADAM_EPSILON, DEFAULT_MOMENTUM,
    POLY_POWER,
};
pub use run::{history_csv, stack_samples, train_loop, EpochStat, TrainConfig, TrainReport};
pub use synth::{synth_class_color, synth_dataset};

use crate::labels::LabelMap;
use crate::tensor::Tensor;

/// One training example: an image in [0,1] plus its exact label map.
#[derive(Clone, Debug)]
pub struct Sample {
    /// 1x3xHxW.
    pub image: Tensor,
    /// 1xHxW, values in [0, K) or the ignore label.
    pub labels: LabelMap,
}
