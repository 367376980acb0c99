//! The training loop: seeded shuffling, per-iteration poly learning rate,
//! per-epoch held-out evaluation, and best-weight tracking.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{argmax_predictions, Metrics};
use super::optim::{poly_lr, OptimConfig, Optimizer, POLY_POWER};
use super::Sample;
use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::network::MscfNet;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: OptimConfig,
    pub seed: u64,
    pub class_weights: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct EpochStat {
    pub epoch: usize,
    /// Global iteration count after this epoch.
    pub iteration: usize,
    /// Learning rate used by the epoch's last iteration.
    pub lr: f64,
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Held-out mean IoU after the epoch.
    pub miou: f64,
}

pub struct TrainReport {
    pub history: Vec<EpochStat>,
    pub best_miou: f64,
    pub best_epoch: usize,
    /// Snapshot of all parameter tensors at the best-mIoU epoch.
    pub best_weights: Vec<Arc<Tensor>>,
}

/// Metric history as CSV, one row per evaluation.
pub fn history_csv(history: &[EpochStat]) -> String {
    let mut s = String::from("epoch,iteration,lr,loss,miou\n");
    for row in history {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch, row.iteration, row.lr, row.loss, row.miou
        ));
    }
    s
}

/// Stack single-batch samples into one batched image tensor + label map.
pub fn stack_samples(samples: &[&Sample]) -> (Tensor, LabelMap) {
    assert!(!samples.is_empty());
    let s0 = samples[0].image.shape();
    let mut data = Vec::with_capacity(samples.len() * s0.count());
    for s in samples {
        assert_eq!(s.image.shape(), s0, "mixed sample geometry");
        data.extend_from_slice(s.image.data());
    }
    let images = Tensor::from_vec(Shape::new(samples.len(), s0.c, s0.h, s0.w), data)
        .expect("stacked sample length");
    let labels = LabelMap::stack(&samples.iter().map(|s| &s.labels).collect::<Vec<_>>());
    (images, labels)
}

/// Mean IoU of the network over a sample list (eval mode, batched).
pub fn evaluate_miou(net: &MscfNet, samples: &[Sample], batch_size: usize) -> Result<f64> {
    let mut metrics = Metrics::new(net.config().num_classes);
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (images, labels) = stack_samples(&refs);
        let logits = net.forward_eval(&images)?;
        metrics.update(&argmax_predictions(&logits), &labels);
    }
    Ok(metrics.miou().unwrap_or(0.0))
}

pub fn train_loop(
    net: &mut MscfNet,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    assert!(!train.is_empty() && cfg.epochs > 0 && cfg.batch_size > 0);
    let batches_per_epoch = train.len().div_ceil(cfg.batch_size);
    let max_iteration = cfg.epochs * batches_per_epoch;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optim.clone());
    let mut iteration = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_miou = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_weights = net.params().snapshot();

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut last_lr = 0.0;
        for batch_indices in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = batch_indices.iter().map(|&i| &train[i]).collect();
            let (images, labels) = stack_samples(&batch);
            let lr = poly_lr(cfg.optim.lr_base, iteration, max_iteration, POLY_POWER);
            last_lr = lr;
            net.params_mut().zero_grads();
            let loss =
                net.accumulate_loss_gradients(&images, &labels, cfg.class_weights.as_deref())?;
            if !loss.is_finite() {
                return Err(Error::Diverged { iteration });
            }
            optimizer.step(net.params_mut(), lr);
            iteration += 1;
            loss_sum += loss;
        }
        let miou = if val.is_empty() {
            0.0
        } else {
            evaluate_miou(net, val, cfg.batch_size)?
        };
        history.push(EpochStat {
            epoch,
            iteration,
            lr: last_lr,
            loss: loss_sum / batches_per_epoch as f64,
            miou,
        });
        if miou > best_miou {
            best_miou = miou;
            best_epoch = epoch;
            best_weights = net.params().snapshot();
        }
    }
    Ok(TrainReport {
        history,
        best_miou,
        best_epoch,
        best_weights,
    })
}
