//! Confusion-matrix segmentation metrics: per-class IoU and the mean over
//! classes present in either prediction or reference.

use crate::labels::{LabelMap, IGNORE_LABEL};
use crate::tensor::Tensor;

/// KxK matrix of pixel counts; rows are reference classes, columns are
/// predicted classes. Ignore-labelled pixels are excluded from all counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Metrics {
    classes: usize,
    matrix: Vec<u64>,
}

impl Metrics {
    pub fn new(classes: usize) -> Self {
        Metrics {
            classes,
            matrix: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, reference: usize, predicted: usize) -> u64 {
        self.matrix[reference * self.classes + predicted]
    }

    pub fn total_pixels(&self) -> u64 {
        self.matrix.iter().sum()
    }

    pub fn update(&mut self, predictions: &LabelMap, labels: &LabelMap) {
        assert_eq!(predictions.dims(), labels.dims(), "metrics shape mismatch");
        for (&p, &y) in predictions.data().iter().zip(labels.data().iter()) {
            if y == IGNORE_LABEL {
                continue;
            }
            let (p, y) = (p as usize, y as usize);
            assert!(y < self.classes && p < self.classes, "label out of range");
            self.matrix[y * self.classes + p] += 1;
        }
    }

    /// Confusion matrices are additive across batches.
    pub fn merge(&mut self, other: &Metrics) {
        assert_eq!(self.classes, other.classes);
        for (a, b) in self.matrix.iter_mut().zip(other.matrix.iter()) {
            *a += b;
        }
    }

    /// Per-class IoU = TP / (TP + FP + FN); `None` for classes absent from
    /// both prediction and reference.
    pub fn iou(&self) -> Vec<Option<f64>> {
        let k = self.classes;
        (0..k)
            .map(|c| {
                let tp = self.matrix[c * k + c];
                let fp: u64 = (0..k).filter(|&r| r != c).map(|r| self.matrix[r * k + c]).sum();
                let fn_: u64 = (0..k).filter(|&p| p != c).map(|p| self.matrix[c * k + p]).sum();
                let denom = tp + fp + fn_;
                if denom == 0 {
                    None
                } else {
                    Some(tp as f64 / denom as f64)
                }
            })
            .collect()
    }

    /// Mean IoU over present classes; absent when the matrix is empty.
    pub fn miou(&self) -> Option<f64> {
        let present: Vec<f64> = self.iou().into_iter().flatten().collect();
        if present.is_empty() {
            None
        } else {
            Some(present.iter().sum::<f64>() / present.len() as f64)
        }
    }
}

/// Channel-axis argmax of logits, first class wins ties.
pub fn argmax_predictions(logits: &Tensor) -> LabelMap {
    let s = logits.shape();
    let mut out = LabelMap::filled(s.b, s.h, s.w, 0);
    for b in 0..s.b {
        for h in 0..s.h {
            for w in 0..s.w {
                let mut best = f64::NEG_INFINITY;
                let mut best_c = 0u8;
                for c in 0..s.c {
                    let v = logits.at(b, c, h, w);
                    if v > best {
                        best = v;
                        best_c = c as u8;
                    }
                }
                out.set(b, h, w, best_c);
            }
        }
    }
    out
}
