//! Execution context for layer code: runs the tensor kernels eagerly and,
//! when recording, appends one tape record per primitive. The same layer
//! code therefore serves training (tape on), finite-difference probing
//! (train-mode numerics, tape off) and inference (eval numerics, tape off).

use std::sync::Arc;

use super::tape::{Gradients, NodeId, Record, Tape};
use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE_LABEL};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{self, Conv2dSpec, Shape, Tensor};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    Train,
    Eval,
}

/// A value flowing through the graph: the materialized tensor plus, when a
/// tape is recording, its node id.
#[derive(Clone)]
pub struct Val {
    pub(crate) node: Option<NodeId>,
    value: Arc<Tensor>,
}

impl Val {
    pub fn tensor(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }

    pub fn arc(&self) -> Arc<Tensor> {
        Arc::clone(&self.value)
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }
}

/// Queued batch-norm running-statistics update; applied by the owner of the
/// parameter store once the pass finishes.
pub struct BnUpdate {
    pub mean: ParamId,
    pub var: ParamId,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Result of the fused cross-entropy loss.
pub struct CeLoss {
    pub loss: Val,
    /// True when every pixel carried the ignore label; the loss is then 0.
    pub all_ignored: bool,
}

pub struct Flow<'p> {
    params: &'p ParamStore,
    mode: Mode,
    tape: Option<Tape>,
    bn_updates: Vec<BnUpdate>,
}

impl<'p> Flow<'p> {
    pub fn new(params: &'p ParamStore, mode: Mode, record: bool) -> Self {
        Flow {
            params,
            mode,
            tape: if record { Some(Tape::new()) } else { None },
            bn_updates: Vec::new(),
        }
    }

    /// Recording training-mode context.
    pub fn train(params: &'p ParamStore) -> Self {
        Flow::new(params, Mode::Train, true)
    }

    /// Non-recording eval context; forward is a pure function of weights.
    pub fn eval(params: &'p ParamStore) -> Self {
        Flow::new(params, Mode::Eval, false)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn take_bn_updates(&mut self) -> Vec<BnUpdate> {
        std::mem::take(&mut self.bn_updates)
    }

    fn push(&mut self, record: Record, requires_grad: bool, value: Tensor) -> Val {
        self.push_arc(record, requires_grad, Arc::new(value))
    }

    fn push_arc(&mut self, record: Record, requires_grad: bool, value: Arc<Tensor>) -> Val {
        let node = self
            .tape
            .as_mut()
            .map(|tape| tape.push(record, requires_grad, value.shape()));
        Val { node, value }
    }

    fn requires(&self, v: &Val) -> bool {
        match (&self.tape, v.node) {
            (Some(tape), Some(id)) => tape.requires_grad(id),
            _ => false,
        }
    }

    /// Node id of a value; only meaningful while recording.
    fn nid(&self, v: &Val) -> NodeId {
        v.node.expect("value was created outside the recording flow")
    }

    /// Leaf for data that never needs a gradient (e.g. input images).
    pub fn input(&mut self, t: Tensor) -> Val {
        self.push(
            Record::Leaf {
                param: None,
                watched: false,
            },
            false,
            t,
        )
    }

    /// Leaf whose gradient is reported by `backward` (for tests and
    /// gradient checks on non-parameter tensors).
    pub fn watch(&mut self, t: Tensor) -> Val {
        self.push(
            Record::Leaf {
                param: None,
                watched: true,
            },
            true,
            t,
        )
    }

    /// Leaf bound to a stored parameter.
    pub fn param(&mut self, id: ParamId) -> Val {
        let p = self.params.get(id);
        let value = Arc::clone(&p.value);
        let node = self.tape.as_mut().map(|tape| {
            tape.push(
                Record::Leaf {
                    param: Some(id),
                    watched: false,
                },
                p.trainable,
                value.shape(),
            )
        });
        Val { node, value }
    }

    pub fn conv2d(
        &mut self,
        x: &Val,
        w: &Val,
        bias: Option<&Val>,
        spec: Conv2dSpec,
    ) -> Result<Val> {
        let y = tensor::conv2d(x.tensor(), w.tensor(), bias.map(|b| b.tensor()), &spec)?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires =
            self.requires(x) || self.requires(w) || bias.map_or(false, |b| self.requires(b));
        Ok(self.push(
            Record::Conv2d {
                x: self.nid(x),
                w: self.nid(w),
                bias: bias.map(|b| self.nid(b)),
                spec,
                x_val: x.arc(),
                w_val: w.arc(),
            },
            requires,
            y,
        ))
    }

    pub fn transposed_conv2d(
        &mut self,
        x: &Val,
        w: &Val,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Val> {
        let y = tensor::transposed_conv2d(x.tensor(), w.tensor(), stride, padding)?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires = self.requires(x) || self.requires(w);
        Ok(self.push(
            Record::TransposedConv2d {
                x: self.nid(x),
                w: self.nid(w),
                stride,
                padding,
                x_val: x.arc(),
                w_val: w.arc(),
            },
            requires,
            y,
        ))
    }

    pub fn conv1d_channels(&mut self, x: &Val, k: &Val) -> Result<Val> {
        let y = tensor::conv1d_channels(x.tensor(), k.tensor())?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires = self.requires(x) || self.requires(k);
        Ok(self.push(
            Record::Conv1dChannels {
                x: self.nid(x),
                k: self.nid(k),
                x_val: x.arc(),
                k_val: k.arc(),
            },
            requires,
            y,
        ))
    }

    pub fn max_pool2d(
        &mut self,
        x: &Val,
        kernel: (usize, usize),
        stride: (usize, usize),
        ceil: bool,
    ) -> Result<Val> {
        let (y, argmax) = tensor::max_pool2d(x.tensor(), kernel, stride, ceil)?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires = self.requires(x);
        Ok(self.push(
            Record::MaxPool {
                x: self.nid(x),
                argmax,
                x_shape: x.shape(),
            },
            requires,
            y,
        ))
    }

    pub fn avg_pool2d(
        &mut self,
        x: &Val,
        kernel: (usize, usize),
        stride: (usize, usize),
        ceil: bool,
    ) -> Result<Val> {
        let y = tensor::avg_pool2d(x.tensor(), kernel, stride, ceil)?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires = self.requires(x);
        Ok(self.push(
            Record::AvgPool {
                x: self.nid(x),
                kernel,
                stride,
                x_shape: x.shape(),
            },
            requires,
            y,
        ))
    }

    pub fn global_avg_pool(&mut self, x: &Val) -> Val {
        let y = tensor::global_avg_pool(x.tensor());
        if self.tape.is_none() {
            return self.push_untracked(y);
        }
        let requires = self.requires(x);
        self.push(
            Record::GlobalAvgPool {
                x: self.nid(x),
                x_shape: x.shape(),
            },
            requires,
            y,
        )
    }

    pub fn global_max_pool(&mut self, x: &Val) -> Val {
        let (y, argmax) = tensor::global_max_pool(x.tensor());
        if self.tape.is_none() {
            return self.push_untracked(y);
        }
        let requires = self.requires(x);
        self.push(
            Record::RoutedMax {
                x: self.nid(x),
                argmax,
                x_shape: x.shape(),
            },
            requires,
            y,
        )
    }

    pub fn channel_mean(&mut self, x: &Val) -> Val {
        let y = tensor::channel_mean(x.tensor());
        if self.tape.is_none() {
            return self.push_untracked(y);
        }
        let requires = self.requires(x);
        self.push(
            Record::ChannelMean {
                x: self.nid(x),
                x_shape: x.shape(),
            },
            requires,
            y,
        )
    }

    pub fn channel_max(&mut self, x: &Val) -> Val {
        let (y, argmax) = tensor::channel_max(x.tensor());
        if self.tape.is_none() {
            return self.push_untracked(y);
        }
        let requires = self.requires(x);
        self.push(
            Record::RoutedMax {
                x: self.nid(x),
                argmax,
                x_shape: x.shape(),
            },
            requires,
            y,
        )
    }

    pub fn upsample(&mut self, x: &Val, factor: usize) -> Result<Val> {
        let y = tensor::bilinear_upsample(x.tensor(), factor)?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires = self.requires(x);
        Ok(self.push(
            Record::Upsample {
                x: self.nid(x),
                factor,
                x_shape: x.shape(),
            },
            requires,
            y,
        ))
    }

    /// Batch normalization driven by the flow mode. Training mode
    /// normalizes by batch statistics and queues a running-stat update;
    /// eval mode applies the frozen statistics.
    pub fn batch_norm(
        &mut self,
        x: &Val,
        gamma: ParamId,
        beta: ParamId,
        running_mean: ParamId,
        running_var: ParamId,
    ) -> Result<Val> {
        let g = self.param(gamma);
        let b = self.param(beta);
        match self.mode {
            Mode::Train => {
                let (y, cache, batch_mean, batch_var) =
                    tensor::batch_norm_train(x.tensor(), g.tensor(), b.tensor())?;
                self.bn_updates.push(BnUpdate {
                    mean: running_mean,
                    var: running_var,
                    batch_mean,
                    batch_var,
                });
                if self.tape.is_none() {
                    return Ok(self.push_untracked(y));
                }
                let requires = self.requires(x) || self.requires(&g) || self.requires(&b);
                Ok(self.push(
                    Record::BatchNormTrain {
                        x: self.nid(x),
                        gamma: self.nid(&g),
                        beta: self.nid(&b),
                        cache,
                        gamma_val: g.arc(),
                    },
                    requires,
                    y,
                ))
            }
            Mode::Eval => {
                let rm: Vec<f64> = self.params.value(running_mean).data().to_vec();
                let rv: Vec<f64> = self.params.value(running_var).data().to_vec();
                let y = tensor::batch_norm_eval(x.tensor(), g.tensor(), b.tensor(), &rm, &rv)?;
                if self.tape.is_none() {
                    return Ok(self.push_untracked(y));
                }
                let requires = self.requires(x) || self.requires(&g) || self.requires(&b);
                Ok(self.push(
                    Record::BatchNormEval {
                        x: self.nid(x),
                        gamma: self.nid(&g),
                        beta: self.nid(&b),
                        x_val: x.arc(),
                        gamma_val: g.arc(),
                        running_mean: rm,
                        running_var: rv,
                    },
                    requires,
                    y,
                ))
            }
        }
    }

    pub fn add(&mut self, a: &Val, b: &Val) -> Result<Val> {
        let y = tensor::broadcast_add(a.tensor(), b.tensor())?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires = self.requires(a) || self.requires(b);
        Ok(self.push(
            Record::Add {
                a: self.nid(a),
                b: self.nid(b),
                a_shape: a.shape(),
                b_shape: b.shape(),
            },
            requires,
            y,
        ))
    }

    pub fn mul(&mut self, a: &Val, b: &Val) -> Result<Val> {
        let y = tensor::broadcast_mul(a.tensor(), b.tensor())?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires = self.requires(a) || self.requires(b);
        Ok(self.push(
            Record::Mul {
                a: self.nid(a),
                b: self.nid(b),
                a_val: a.arc(),
                b_val: b.arc(),
            },
            requires,
            y,
        ))
    }

    pub fn sigmoid(&mut self, x: &Val) -> Val {
        let y = Arc::new(tensor::sigmoid(x.tensor()));
        if self.tape.is_none() {
            return Val {
                node: None,
                value: y,
            };
        }
        let requires = self.requires(x);
        let record = Record::Sigmoid {
            x: self.nid(x),
            y_val: Arc::clone(&y),
        };
        self.push_arc(record, requires, y)
    }

    pub fn prelu(&mut self, x: &Val, slope: &Val) -> Result<Val> {
        let y = tensor::prelu(x.tensor(), slope.tensor())?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires = self.requires(x) || self.requires(slope);
        Ok(self.push(
            Record::Prelu {
                x: self.nid(x),
                slope: self.nid(slope),
                x_val: x.arc(),
                slope_val: slope.arc(),
            },
            requires,
            y,
        ))
    }

    pub fn concat(&mut self, xs: &[&Val]) -> Result<Val> {
        let tensors: Vec<&Tensor> = xs.iter().map(|v| v.tensor()).collect();
        let y = tensor::concat_channels(&tensors)?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires = xs.iter().any(|v| self.requires(v));
        Ok(self.push(
            Record::Concat {
                xs: xs.iter().map(|v| (self.nid(v), v.shape().c)).collect(),
            },
            requires,
            y,
        ))
    }

    pub fn shuffle(&mut self, x: &Val, groups: usize) -> Result<Val> {
        let y = tensor::channel_shuffle(x.tensor(), groups)?;
        if self.tape.is_none() {
            return Ok(self.push_untracked(y));
        }
        let requires = self.requires(x);
        Ok(self.push(
            Record::Shuffle {
                x: self.nid(x),
                groups,
            },
            requires,
            y,
        ))
    }

    pub fn sum_all(&mut self, x: &Val) -> Val {
        let y = tensor::sum_all(x.tensor());
        if self.tape.is_none() {
            return self.push_untracked(y);
        }
        let requires = self.requires(x);
        self.push(
            Record::SumAll {
                x: self.nid(x),
                x_shape: x.shape(),
            },
            requires,
            y,
        )
    }

    /// Softmax cross-entropy over the channel axis, averaged over
    /// non-ignored pixels (weighted mean when `class_weights` is given).
    pub fn cross_entropy(
        &mut self,
        logits: &Val,
        labels: &LabelMap,
        class_weights: Option<&[f64]>,
    ) -> Result<CeLoss> {
        let ls = logits.shape();
        let (lb, lh, lw) = labels.dims();
        if (lb, lh, lw) != (ls.b, ls.h, ls.w) {
            return Err(Error::ShapeMismatch {
                context: "cross_entropy labels",
                expected: format!("{}x{}x{}", ls.b, ls.h, ls.w),
                actual: format!("{lb}x{lh}x{lw}"),
            });
        }
        let k = ls.c;
        if let Some(w) = class_weights {
            if w.len() != k {
                return Err(Error::ShapeMismatch {
                    context: "cross_entropy class weights",
                    expected: format!("{k}"),
                    actual: format!("{}", w.len()),
                });
            }
        }

        let data = logits.tensor().data();
        let plane = ls.plane();
        let mut grad_unit = Tensor::zeros(ls);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        let mut scratch = vec![0.0f64; k];
        for b in 0..ls.b {
            for h in 0..ls.h {
                for w in 0..ls.w {
                    let y = labels.at(b, h, w);
                    if y == IGNORE_LABEL {
                        continue;
                    }
                    if y as usize >= k {
                        return Err(Error::LabelOutOfRange {
                            value: y,
                            classes: k,
                        });
                    }
                    let pix = h * ls.w + w;
                    let mut maxv = f64::NEG_INFINITY;
                    for c in 0..k {
                        let v = data[(b * k + c) * plane + pix];
                        scratch[c] = v;
                        if v > maxv {
                            maxv = v;
                        }
                    }
                    let mut denom = 0.0;
                    for v in scratch.iter_mut() {
                        *v = (*v - maxv).exp();
                        denom += *v;
                    }
                    let wy = class_weights.map_or(1.0, |cw| cw[y as usize]);
                    let p_true = scratch[y as usize] / denom;
                    loss_sum += -wy * p_true.ln();
                    weight_sum += wy;
                    for c in 0..k {
                        let softmax = scratch[c] / denom;
                        let onehot = if c == y as usize { 1.0 } else { 0.0 };
                        grad_unit.data_mut()[(b * k + c) * plane + pix] = wy * (softmax - onehot);
                    }
                }
            }
        }
        let all_ignored = weight_sum == 0.0;
        let loss_value = if all_ignored { 0.0 } else { loss_sum / weight_sum };
        if !all_ignored {
            grad_unit.scale(1.0 / weight_sum);
        }

        let loss = if self.tape.is_none() {
            self.push_untracked(Tensor::scalar(loss_value))
        } else {
            let requires = self.requires(logits);
            self.push(
                Record::CrossEntropy {
                    logits: self.nid(logits),
                    grad_unit,
                },
                requires,
                Tensor::scalar(loss_value),
            )
        };
        Ok(CeLoss { loss, all_ignored })
    }

    /// Run the reverse pass from a scalar loss. Consumes the tape; calling
    /// twice on one flow is rejected.
    pub fn backward(&mut self, loss: &Val) -> Result<Gradients> {
        let tape = self.tape.as_mut().ok_or(Error::TapeConsumed)?;
        let node = loss.node.ok_or(Error::TapeConsumed)?;
        tape.backward(node)
    }

    fn push_untracked(&mut self, t: Tensor) -> Val {
        Val {
            node: None,
            value: Arc::new(t),
        }
    }
}
