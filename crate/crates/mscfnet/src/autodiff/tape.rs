//! Reverse-mode tape: an ordered list of recorded primitive applications.
//! Each record keeps its input node ids plus whatever forward state the
//! adjoint needs. Records are appended in execution order, so parents always
//! precede children and one reverse sweep visits every node exactly once.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::params::ParamId;
use crate::tensor::{self, BatchNormCache, Conv2dSpec, Shape, Tensor};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(pub(crate) usize);

pub(crate) enum Record {
    Leaf {
        param: Option<ParamId>,
        watched: bool,
    },
    Conv2d {
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
        spec: Conv2dSpec,
        x_val: Arc<Tensor>,
        w_val: Arc<Tensor>,
    },
    TransposedConv2d {
        x: NodeId,
        w: NodeId,
        stride: (usize, usize),
        padding: (usize, usize),
        x_val: Arc<Tensor>,
        w_val: Arc<Tensor>,
    },
    Conv1dChannels {
        x: NodeId,
        k: NodeId,
        x_val: Arc<Tensor>,
        k_val: Arc<Tensor>,
    },
    MaxPool {
        x: NodeId,
        argmax: Vec<usize>,
        x_shape: Shape,
    },
    AvgPool {
        x: NodeId,
        kernel: (usize, usize),
        stride: (usize, usize),
        x_shape: Shape,
    },
    GlobalAvgPool {
        x: NodeId,
        x_shape: Shape,
    },
    /// Shared by global max pool and per-pixel channel max: the forward
    /// stored one winning flat input index per output element.
    RoutedMax {
        x: NodeId,
        argmax: Vec<usize>,
        x_shape: Shape,
    },
    ChannelMean {
        x: NodeId,
        x_shape: Shape,
    },
    Upsample {
        x: NodeId,
        factor: usize,
        x_shape: Shape,
    },
    BatchNormTrain {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        cache: BatchNormCache,
        gamma_val: Arc<Tensor>,
    },
    BatchNormEval {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        x_val: Arc<Tensor>,
        gamma_val: Arc<Tensor>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    Add {
        a: NodeId,
        b: NodeId,
        a_shape: Shape,
        b_shape: Shape,
    },
    Mul {
        a: NodeId,
        b: NodeId,
        a_val: Arc<Tensor>,
        b_val: Arc<Tensor>,
    },
    Sigmoid {
        x: NodeId,
        y_val: Arc<Tensor>,
    },
    Prelu {
        x: NodeId,
        slope: NodeId,
        x_val: Arc<Tensor>,
        slope_val: Arc<Tensor>,
    },
    Concat {
        xs: Vec<(NodeId, usize)>,
    },
    Shuffle {
        x: NodeId,
        groups: usize,
    },
    SumAll {
        x: NodeId,
        x_shape: Shape,
    },
    /// The fused softmax + NLL loss; `grad_unit` is the exact gradient of
    /// the loss value with respect to the logits.
    CrossEntropy {
        logits: NodeId,
        grad_unit: Tensor,
    },
}

pub(crate) struct Node {
    pub record: Record,
    pub requires_grad: bool,
    pub shape: Shape,
}

#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by one backward pass.
pub struct Gradients {
    /// (parameter, gradient) pairs; a parameter reached through several
    /// leaves appears once per leaf and callers accumulate by addition.
    pub by_param: Vec<(ParamId, Tensor)>,
    /// Gradients of watched leaves, in creation order.
    pub by_node: Vec<(NodeId, Tensor)>,
}

impl Gradients {
    pub fn for_node(&self, id: NodeId) -> Option<&Tensor> {
        self.by_node.iter().find(|(n, _)| *n == id).map(|(_, g)| g)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, record: Record, requires_grad: bool, shape: Shape) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            record,
            requires_grad,
            shape,
        });
        id
    }

    pub(crate) fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Reverse-topological accumulation from a scalar loss node. Consumes
    /// the tape: a second call is rejected.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        let loss_shape = self.nodes[loss.0].shape;
        if loss_shape.count() != 1 {
            return Err(Error::NonScalarLoss(loss_shape.to_string()));
        }

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients {
            by_param: Vec::new(),
            by_node: Vec::new(),
        };

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            // Local helper: accumulate into a parent slot.
            macro_rules! accum {
                ($parent:expr, $delta:expr) => {{
                    let p: NodeId = $parent;
                    if self.nodes[p.0].requires_grad {
                        let delta: Tensor = $delta;
                        match &mut grads[p.0] {
                            Some(t) => t.add_assign(&delta),
                            slot @ None => *slot = Some(delta),
                        }
                    }
                }};
            }
            match &self.nodes[idx].record {
                Record::Leaf { param, watched } => {
                    if let Some(pid) = param {
                        out.by_param.push((*pid, g.clone()));
                    }
                    if *watched {
                        out.by_node.push((NodeId(idx), g));
                    }
                }
                Record::Conv2d {
                    x,
                    w,
                    bias,
                    spec,
                    x_val,
                    w_val,
                } => {
                    if self.nodes[x.0].requires_grad {
                        accum!(*x, tensor::conv2d_input_grad(&g, w_val, spec, x_val.shape()));
                    }
                    if self.nodes[w.0].requires_grad {
                        accum!(*w, tensor::conv2d_weight_grad(x_val, &g, spec, w_val.shape()));
                    }
                    if let Some(b) = bias {
                        accum!(*b, tensor::conv2d_bias_grad(&g));
                    }
                }
                Record::TransposedConv2d {
                    x,
                    w,
                    stride,
                    padding,
                    x_val,
                    w_val,
                } => {
                    let spec = Conv2dSpec {
                        stride: *stride,
                        padding: *padding,
                        dilation: (1, 1),
                        groups: 1,
                    };
                    if self.nodes[x.0].requires_grad {
                        accum!(*x, tensor::conv2d(&g, w_val, None, &spec)?);
                    }
                    if self.nodes[w.0].requires_grad {
                        accum!(*w, tensor::conv2d_weight_grad(&g, x_val, &spec, w_val.shape()));
                    }
                }
                Record::Conv1dChannels { x, k, x_val, k_val } => {
                    if self.nodes[x.0].requires_grad {
                        accum!(*x, tensor::conv1d_channels_input_grad(&g, k_val));
                    }
                    if self.nodes[k.0].requires_grad {
                        accum!(
                            *k,
                            tensor::conv1d_channels_kernel_grad(
                                x_val,
                                &g,
                                k_val.shape().count()
                            )
                        );
                    }
                }
                Record::MaxPool { x, argmax, x_shape } | Record::RoutedMax { x, argmax, x_shape } => {
                    accum!(*x, tensor::routed_max_backward(&g, argmax, *x_shape));
                }
                Record::AvgPool {
                    x,
                    kernel,
                    stride,
                    x_shape,
                } => {
                    accum!(*x, tensor::avg_pool2d_backward(&g, *kernel, *stride, *x_shape));
                }
                Record::GlobalAvgPool { x, x_shape } => {
                    accum!(*x, tensor::global_avg_pool_backward(&g, *x_shape));
                }
                Record::ChannelMean { x, x_shape } => {
                    accum!(*x, tensor::channel_mean_backward(&g, *x_shape));
                }
                Record::Upsample { x, factor, x_shape } => {
                    accum!(*x, tensor::bilinear_upsample_backward(&g, *factor, *x_shape));
                }
                Record::BatchNormTrain {
                    x,
                    gamma,
                    beta,
                    cache,
                    gamma_val,
                } => {
                    let (gx, ggamma, gbeta) = tensor::batch_norm_train_backward(&g, cache, gamma_val);
                    accum!(*x, gx);
                    accum!(*gamma, ggamma);
                    accum!(*beta, gbeta);
                }
                Record::BatchNormEval {
                    x,
                    gamma,
                    beta,
                    x_val,
                    gamma_val,
                    running_mean,
                    running_var,
                } => {
                    let (gx, ggamma, gbeta) = tensor::batch_norm_eval_backward(
                        &g,
                        x_val,
                        gamma_val,
                        running_mean,
                        running_var,
                    );
                    accum!(*x, gx);
                    accum!(*gamma, ggamma);
                    accum!(*beta, gbeta);
                }
                Record::Add {
                    a,
                    b,
                    a_shape,
                    b_shape,
                } => {
                    accum!(*a, tensor::grad_reduce_to_shape(&g, *a_shape));
                    accum!(*b, tensor::grad_reduce_to_shape(&g, *b_shape));
                }
                Record::Mul { a, b, a_val, b_val } => {
                    if self.nodes[a.0].requires_grad {
                        let ga = tensor::broadcast_mul(&g, b_val)?;
                        accum!(*a, tensor::grad_reduce_to_shape(&ga, a_val.shape()));
                    }
                    if self.nodes[b.0].requires_grad {
                        let gb = tensor::broadcast_mul(&g, a_val)?;
                        accum!(*b, tensor::grad_reduce_to_shape(&gb, b_val.shape()));
                    }
                }
                Record::Sigmoid { x, y_val } => {
                    accum!(*x, tensor::sigmoid_backward(&g, y_val));
                }
                Record::Prelu {
                    x,
                    slope,
                    x_val,
                    slope_val,
                } => {
                    let (gx, gs) = tensor::prelu_backward(&g, x_val, slope_val);
                    accum!(*x, gx);
                    accum!(*slope, gs);
                }
                Record::Concat { xs } => {
                    let mut c0 = 0;
                    for (src, channels) in xs.clone() {
                        accum!(src, tensor::slice_channels(&g, c0, c0 + channels));
                        c0 += channels;
                    }
                }
                Record::Shuffle { x, groups } => {
                    let c = g.shape().c;
                    accum!(*x, tensor::channel_shuffle(&g, c / groups)?);
                }
                Record::SumAll { x, x_shape } => {
                    accum!(*x, Tensor::filled(*x_shape, g.item()));
                }
                Record::CrossEntropy { logits, grad_unit } => {
                    let mut gl = grad_unit.clone();
                    gl.scale(g.item());
                    accum!(*logits, gl);
                }
            }
        }
        Ok(out)
    }
}
