//! Dense rank-4 tensors (batch x channel x height x width) in f64, plus the
//! forward kernels every layer is built from. Data is contiguous row-major
//! with width fastest.

mod conv;
mod elementwise;
mod norm;
mod pool;
mod resize;

pub(crate) mod parallel;

pub use conv::{
    conv1d_channels, conv1d_channels_input_grad, conv1d_channels_kernel_grad, conv2d,
    conv2d_bias_grad, conv2d_input_grad, conv2d_reference, conv2d_weight_grad, transposed_conv2d,
    Conv2dSpec,
};
pub use elementwise::{
    broadcast_add, broadcast_mul, channel_shuffle, concat_channels, grad_reduce_to_shape, prelu,
    prelu_backward, sigmoid, sigmoid_backward, slice_channels,
};
pub use norm::{
    batch_norm_eval, batch_norm_eval_backward, batch_norm_train, batch_norm_train_backward,
    BatchNormCache, BN_EPSILON, BN_MOMENTUM,
};
pub use pool::{
    avg_pool2d, avg_pool2d_backward, channel_max, channel_mean, channel_mean_backward,
    global_avg_pool, global_avg_pool_backward, global_max_pool, max_pool2d, max_pool2d_backward,
    pool_output_extent, routed_max_backward, PoolKind,
};
pub use resize::{bilinear_upsample, bilinear_upsample_backward};

use crate::error::{Error, Result};

/// Extents of a rank-4 tensor. The four axes are batch, channels, height,
/// width; kernel tensors reuse the same container as
/// out-channels x in-channels-per-group x kernel-height x kernel-width.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Shape {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(b: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { b, c, h, w }
    }

    pub fn count(&self) -> usize {
        self.b * self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.b, self.c, self.h, self.w)
    }
}

/// Dense rank-4 array of f64 values.
#[derive(Clone, PartialEq, Debug)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// All extents must be >= 1; this is a structural invariant, so it is
    /// asserted rather than surfaced as a recoverable error.
    pub fn zeros(shape: Shape) -> Self {
        assert!(
            shape.b >= 1 && shape.c >= 1 && shape.h >= 1 && shape.w >= 1,
            "tensor extents must be >= 1, got {shape}"
        );
        Tensor {
            shape,
            data: vec![0.0; shape.count()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.count() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::from_vec",
                expected: format!("{} values for {shape}", shape.count()),
                actual: format!("{}", data.len()),
            });
        }
        assert!(shape.b >= 1 && shape.c >= 1 && shape.h >= 1 && shape.w >= 1);
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor::zeros(shape);
        let mut i = 0;
        for b in 0..shape.b {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        t.data[i] = f(b, c, h, w);
                        i += 1;
                    }
                }
            }
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape::new(1, 1, 1, 1),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, h: usize, w: usize) -> usize {
        ((b * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(b, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, h: usize, w: usize) -> &mut f64 {
        let i = self.index(b, c, h, w);
        &mut self.data[i]
    }

    /// View of one (batch, channel) plane.
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let len = self.shape.plane();
        let start = (b * self.shape.c + c) * len;
        &self.data[start..start + len]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// In-place `self += other` for identically shaped tensors.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Sum of all elements, returned as a 1x1x1x1 tensor.
pub fn sum_all(x: &Tensor) -> Tensor {
    Tensor::scalar(x.sum())
}

pub(crate) fn expect_same_shape(context: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context,
            expected: a.shape().to_string(),
            actual: b.shape().to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        let err = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0; 3]);
        assert!(err.is_err());
    }

    #[test]
    fn indexing_is_row_major_width_fastest() {
        let t = Tensor::from_fn(Shape::new(2, 3, 4, 5), |b, c, h, w| {
            (((b * 3 + c) * 4 + h) * 5 + w) as f64
        });
        for (i, &v) in t.data().iter().enumerate() {
            assert_eq!(v, i as f64);
        }
        assert_eq!(t.at(1, 2, 3, 4), (t.shape().count() - 1) as f64);
    }

    #[test]
    #[should_panic]
    fn zero_extent_is_rejected() {
        let _ = Tensor::zeros(Shape::new(1, 0, 2, 2));
    }
}
