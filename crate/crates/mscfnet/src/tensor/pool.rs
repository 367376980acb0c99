//! Window pooling, global pooling, and the per-pixel channel reductions used
//! by spatial attention. Max-flavoured reductions return the winning flat
//! index per output element (first index wins ties) so backward can route
//! gradients exactly.

use super::{Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

/// Pooled extent along one axis. `ceil` permits partial windows clamped to
/// the input edge (needed when a pooling branch must match a stride-2
/// convolution on odd extents).
pub fn pool_output_extent(input: usize, kernel: usize, stride: usize, ceil: bool) -> Result<usize> {
    if ceil {
        let n = input as isize - kernel as isize;
        let q = if n <= 0 {
            0
        } else {
            (n as usize).div_ceil(stride)
        };
        Ok(q + 1)
    } else {
        if input < kernel {
            return Err(Error::EmptyWindow {
                kh: kernel,
                kw: kernel,
                h: input,
                w: input,
            });
        }
        Ok((input - kernel) / stride + 1)
    }
}

fn pool_shapes(
    x: Shape,
    kernel: (usize, usize),
    stride: (usize, usize),
    ceil: bool,
) -> Result<Shape> {
    if !ceil && (x.h < kernel.0 || x.w < kernel.1) {
        return Err(Error::EmptyWindow {
            kh: kernel.0,
            kw: kernel.1,
            h: x.h,
            w: x.w,
        });
    }
    let oh = pool_output_extent(x.h, kernel.0, stride.0, ceil)?;
    let ow = pool_output_extent(x.w, kernel.1, stride.1, ceil)?;
    Ok(Shape::new(x.b, x.c, oh, ow))
}

/// Window-wise maximum. Returns the output and, per output element, the flat
/// index into `x` of the maximum (row-major scan, first index on ties).
pub fn max_pool2d(
    x: &Tensor,
    kernel: (usize, usize),
    stride: (usize, usize),
    ceil: bool,
) -> Result<(Tensor, Vec<usize>)> {
    let xs = x.shape();
    let os = pool_shapes(xs, kernel, stride, ceil)?;
    let mut out = Tensor::zeros(os);
    let mut argmax = vec![0usize; os.count()];
    let xd = x.data();
    let mut o = 0;
    for b in 0..xs.b {
        for c in 0..xs.c {
            let base = (b * xs.c + c) * xs.plane();
            for oh in 0..os.h {
                let h0 = oh * stride.0;
                let h1 = (h0 + kernel.0).min(xs.h);
                for ow in 0..os.w {
                    let w0 = ow * stride.1;
                    let w1 = (w0 + kernel.1).min(xs.w);
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = base + h0 * xs.w + w0;
                    for h in h0..h1 {
                        for w in w0..w1 {
                            let i = base + h * xs.w + w;
                            if xd[i] > best {
                                best = xd[i];
                                best_i = i;
                            }
                        }
                    }
                    out.data_mut()[o] = best;
                    argmax[o] = best_i;
                    o += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn max_pool2d_backward(grad_out: &Tensor, argmax: &[usize], x_shape: Shape) -> Tensor {
    let mut gx = Tensor::zeros(x_shape);
    for (g, &i) in grad_out.data().iter().zip(argmax.iter()) {
        gx.data_mut()[i] += g;
    }
    gx
}

/// Window-wise mean; partial (clamped) windows average over their actual
/// element count.
pub fn avg_pool2d(
    x: &Tensor,
    kernel: (usize, usize),
    stride: (usize, usize),
    ceil: bool,
) -> Result<Tensor> {
    let xs = x.shape();
    let os = pool_shapes(xs, kernel, stride, ceil)?;
    let mut out = Tensor::zeros(os);
    let xd = x.data();
    let mut o = 0;
    for b in 0..xs.b {
        for c in 0..xs.c {
            let base = (b * xs.c + c) * xs.plane();
            for oh in 0..os.h {
                let h0 = oh * stride.0;
                let h1 = (h0 + kernel.0).min(xs.h);
                for ow in 0..os.w {
                    let w0 = ow * stride.1;
                    let w1 = (w0 + kernel.1).min(xs.w);
                    let mut acc = 0.0;
                    for h in h0..h1 {
                        for w in w0..w1 {
                            acc += xd[base + h * xs.w + w];
                        }
                    }
                    out.data_mut()[o] = acc / ((h1 - h0) * (w1 - w0)) as f64;
                    o += 1;
                }
            }
        }
    }
    Ok(out)
}

pub fn avg_pool2d_backward(
    grad_out: &Tensor,
    kernel: (usize, usize),
    stride: (usize, usize),
    x_shape: Shape,
) -> Tensor {
    let os = grad_out.shape();
    let mut gx = Tensor::zeros(x_shape);
    let mut o = 0;
    for b in 0..x_shape.b {
        for c in 0..x_shape.c {
            let base = (b * x_shape.c + c) * x_shape.plane();
            for oh in 0..os.h {
                let h0 = oh * stride.0;
                let h1 = (h0 + kernel.0).min(x_shape.h);
                for ow in 0..os.w {
                    let w0 = ow * stride.1;
                    let w1 = (w0 + kernel.1).min(x_shape.w);
                    let g = grad_out.data()[o] / ((h1 - h0) * (w1 - w0)) as f64;
                    for h in h0..h1 {
                        for w in w0..w1 {
                            gx.data_mut()[base + h * x_shape.w + w] += g;
                        }
                    }
                    o += 1;
                }
            }
        }
    }
    gx
}

/// Reduce height x width to 1x1 by averaging.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let xs = x.shape();
    let n = xs.plane() as f64;
    let mut out = Tensor::zeros(Shape::new(xs.b, xs.c, 1, 1));
    for b in 0..xs.b {
        for c in 0..xs.c {
            out.data_mut()[b * xs.c + c] = x.plane(b, c).iter().sum::<f64>() / n;
        }
    }
    out
}

pub fn global_avg_pool_backward(grad_out: &Tensor, x_shape: Shape) -> Tensor {
    let inv = 1.0 / x_shape.plane() as f64;
    let mut gx = Tensor::zeros(x_shape);
    for b in 0..x_shape.b {
        for c in 0..x_shape.c {
            let g = grad_out.at(b, c, 0, 0) * inv;
            let base = (b * x_shape.c + c) * x_shape.plane();
            for i in 0..x_shape.plane() {
                gx.data_mut()[base + i] = g;
            }
        }
    }
    gx
}

/// Reduce height x width to 1x1 by maximum; also returns the flat winner
/// index per (batch, channel).
pub fn global_max_pool(x: &Tensor) -> (Tensor, Vec<usize>) {
    let xs = x.shape();
    let mut out = Tensor::zeros(Shape::new(xs.b, xs.c, 1, 1));
    let mut argmax = vec![0usize; xs.b * xs.c];
    for b in 0..xs.b {
        for c in 0..xs.c {
            let base = (b * xs.c + c) * xs.plane();
            let plane = x.plane(b, c);
            let mut best = f64::NEG_INFINITY;
            let mut best_i = base;
            for (i, &v) in plane.iter().enumerate() {
                if v > best {
                    best = v;
                    best_i = base + i;
                }
            }
            out.data_mut()[b * xs.c + c] = best;
            argmax[b * xs.c + c] = best_i;
        }
    }
    (out, argmax)
}

/// Per-pixel mean over channels: BxCxHxW -> Bx1xHxW.
pub fn channel_mean(x: &Tensor) -> Tensor {
    let xs = x.shape();
    let n = xs.c as f64;
    let mut out = Tensor::zeros(Shape::new(xs.b, 1, xs.h, xs.w));
    for b in 0..xs.b {
        for c in 0..xs.c {
            let plane = x.plane(b, c);
            let obase = b * xs.plane();
            for (i, &v) in plane.iter().enumerate() {
                out.data_mut()[obase + i] += v;
            }
        }
        let obase = b * xs.plane();
        for i in 0..xs.plane() {
            out.data_mut()[obase + i] /= n;
        }
    }
    out
}

pub fn channel_mean_backward(grad_out: &Tensor, x_shape: Shape) -> Tensor {
    let inv = 1.0 / x_shape.c as f64;
    let mut gx = Tensor::zeros(x_shape);
    for b in 0..x_shape.b {
        let gplane = grad_out.plane(b, 0);
        for c in 0..x_shape.c {
            let base = (b * x_shape.c + c) * x_shape.plane();
            for (i, &g) in gplane.iter().enumerate() {
                gx.data_mut()[base + i] = g * inv;
            }
        }
    }
    gx
}

/// Per-pixel maximum over channels: BxCxHxW -> Bx1xHxW, with the winning
/// channel's flat index per pixel.
pub fn channel_max(x: &Tensor) -> (Tensor, Vec<usize>) {
    let xs = x.shape();
    let plane = xs.plane();
    let mut out = Tensor::zeros(Shape::new(xs.b, 1, xs.h, xs.w));
    let mut argmax = vec![0usize; xs.b * plane];
    for b in 0..xs.b {
        for i in 0..plane {
            let mut best = f64::NEG_INFINITY;
            let mut best_flat = 0;
            for c in 0..xs.c {
                let flat = (b * xs.c + c) * plane + i;
                let v = x.data()[flat];
                if v > best {
                    best = v;
                    best_flat = flat;
                }
            }
            out.data_mut()[b * plane + i] = best;
            argmax[b * plane + i] = best_flat;
        }
    }
    (out, argmax)
}

pub fn routed_max_backward(grad_out: &Tensor, argmax: &[usize], x_shape: Shape) -> Tensor {
    let mut gx = Tensor::zeros(x_shape);
    for (g, &i) in grad_out.data().iter().zip(argmax.iter()) {
        gx.data_mut()[i] += g;
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> Tensor {
        Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn max_pool_2x2() {
        let (y, arg) = max_pool2d(&quad(), (2, 2), (2, 2), false).unwrap();
        assert_eq!(y.item(), 4.0);
        assert_eq!(arg, vec![3]);
    }

    #[test]
    fn avg_pool_2x2() {
        let y = avg_pool2d(&quad(), (2, 2), (2, 2), false).unwrap();
        assert_eq!(y.item(), 2.5);
    }

    #[test]
    fn global_avg_of_ones() {
        let x = Tensor::filled(Shape::new(1, 8, 7, 7), 1.0);
        let y = global_avg_pool(&x);
        assert_eq!(y.shape(), Shape::new(1, 8, 1, 1));
        assert!(y.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn max_tie_routes_to_first_index() {
        let x = Tensor::filled(Shape::new(1, 1, 2, 2), 5.0);
        let (_, arg) = max_pool2d(&x, (2, 2), (2, 2), false).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn window_must_fit_without_ceil() {
        let x = Tensor::zeros(Shape::new(1, 1, 1, 4));
        assert!(max_pool2d(&x, (2, 2), (2, 2), false).is_err());
    }

    #[test]
    fn ceil_mode_matches_strided_conv_extent() {
        // 23 -> 12 under a stride-2 pad-1 3x3 conv; clamped pooling agrees.
        let x = Tensor::zeros(Shape::new(1, 1, 23, 23));
        let (y, _) = max_pool2d(&x, (2, 2), (2, 2), true).unwrap();
        assert_eq!(y.shape().h, 12);
        assert_eq!(y.shape().w, 12);
    }

    #[test]
    fn channel_reductions() {
        let x = Tensor::from_fn(Shape::new(1, 3, 1, 2), |_, c, _, w| (c * 2 + w) as f64);
        let mean = channel_mean(&x);
        assert_eq!(mean.data(), &[2.0, 3.0]);
        let (max, arg) = channel_max(&x);
        assert_eq!(max.data(), &[4.0, 5.0]);
        assert_eq!(arg, vec![4, 5]);
    }
}
