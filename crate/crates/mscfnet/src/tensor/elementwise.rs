//! Elementwise and channel-rearranging primitives: broadcast add/mul,
//! sigmoid, PReLU, channel concatenation and channel shuffle.

use super::{Shape, Tensor};
use crate::error::{Error, Result};

fn broadcast_shape(a: Shape, b: Shape) -> Result<Shape> {
    let merge = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    let out = (|| {
        Some(Shape::new(
            merge(a.b, b.b)?,
            merge(a.c, b.c)?,
            merge(a.h, b.h)?,
            merge(a.w, b.w)?,
        ))
    })();
    out.ok_or_else(|| Error::BroadcastMismatch {
        a: a.to_string(),
        b: b.to_string(),
    })
}

fn strides_for(s: Shape, out: Shape) -> [usize; 4] {
    // stride 0 on broadcast (extent-1) axes
    let full = [s.c * s.h * s.w, s.h * s.w, s.w, 1];
    let ext = [s.b, s.c, s.h, s.w];
    let oext = [out.b, out.c, out.h, out.w];
    let mut st = [0usize; 4];
    for i in 0..4 {
        st[i] = if ext[i] == oext[i] { full[i] } else { 0 };
    }
    st
}

fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let os = broadcast_shape(a.shape(), b.shape())?;
    let sa = strides_for(a.shape(), os);
    let sb = strides_for(b.shape(), os);
    let mut out = Tensor::zeros(os);
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    let mut o = 0;
    for ib in 0..os.b {
        for ic in 0..os.c {
            for ih in 0..os.h {
                let abase = ib * sa[0] + ic * sa[1] + ih * sa[2];
                let bbase = ib * sb[0] + ic * sb[1] + ih * sb[2];
                for iw in 0..os.w {
                    od[o] = f(ad[abase + iw * sa[3]], bd[bbase + iw * sb[3]]);
                    o += 1;
                }
            }
        }
    }
    Ok(out)
}

pub fn broadcast_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    broadcast_binary(a, b, |x, y| x + y)
}

pub fn broadcast_mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    broadcast_binary(a, b, |x, y| x * y)
}

/// Sum `grad` over the axes that were broadcast to reach its shape, so the
/// result matches `target`.
pub fn grad_reduce_to_shape(grad: &Tensor, target: Shape) -> Tensor {
    if grad.shape() == target {
        return grad.clone();
    }
    let gs = grad.shape();
    let st = strides_for(target, gs);
    let mut out = Tensor::zeros(target);
    let od = out.data_mut();
    let mut g = 0;
    for ib in 0..gs.b {
        for ic in 0..gs.c {
            for ih in 0..gs.h {
                let base = ib * st[0] + ic * st[1] + ih * st[2];
                for iw in 0..gs.w {
                    od[base + iw * st[3]] += grad.data()[g];
                    g += 1;
                }
            }
        }
    }
    out
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| {
        if v >= 0.0 {
            1.0 / (1.0 + (-v).exp())
        } else {
            let e = v.exp();
            e / (1.0 + e)
        }
    })
}

pub fn sigmoid_backward(grad_out: &Tensor, y: &Tensor) -> Tensor {
    let mut gx = grad_out.clone();
    for (g, &s) in gx.data_mut().iter_mut().zip(y.data().iter()) {
        *g *= s * (1.0 - s);
    }
    gx
}

/// PReLU with one slope per channel (slope tensor 1xCx1x1):
/// `y = x if x > 0 else slope_c * x`.
pub fn prelu(x: &Tensor, slope: &Tensor) -> Result<Tensor> {
    let xs = x.shape();
    if slope.shape() != Shape::new(1, xs.c, 1, 1) {
        return Err(Error::ShapeMismatch {
            context: "prelu slope",
            expected: format!("1x{}x1x1", xs.c),
            actual: slope.shape().to_string(),
        });
    }
    let mut out = Tensor::zeros(xs);
    for b in 0..xs.b {
        for c in 0..xs.c {
            let a = slope.data()[c];
            let base = (b * xs.c + c) * xs.plane();
            for i in 0..xs.plane() {
                let v = x.data()[base + i];
                out.data_mut()[base + i] = if v > 0.0 { v } else { a * v };
            }
        }
    }
    Ok(out)
}

/// Returns (grad_x, grad_slope).
pub fn prelu_backward(grad_out: &Tensor, x: &Tensor, slope: &Tensor) -> (Tensor, Tensor) {
    let xs = x.shape();
    let mut gx = Tensor::zeros(xs);
    let mut gs = Tensor::zeros(Shape::new(1, xs.c, 1, 1));
    for b in 0..xs.b {
        for c in 0..xs.c {
            let a = slope.data()[c];
            let base = (b * xs.c + c) * xs.plane();
            let mut acc = 0.0;
            for i in 0..xs.plane() {
                let v = x.data()[base + i];
                let g = grad_out.data()[base + i];
                if v > 0.0 {
                    gx.data_mut()[base + i] = g;
                } else {
                    gx.data_mut()[base + i] = g * a;
                    acc += g * v;
                }
            }
            gs.data_mut()[c] += acc;
        }
    }
    (gx, gs)
}

/// Concatenate along the channel axis; inputs must agree on batch and
/// spatial extents.
pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    assert!(!xs.is_empty(), "concat_channels of nothing");
    let first = xs[0].shape();
    let mut channels = 0;
    for t in xs {
        let s = t.shape();
        if (s.b, s.h, s.w) != (first.b, first.h, first.w) {
            return Err(Error::ShapeMismatch {
                context: "concat_channels",
                expected: format!("{}x_x{}x{}", first.b, first.h, first.w),
                actual: s.to_string(),
            });
        }
        channels += s.c;
    }
    let os = Shape::new(first.b, channels, first.h, first.w);
    let mut out = Tensor::zeros(os);
    let plane = first.plane();
    for b in 0..os.b {
        let mut c_off = 0;
        for t in xs {
            let tc = t.shape().c;
            let src_start = b * tc * plane;
            let dst_start = (b * channels + c_off) * plane;
            out.data_mut()[dst_start..dst_start + tc * plane]
                .copy_from_slice(&t.data()[src_start..src_start + tc * plane]);
            c_off += tc;
        }
    }
    Ok(out)
}

/// Copy of the channel range `[c0, c1)`; the backward of `concat_channels`.
pub fn slice_channels(x: &Tensor, c0: usize, c1: usize) -> Tensor {
    let xs = x.shape();
    let os = Shape::new(xs.b, c1 - c0, xs.h, xs.w);
    let plane = xs.plane();
    let mut out = Tensor::zeros(os);
    for b in 0..xs.b {
        let src = (b * xs.c + c0) * plane;
        let dst = b * (c1 - c0) * plane;
        out.data_mut()[dst..dst + (c1 - c0) * plane]
            .copy_from_slice(&x.data()[src..src + (c1 - c0) * plane]);
    }
    out
}

/// Channel shuffle: view channels as groups x (C/groups), transpose,
/// flatten. Source channel `g*(C/groups)+i` lands at `i*groups+g`.
pub fn channel_shuffle(x: &Tensor, groups: usize) -> Result<Tensor> {
    let xs = x.shape();
    if groups == 0 || xs.c % groups != 0 {
        return Err(Error::GroupMismatch {
            context: "channel_shuffle",
            groups,
            channels: xs.c,
        });
    }
    let per = xs.c / groups;
    let plane = xs.plane();
    let mut out = Tensor::zeros(xs);
    for b in 0..xs.b {
        for g in 0..groups {
            for i in 0..per {
                let src = (b * xs.c + g * per + i) * plane;
                let dst = (b * xs.c + i * groups + g) * plane;
                out.data_mut()[dst..dst + plane].copy_from_slice(&x.data()[src..src + plane]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(sigmoid(&Tensor::scalar(0.0)).item(), 0.5);
    }

    #[test]
    fn prelu_negative_slope() {
        let x = Tensor::scalar(-2.0);
        let a = Tensor::scalar(0.25);
        assert_eq!(prelu(&x, &a).unwrap().item(), -0.5);
    }

    #[test]
    fn spatial_map_broadcasts_over_channels() {
        let x = Tensor::from_fn(Shape::new(2, 3, 2, 2), |b, c, h, w| {
            (b * 100 + c * 10 + h * 2 + w) as f64
        });
        let map = Tensor::from_fn(Shape::new(2, 1, 2, 2), |b, _, h, w| {
            0.5 + (b + h + w) as f64 * 0.1
        });
        let y = broadcast_mul(&x, &map).unwrap();
        for b in 0..2 {
            for c in 0..3 {
                for h in 0..2 {
                    for w in 0..2 {
                        assert_eq!(y.at(b, c, h, w), x.at(b, c, h, w) * map.at(b, 0, h, w));
                    }
                }
            }
        }
    }

    #[test]
    fn incompatible_broadcast_rejected() {
        let a = Tensor::zeros(Shape::new(1, 3, 2, 2));
        let b = Tensor::zeros(Shape::new(1, 2, 2, 2));
        assert!(matches!(
            broadcast_add(&a, &b),
            Err(Error::BroadcastMismatch { .. })
        ));
    }

    #[test]
    fn grad_reduce_sums_broadcast_axes() {
        let g = Tensor::filled(Shape::new(2, 3, 2, 2), 1.0);
        let r = grad_reduce_to_shape(&g, Shape::new(2, 1, 2, 2));
        assert!(r.data().iter().all(|&v| v == 3.0));
        let r2 = grad_reduce_to_shape(&g, Shape::new(1, 3, 1, 1));
        assert!(r2.data().iter().all(|&v| v == 8.0));
    }

    #[test]
    fn shuffle_interleaves_two_groups() {
        let x = Tensor::from_fn(Shape::new(1, 4, 1, 2), |_, c, _, _| c as f64);
        let y = channel_shuffle(&x, 2).unwrap();
        let per_channel: Vec<f64> = (0..4).map(|c| y.at(0, c, 0, 0)).collect();
        assert_eq!(per_channel, vec![0.0, 2.0, 1.0, 3.0]);
    }

    #[test]
    fn shuffle_group_one_is_identity() {
        let x = Tensor::from_fn(Shape::new(2, 6, 2, 2), |b, c, h, w| {
            (b * 24 + c * 4 + h * 2 + w) as f64
        });
        assert_eq!(channel_shuffle(&x, 1).unwrap(), x);
    }

    #[test]
    fn shuffle_round_trip_is_identity() {
        let x = Tensor::from_fn(Shape::new(1, 12, 1, 1), |_, c, _, _| c as f64);
        for g in [2, 3, 4, 6] {
            let y = channel_shuffle(&channel_shuffle(&x, g).unwrap(), 12 / g).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn concat_then_slice_round_trip() {
        let a = Tensor::from_fn(Shape::new(2, 2, 2, 2), |b, c, h, w| (b + c + h + w) as f64);
        let b = Tensor::from_fn(Shape::new(2, 3, 2, 2), |b_, c, h, w| {
            -((b_ + c + h + w) as f64)
        });
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape().c, 5);
        assert_eq!(slice_channels(&cat, 0, 2), a);
        assert_eq!(slice_channels(&cat, 2, 5), b);
    }
}
