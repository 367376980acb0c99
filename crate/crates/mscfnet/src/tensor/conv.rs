//! 2-D convolution family: grouped/dilated/strided conv with independent
//! per-axis kernel extents, its exact adjoint (transposed convolution), and
//! the cross-channel 1-D convolution used by channel attention.
//!
//! `conv2d` is the optimized path (shifted-row accumulation, parallel over
//! output planes); `conv2d_reference` is the naive-loop reference the
//! optimized path must match. Both sum kernel taps in the same order, so
//! they agree bitwise, not merely within tolerance.

use super::parallel::for_each_chunk_mut;
use super::{Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    /// (height, width)
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub dilation: (usize, usize),
    pub groups: usize,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec {
            stride: (1, 1),
            padding: (0, 0),
            dilation: (1, 1),
            groups: 1,
        }
    }
}

impl Conv2dSpec {
    pub fn with_padding(ph: usize, pw: usize) -> Self {
        Conv2dSpec {
            padding: (ph, pw),
            ..Default::default()
        }
    }

    fn out_extent(&self, axis_in: usize, kernel: usize, axis: usize) -> isize {
        let (s, p, d) = if axis == 0 {
            (self.stride.0, self.padding.0, self.dilation.0)
        } else {
            (self.stride.1, self.padding.1, self.dilation.1)
        };
        let numer = axis_in as isize + 2 * p as isize - (d * (kernel - 1)) as isize - 1;
        if numer < 0 {
            return -1;
        }
        numer / s as isize + 1
    }

    /// Output shape for input `x` and kernel extents `(kh, kw)`, or an error
    /// when the configuration collapses to an empty output.
    pub fn output_shape(&self, x: Shape, oc: usize, kh: usize, kw: usize) -> Result<Shape> {
        let oh = self.out_extent(x.h, kh, 0);
        let ow = self.out_extent(x.w, kw, 1);
        if oh < 1 || ow < 1 {
            return Err(Error::EmptyOutput { h: oh, w: ow });
        }
        Ok(Shape::new(x.b, oc, oh as usize, ow as usize))
    }
}

fn validate(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, spec: &Conv2dSpec) -> Result<()> {
    let g = spec.groups;
    let (xs, ws) = (x.shape(), weight.shape());
    if g == 0 || xs.c % g != 0 {
        return Err(Error::GroupMismatch {
            context: "conv2d input",
            groups: g,
            channels: xs.c,
        });
    }
    if ws.b % g != 0 {
        return Err(Error::GroupMismatch {
            context: "conv2d output",
            groups: g,
            channels: ws.b,
        });
    }
    if ws.c != xs.c / g {
        return Err(Error::ShapeMismatch {
            context: "conv2d kernel in-channels",
            expected: format!("{}", xs.c / g),
            actual: format!("{}", ws.c),
        });
    }
    if let Some(b) = bias {
        let bs = b.shape();
        if bs != Shape::new(1, ws.b, 1, 1) {
            return Err(Error::ShapeMismatch {
                context: "conv2d bias",
                expected: format!("1x{}x1x1", ws.b),
                actual: bs.to_string(),
            });
        }
    }
    Ok(())
}

/// Output index range `[start, end)` along one axis such that
/// `out*stride + offset` lands inside `[0, in_len)`.
#[inline]
fn valid_range(out_len: usize, stride: usize, offset: isize, in_len: usize) -> (usize, usize) {
    let start = if offset >= 0 {
        0
    } else {
        ((-offset) as usize).div_ceil(stride)
    };
    let last = in_len as isize - 1 - offset;
    if last < 0 {
        return (0, 0);
    }
    let end = (last as usize / stride + 1).min(out_len);
    (start.min(end), end)
}

/// out_row[o0..o1] += w * in_row[(o*stride + offset)], contiguous fast path
/// for stride 1.
#[inline]
fn axpy_shifted(
    out_row: &mut [f64],
    in_row: &[f64],
    wgt: f64,
    o0: usize,
    o1: usize,
    stride: usize,
    offset: isize,
) {
    if o1 <= o0 {
        return;
    }
    if stride == 1 {
        let i0 = (o0 as isize + offset) as usize;
        let n = o1 - o0;
        let dst = &mut out_row[o0..o0 + n];
        let src = &in_row[i0..i0 + n];
        for j in 0..n {
            dst[j] += wgt * src[j];
        }
    } else {
        for o in o0..o1 {
            let i = (o * stride) as isize + offset;
            out_row[o] += wgt * in_row[i as usize];
        }
    }
}

/// Grouped 2-D convolution with zero padding. Kernel layout is
/// out-channels x in-channels-per-group x kh x kw; depthwise is
/// `groups == channels`.
pub fn conv2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    spec: &Conv2dSpec,
) -> Result<Tensor> {
    validate(x, weight, bias, spec)?;
    let (xs, ws) = (x.shape(), weight.shape());
    let (kh, kw) = (ws.h, ws.w);
    let out_shape = spec.output_shape(xs, ws.b, kh, kw)?;
    let (oh_len, ow_len) = (out_shape.h, out_shape.w);
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let (dh, dw) = spec.dilation;
    let icg = ws.c;
    let ocg = ws.b / spec.groups;

    let mut out = Tensor::zeros(out_shape);
    let plane_len = out_shape.plane();
    for_each_chunk_mut(out.data_mut(), plane_len, |p, plane| {
        let b = p / ws.b;
        let oc = p % ws.b;
        let group = oc / ocg;
        if let Some(bias) = bias {
            plane.fill(bias.data()[oc]);
        }
        for ic_in_g in 0..icg {
            let ic = group * icg + ic_in_g;
            let xplane = x.plane(b, ic);
            for k_h in 0..kh {
                let h_off = (k_h * dh) as isize - ph as isize;
                let (oh0, oh1) = valid_range(oh_len, sh, h_off, xs.h);
                for k_w in 0..kw {
                    let wgt = weight.at(oc, ic_in_g, k_h, k_w);
                    let w_off = (k_w * dw) as isize - pw as isize;
                    let (ow0, ow1) = valid_range(ow_len, sw, w_off, xs.w);
                    for oh in oh0..oh1 {
                        let ih = ((oh * sh) as isize + h_off) as usize;
                        axpy_shifted(
                            &mut plane[oh * ow_len..(oh + 1) * ow_len],
                            &xplane[ih * xs.w..(ih + 1) * xs.w],
                            wgt,
                            ow0,
                            ow1,
                            sw,
                            w_off,
                        );
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Naive per-output-element convolution; the correctness reference for
/// `conv2d`.
pub fn conv2d_reference(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    spec: &Conv2dSpec,
) -> Result<Tensor> {
    validate(x, weight, bias, spec)?;
    let (xs, ws) = (x.shape(), weight.shape());
    let out_shape = spec.output_shape(xs, ws.b, ws.h, ws.w)?;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let (dh, dw) = spec.dilation;
    let icg = ws.c;
    let ocg = ws.b / spec.groups;

    let mut out = Tensor::zeros(out_shape);
    for b in 0..out_shape.b {
        for oc in 0..out_shape.c {
            let group = oc / ocg;
            for oh in 0..out_shape.h {
                for ow in 0..out_shape.w {
                    let mut acc = bias.map_or(0.0, |t| t.data()[oc]);
                    for ic_in_g in 0..icg {
                        let ic = group * icg + ic_in_g;
                        for k_h in 0..ws.h {
                            let ih = (oh * sh + k_h * dh) as isize - ph as isize;
                            if ih < 0 || ih >= xs.h as isize {
                                continue;
                            }
                            for k_w in 0..ws.w {
                                let iw = (ow * sw + k_w * dw) as isize - pw as isize;
                                if iw < 0 || iw >= xs.w as isize {
                                    continue;
                                }
                                acc += weight.at(oc, ic_in_g, k_h, k_w)
                                    * x.at(b, ic, ih as usize, iw as usize);
                            }
                        }
                    }
                    *out.at_mut(b, oc, oh, ow) = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of `conv2d` with respect to its input: the exact linear adjoint.
/// `x_shape` pins the input extents (stride may make them ambiguous).
pub fn conv2d_input_grad(
    grad_out: &Tensor,
    weight: &Tensor,
    spec: &Conv2dSpec,
    x_shape: Shape,
) -> Tensor {
    let ws = weight.shape();
    let gs = grad_out.shape();
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let (dh, dw) = spec.dilation;
    let icg = ws.c;
    let ocg = ws.b / spec.groups;

    let mut gx = Tensor::zeros(x_shape);
    let plane_len = x_shape.plane();
    for_each_chunk_mut(gx.data_mut(), plane_len, |p, plane| {
        let b = p / x_shape.c;
        let ic = p % x_shape.c;
        let group = ic / icg;
        let ic_in_g = ic % icg;
        for oc_in_g in 0..ocg {
            let oc = group * ocg + oc_in_g;
            let gplane = grad_out.plane(b, oc);
            for k_h in 0..ws.h {
                let h_off = (k_h * dh) as isize - ph as isize;
                let (oh0, oh1) = valid_range(gs.h, sh, h_off, x_shape.h);
                for k_w in 0..ws.w {
                    let wgt = weight.at(oc, ic_in_g, k_h, k_w);
                    let w_off = (k_w * dw) as isize - pw as isize;
                    let (ow0, ow1) = valid_range(gs.w, sw, w_off, x_shape.w);
                    if ow1 <= ow0 {
                        continue;
                    }
                    for oh in oh0..oh1 {
                        let ih = ((oh * sh) as isize + h_off) as usize;
                        let grow = &gplane[oh * gs.w..(oh + 1) * gs.w];
                        let xrow = &mut plane[ih * x_shape.w..(ih + 1) * x_shape.w];
                        if sw == 1 {
                            let i0 = (ow0 as isize + w_off) as usize;
                            let n = ow1 - ow0;
                            let dst = &mut xrow[i0..i0 + n];
                            let src = &grow[ow0..ow0 + n];
                            for j in 0..n {
                                dst[j] += wgt * src[j];
                            }
                        } else {
                            for ow in ow0..ow1 {
                                let iw = (ow * sw) as isize + w_off;
                                xrow[iw as usize] += wgt * grow[ow];
                            }
                        }
                    }
                }
            }
        }
    });
    gx
}

/// Gradient of `conv2d` with respect to its kernel.
pub fn conv2d_weight_grad(
    x: &Tensor,
    grad_out: &Tensor,
    spec: &Conv2dSpec,
    weight_shape: Shape,
) -> Tensor {
    let xs = x.shape();
    let gs = grad_out.shape();
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let (dh, dw) = spec.dilation;
    let icg = weight_shape.c;
    let ocg = weight_shape.b / spec.groups;

    let mut gw = Tensor::zeros(weight_shape);
    let per_oc = icg * weight_shape.h * weight_shape.w;
    for_each_chunk_mut(gw.data_mut(), per_oc, |oc, chunk| {
        let group = oc / ocg;
        let mut i = 0;
        for ic_in_g in 0..icg {
            let ic = group * icg + ic_in_g;
            for k_h in 0..weight_shape.h {
                let h_off = (k_h * dh) as isize - ph as isize;
                let (oh0, oh1) = valid_range(gs.h, sh, h_off, xs.h);
                for k_w in 0..weight_shape.w {
                    let w_off = (k_w * dw) as isize - pw as isize;
                    let (ow0, ow1) = valid_range(gs.w, sw, w_off, xs.w);
                    let mut acc = 0.0;
                    for b in 0..xs.b {
                        let xplane = x.plane(b, ic);
                        let gplane = grad_out.plane(b, oc);
                        for oh in oh0..oh1 {
                            let ih = ((oh * sh) as isize + h_off) as usize;
                            let xrow = &xplane[ih * xs.w..(ih + 1) * xs.w];
                            let grow = &gplane[oh * gs.w..(oh + 1) * gs.w];
                            if sw == 1 && ow1 > ow0 {
                                let i0 = (ow0 as isize + w_off) as usize;
                                let n = ow1 - ow0;
                                let a = &grow[ow0..ow0 + n];
                                let v = &xrow[i0..i0 + n];
                                for j in 0..n {
                                    acc += a[j] * v[j];
                                }
                            } else {
                                for ow in ow0..ow1 {
                                    let iw = (ow * sw) as isize + w_off;
                                    acc += grow[ow] * xrow[iw as usize];
                                }
                            }
                        }
                    }
                    chunk[i] = acc;
                    i += 1;
                }
            }
        }
    });
    gw
}

/// Per-output-channel sum of `grad_out`, as a 1xCx1x1 tensor.
pub fn conv2d_bias_grad(grad_out: &Tensor) -> Tensor {
    let gs = grad_out.shape();
    let mut gb = Tensor::zeros(Shape::new(1, gs.c, 1, 1));
    for b in 0..gs.b {
        for c in 0..gs.c {
            gb.data_mut()[c] += grad_out.plane(b, c).iter().sum::<f64>();
        }
    }
    gb
}

/// Transposed (fractionally strided) convolution: the linear adjoint of
/// `conv2d` with the same stride/padding. Kernel layout is
/// in-channels x out-channels x kh x kw, so the first kernel axis must match
/// the input's channel count.
pub fn transposed_conv2d(
    x: &Tensor,
    weight: &Tensor,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor> {
    let (xs, ws) = (x.shape(), weight.shape());
    if ws.b != xs.c {
        return Err(Error::ShapeMismatch {
            context: "transposed_conv2d kernel in-channels",
            expected: format!("{}", xs.c),
            actual: format!("{}", ws.b),
        });
    }
    let oh = (xs.h - 1) as isize * stride.0 as isize - 2 * padding.0 as isize + ws.h as isize;
    let ow = (xs.w - 1) as isize * stride.1 as isize - 2 * padding.1 as isize + ws.w as isize;
    if oh < 1 || ow < 1 {
        return Err(Error::EmptyOutput { h: oh, w: ow });
    }
    let out_shape = Shape::new(xs.b, ws.c, oh as usize, ow as usize);
    let spec = Conv2dSpec {
        stride,
        padding,
        dilation: (1, 1),
        groups: 1,
    };
    Ok(conv2d_input_grad(x, weight, &spec, out_shape))
}

/// Cross-channel 1-D convolution on a BxCx1x1 tensor: every channel vector
/// is convolved with one shared odd-length kernel, zero padded so the shape
/// is preserved. The kernel is stored as 1x1x1xK.
pub fn conv1d_channels(v: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    let vs = v.shape();
    let k = kernel.shape().count();
    if k % 2 == 0 {
        return Err(Error::EvenKernel(k));
    }
    if vs.h != 1 || vs.w != 1 {
        return Err(Error::ShapeMismatch {
            context: "conv1d_channels input",
            expected: "Bx Cx1x1 descriptor".into(),
            actual: vs.to_string(),
        });
    }
    let r = (k - 1) / 2;
    let kd = kernel.data();
    let mut out = Tensor::zeros(vs);
    for b in 0..vs.b {
        for c in 0..vs.c {
            let mut acc = 0.0;
            for (j, &kj) in kd.iter().enumerate() {
                let src = c as isize + j as isize - r as isize;
                if src >= 0 && (src as usize) < vs.c {
                    acc += kj * v.at(b, src as usize, 0, 0);
                }
            }
            *out.at_mut(b, c, 0, 0) = acc;
        }
    }
    Ok(out)
}

pub fn conv1d_channels_input_grad(grad_out: &Tensor, kernel: &Tensor) -> Tensor {
    let gs = grad_out.shape();
    let kd = kernel.data();
    let r = (kd.len() - 1) / 2;
    let mut gx = Tensor::zeros(gs);
    for b in 0..gs.b {
        for m in 0..gs.c {
            let mut acc = 0.0;
            for (j, &kj) in kd.iter().enumerate() {
                let i = m as isize - j as isize + r as isize;
                if i >= 0 && (i as usize) < gs.c {
                    acc += kj * grad_out.at(b, i as usize, 0, 0);
                }
            }
            *gx.at_mut(b, m, 0, 0) = acc;
        }
    }
    gx
}

pub fn conv1d_channels_kernel_grad(v: &Tensor, grad_out: &Tensor, kernel_len: usize) -> Tensor {
    let vs = v.shape();
    let r = (kernel_len - 1) / 2;
    let mut gk = Tensor::zeros(Shape::new(1, 1, 1, kernel_len));
    for j in 0..kernel_len {
        let mut acc = 0.0;
        for b in 0..vs.b {
            for i in 0..vs.c {
                let src = i as isize + j as isize - r as isize;
                if src >= 0 && (src as usize) < vs.c {
                    acc += grad_out.at(b, i, 0, 0) * v.at(b, src as usize, 0, 0);
                }
            }
        }
        gk.data_mut()[j] = acc;
    }
    gk
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
        Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    fn inner(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn ones_kernel_counts_overlap() {
        // 3x3 all-ones input and kernel, pad 1: center sees all 9 ones,
        // corners see 4.
        let x = Tensor::filled(Shape::new(1, 1, 3, 3), 1.0);
        let w = Tensor::filled(Shape::new(1, 1, 3, 3), 1.0);
        let y = conv2d(&x, &w, None, &Conv2dSpec::with_padding(1, 1)).unwrap();
        assert_eq!(y.at(0, 0, 1, 1), 9.0);
        for (h, w_) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(y.at(0, 0, h, w_), 4.0);
        }
    }

    #[test]
    fn factorized_pair_matches_outer_product_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..8 {
            let x = random_tensor(&mut rng, Shape::new(1, 1, 8, 8));
            let a = random_tensor(&mut rng, Shape::new(1, 1, 3, 1));
            let b = random_tensor(&mut rng, Shape::new(1, 1, 1, 3));
            let u = conv2d(&x, &a, None, &Conv2dSpec::with_padding(1, 0)).unwrap();
            let y_fact = conv2d(&u, &b, None, &Conv2dSpec::with_padding(0, 1)).unwrap();
            let outer = Tensor::from_fn(Shape::new(1, 1, 3, 3), |_, _, i, j| {
                a.at(0, 0, i, 0) * b.at(0, 0, 0, j)
            });
            let y_dense = conv2d(&x, &outer, None, &Conv2dSpec::with_padding(1, 1)).unwrap();
            assert!(y_fact.max_abs_diff(&y_dense) < 1e-12);
        }
    }

    #[test]
    fn dilated_kernel_samples_stride_two_grid() {
        let x = Tensor::from_fn(Shape::new(1, 1, 5, 5), |_, _, h, w| (h * 5 + w) as f64);
        let w = Tensor::filled(Shape::new(1, 1, 3, 3), 1.0);
        let spec = Conv2dSpec {
            dilation: (2, 2),
            ..Default::default()
        };
        let y = conv2d(&x, &w, None, &spec).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 1, 1));
        let expect: f64 = [0, 2, 4, 10, 12, 14, 20, 22, 24]
            .iter()
            .map(|&i| i as f64)
            .sum();
        assert_eq!(y.item(), expect);
    }

    #[test]
    fn optimized_matches_reference_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cases = [
            (Shape::new(2, 4, 9, 11), Shape::new(6, 4, 3, 3), (1, 1), (1, 1), (1, 1), 1),
            (Shape::new(1, 6, 8, 8), Shape::new(6, 1, 3, 1), (1, 1), (2, 0), (2, 1), 6),
            (Shape::new(2, 6, 8, 8), Shape::new(6, 1, 1, 3), (1, 1), (0, 5), (1, 5), 6),
            (Shape::new(1, 3, 13, 10), Shape::new(8, 3, 3, 3), (2, 2), (1, 1), (1, 1), 1),
            (Shape::new(1, 4, 7, 7), Shape::new(2, 2, 2, 2), (2, 3), (0, 1), (1, 1), 2),
        ];
        for (xs, ws, stride, padding, dilation, groups) in cases {
            let x = random_tensor(&mut rng, xs);
            let w = random_tensor(&mut rng, ws);
            let bias = random_tensor(&mut rng, Shape::new(1, ws.b, 1, 1));
            let spec = Conv2dSpec {
                stride,
                padding,
                dilation,
                groups,
            };
            let fast = conv2d(&x, &w, Some(&bias), &spec).unwrap();
            let slow = conv2d_reference(&x, &w, Some(&bias), &spec).unwrap();
            assert_eq!(fast, slow, "spec {spec:?}");
        }
    }

    #[test]
    fn transposed_broadcasts_single_pixel() {
        let x = Tensor::scalar(3.0);
        let w = Tensor::filled(Shape::new(1, 1, 2, 2), 1.0);
        let y = transposed_conv2d(&x, &w, (2, 2), (0, 0)).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert!(y.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn transposed_size_formula() {
        let x = Tensor::zeros(Shape::new(1, 4, 16, 12));
        let w = Tensor::zeros(Shape::new(4, 3, 2, 2));
        let y = transposed_conv2d(&x, &w, (2, 2), (0, 0)).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 32, 24));
    }

    #[test]
    fn transposed_is_exact_adjoint_of_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // (input, kernel, stride, padding) combinations where the conv size
        // formula wastes no input rows, so the adjoint pair is exact.
        let cases = [
            (Shape::new(2, 3, 8, 8), Shape::new(5, 3, 3, 3), (1, 1), (1, 1)),
            (Shape::new(1, 2, 9, 7), Shape::new(4, 2, 3, 3), (2, 2), (1, 1)),
            (Shape::new(1, 4, 10, 6), Shape::new(4, 4, 2, 2), (2, 2), (0, 0)),
        ];
        for (xs, ws, stride, padding) in cases {
            let x = random_tensor(&mut rng, xs);
            let w = random_tensor(&mut rng, ws);
            let spec = Conv2dSpec {
                stride,
                padding,
                dilation: (1, 1),
                groups: 1,
            };
            let cx = conv2d(&x, &w, None, &spec).unwrap();
            let y = random_tensor(&mut rng, cx.shape());
            let aty = transposed_conv2d(&y, &w, stride, padding).unwrap();
            assert_eq!(aty.shape(), xs);
            let lhs = inner(&cx, &y);
            let rhs = inner(&x, &aty);
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn conv1d_identity_kernel() {
        let v = Tensor::from_fn(Shape::new(2, 5, 1, 1), |b, c, _, _| (b * 10 + c) as f64);
        let k = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.0, 1.0, 0.0]).unwrap();
        let y = conv1d_channels(&v, &k).unwrap();
        assert_eq!(y, v);
    }

    #[test]
    fn conv1d_box_kernel_with_zero_pad() {
        let v = Tensor::from_vec(Shape::new(1, 3, 1, 1), vec![1.0, 2.0, 3.0]).unwrap();
        let k = Tensor::filled(Shape::new(1, 1, 1, 3), 1.0);
        let y = conv1d_channels(&v, &k).unwrap();
        assert_eq!(y.data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv1d_rejects_even_kernel() {
        let v = Tensor::zeros(Shape::new(1, 3, 1, 1));
        let k = Tensor::zeros(Shape::new(1, 1, 1, 4));
        assert!(matches!(conv1d_channels(&v, &k), Err(Error::EvenKernel(4))));
    }

    #[test]
    fn conv1d_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_tensor(&mut rng, Shape::new(3, 17, 1, 1));
        let k = random_tensor(&mut rng, Shape::new(1, 1, 1, 5));
        let y = random_tensor(&mut rng, Shape::new(3, 17, 1, 1));
        let lhs = inner(&conv1d_channels(&v, &k).unwrap(), &y);
        let rhs = inner(&v, &conv1d_channels_input_grad(&y, &k));
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn groups_must_divide_channels() {
        let x = Tensor::zeros(Shape::new(1, 5, 4, 4));
        let w = Tensor::zeros(Shape::new(4, 2, 3, 3));
        let spec = Conv2dSpec {
            groups: 2,
            ..Default::default()
        };
        assert!(matches!(
            conv2d(&x, &w, None, &spec),
            Err(Error::GroupMismatch { .. })
        ));
    }

    #[test]
    fn empty_output_is_an_error() {
        let x = Tensor::zeros(Shape::new(1, 1, 2, 2));
        let w = Tensor::zeros(Shape::new(1, 1, 3, 3));
        assert!(matches!(
            conv2d(&x, &w, None, &Conv2dSpec::default()),
            Err(Error::EmptyOutput { .. })
        ));
    }
}
