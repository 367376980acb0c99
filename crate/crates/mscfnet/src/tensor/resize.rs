//! Bilinear upsampling by an integer factor using the half-pixel
//! (align-corners-false) convention: source coordinate
//! `(dst + 0.5) / factor - 0.5`, clamped to the input range.

use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Per-axis interpolation taps: destination index -> (lo, hi, weight of hi).
fn axis_taps(out_len: usize, factor: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|dst| {
            let src = (dst as f64 + 0.5) / factor as f64 - 0.5;
            let src = src.clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

pub fn bilinear_upsample(x: &Tensor, factor: usize) -> Result<Tensor> {
    if !matches!(factor, 1 | 2 | 4) {
        return Err(Error::BadUpsampleFactor(factor));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let xs = x.shape();
    let os = Shape::new(xs.b, xs.c, xs.h * factor, xs.w * factor);
    let h_taps = axis_taps(os.h, factor, xs.h);
    let w_taps = axis_taps(os.w, factor, xs.w);
    let mut out = Tensor::zeros(os);
    for b in 0..xs.b {
        for c in 0..xs.c {
            let src = x.plane(b, c);
            let obase = (b * os.c + c) * os.plane();
            for (oh, &(h0, h1, th)) in h_taps.iter().enumerate() {
                let row0 = &src[h0 * xs.w..(h0 + 1) * xs.w];
                let row1 = &src[h1 * xs.w..(h1 + 1) * xs.w];
                let orow = obase + oh * os.w;
                for (ow, &(w0, w1, tw)) in w_taps.iter().enumerate() {
                    let top = row0[w0] * (1.0 - tw) + row0[w1] * tw;
                    let bot = row1[w0] * (1.0 - tw) + row1[w1] * tw;
                    out.data_mut()[orow + ow] = top * (1.0 - th) + bot * th;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of `bilinear_upsample`: scatter each output gradient back onto
/// its four source taps.
pub fn bilinear_upsample_backward(grad_out: &Tensor, factor: usize, x_shape: Shape) -> Tensor {
    if factor == 1 {
        return grad_out.clone();
    }
    let os = grad_out.shape();
    let h_taps = axis_taps(os.h, factor, x_shape.h);
    let w_taps = axis_taps(os.w, factor, x_shape.w);
    let mut gx = Tensor::zeros(x_shape);
    for b in 0..x_shape.b {
        for c in 0..x_shape.c {
            let gbase = (b * os.c + c) * os.plane();
            let xbase = (b * x_shape.c + c) * x_shape.plane();
            for (oh, &(h0, h1, th)) in h_taps.iter().enumerate() {
                for (ow, &(w0, w1, tw)) in w_taps.iter().enumerate() {
                    let g = grad_out.data()[gbase + oh * os.w + ow];
                    let gxd = gx.data_mut();
                    gxd[xbase + h0 * x_shape.w + w0] += g * (1.0 - th) * (1.0 - tw);
                    gxd[xbase + h0 * x_shape.w + w1] += g * (1.0 - th) * tw;
                    gxd[xbase + h1 * x_shape.w + w0] += g * th * (1.0 - tw);
                    gxd[xbase + h1 * x_shape.w + w1] += g * th * tw;
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_tensor_stays_constant() {
        for factor in [1, 2, 4] {
            let x = Tensor::filled(Shape::new(1, 2, 3, 5), 7.5);
            let y = bilinear_upsample(&x, factor).unwrap();
            assert_eq!(y.shape(), Shape::new(1, 2, 3 * factor, 5 * factor));
            assert!(y.data().iter().all(|&v| v == 7.5));
        }
    }

    #[test]
    fn factor_one_is_bitwise_identity() {
        let x = Tensor::from_fn(Shape::new(1, 1, 2, 2), |_, _, h, w| (h + w) as f64 + 0.25);
        let y = bilinear_upsample(&x, 1).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn half_pixel_row_doubling() {
        // [0, 1] x2 -> [0, 0.25, 0.75, 1] from the half-pixel formula with
        // edge clamping.
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![0.0, 1.0]).unwrap();
        let y = bilinear_upsample(&x, 2).unwrap();
        let expect = [0.0, 0.25, 0.75, 1.0];
        for (a, e) in y.data().iter().zip(expect.iter()) {
            assert!((a - e).abs() < 1e-15, "{:?}", y.data());
        }
    }

    #[test]
    fn unsupported_factor_rejected() {
        let x = Tensor::zeros(Shape::new(1, 1, 2, 2));
        assert!(bilinear_upsample(&x, 3).is_err());
    }
}
