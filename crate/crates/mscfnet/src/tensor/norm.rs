//! Batch normalization over the channel axis.

use super::{Shape, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// State saved by a training-mode forward pass, enough to run the exact
/// backward through the batch statistics.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    /// Normalized input (pre-affine).
    pub xhat: Tensor,
    /// Per-channel 1/sqrt(var + eps).
    pub inv_std: Vec<f64>,
}

fn check_affine(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<()> {
    let c = x.shape().c;
    for (name, t) in [("gamma", gamma), ("beta", beta)] {
        if t.shape() != Shape::new(1, c, 1, 1) {
            return Err(Error::ShapeMismatch {
                context: "batch_norm affine",
                expected: format!("1x{c}x1x1 {name}"),
                actual: t.shape().to_string(),
            });
        }
    }
    Ok(())
}

/// Training mode: normalize by the per-channel batch mean/variance
/// (population variance) and report the batch statistics so the caller can
/// fold them into its running estimates with momentum.
pub fn batch_norm_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(Tensor, BatchNormCache, Vec<f64>, Vec<f64>)> {
    check_affine(x, gamma, beta)?;
    let xs = x.shape();
    let n = (xs.b * xs.plane()) as f64;
    let mut mean = vec![0.0; xs.c];
    let mut var = vec![0.0; xs.c];
    for c in 0..xs.c {
        let mut acc = 0.0;
        for b in 0..xs.b {
            acc += x.plane(b, c).iter().sum::<f64>();
        }
        mean[c] = acc / n;
        let mut sq = 0.0;
        for b in 0..xs.b {
            for &v in x.plane(b, c) {
                let d = v - mean[c];
                sq += d * d;
            }
        }
        var[c] = sq / n;
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut xhat = Tensor::zeros(xs);
    let mut out = Tensor::zeros(xs);
    for b in 0..xs.b {
        for c in 0..xs.c {
            let (g, bt) = (gamma.data()[c], beta.data()[c]);
            let base = (b * xs.c + c) * xs.plane();
            for i in 0..xs.plane() {
                let h = (x.data()[base + i] - mean[c]) * inv_std[c];
                xhat.data_mut()[base + i] = h;
                out.data_mut()[base + i] = g * h + bt;
            }
        }
    }
    Ok((out, BatchNormCache { xhat, inv_std }, mean, var))
}

/// Evaluation mode: normalize by frozen running statistics.
pub fn batch_norm_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &[f64],
    running_var: &[f64],
) -> Result<Tensor> {
    check_affine(x, gamma, beta)?;
    let xs = x.shape();
    let mut out = Tensor::zeros(xs);
    for c in 0..xs.c {
        let inv = 1.0 / (running_var[c] + BN_EPSILON).sqrt();
        let scale = gamma.data()[c] * inv;
        let shift = beta.data()[c] - running_mean[c] * scale;
        for b in 0..xs.b {
            let base = (b * xs.c + c) * xs.plane();
            for i in 0..xs.plane() {
                out.data_mut()[base + i] = x.data()[base + i] * scale + shift;
            }
        }
    }
    Ok(out)
}

/// Backward through a training-mode forward. Returns (grad_x, grad_gamma,
/// grad_beta); the gamma/beta gradients are per-channel 1xCx1x1 tensors.
pub fn batch_norm_train_backward(
    grad_out: &Tensor,
    cache: &BatchNormCache,
    gamma: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let xs = grad_out.shape();
    let n = (xs.b * xs.plane()) as f64;
    let mut ggamma = Tensor::zeros(Shape::new(1, xs.c, 1, 1));
    let mut gbeta = Tensor::zeros(Shape::new(1, xs.c, 1, 1));
    let mut gx = Tensor::zeros(xs);
    for c in 0..xs.c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for b in 0..xs.b {
            let base = (b * xs.c + c) * xs.plane();
            for i in 0..xs.plane() {
                let g = grad_out.data()[base + i];
                sum_g += g;
                sum_gx += g * cache.xhat.data()[base + i];
            }
        }
        ggamma.data_mut()[c] = sum_gx;
        gbeta.data_mut()[c] = sum_g;
        let k = gamma.data()[c] * cache.inv_std[c] / n;
        for b in 0..xs.b {
            let base = (b * xs.c + c) * xs.plane();
            for i in 0..xs.plane() {
                let g = grad_out.data()[base + i];
                let h = cache.xhat.data()[base + i];
                gx.data_mut()[base + i] = k * (n * g - sum_g - h * sum_gx);
            }
        }
    }
    (gx, ggamma, gbeta)
}

/// Backward through an evaluation-mode forward (a per-channel affine map).
pub fn batch_norm_eval_backward(
    grad_out: &Tensor,
    x: &Tensor,
    gamma: &Tensor,
    running_mean: &[f64],
    running_var: &[f64],
) -> (Tensor, Tensor, Tensor) {
    let xs = grad_out.shape();
    let mut ggamma = Tensor::zeros(Shape::new(1, xs.c, 1, 1));
    let mut gbeta = Tensor::zeros(Shape::new(1, xs.c, 1, 1));
    let mut gx = Tensor::zeros(xs);
    for c in 0..xs.c {
        let inv = 1.0 / (running_var[c] + BN_EPSILON).sqrt();
        let scale = gamma.data()[c] * inv;
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for b in 0..xs.b {
            let base = (b * xs.c + c) * xs.plane();
            for i in 0..xs.plane() {
                let g = grad_out.data()[base + i];
                sum_g += g;
                sum_gx += g * (x.data()[base + i] - running_mean[c]) * inv;
                gx.data_mut()[base + i] = g * scale;
            }
        }
        ggamma.data_mut()[c] = sum_gx;
        gbeta.data_mut()[c] = sum_g;
    }
    (gx, ggamma, gbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_with_identity_stats_is_near_identity() {
        let x = Tensor::from_fn(Shape::new(2, 3, 2, 2), |b, c, h, w| {
            (b + c + h + w) as f64 * 0.5 - 1.0
        });
        let gamma = Tensor::filled(Shape::new(1, 3, 1, 1), 1.0);
        let beta = Tensor::zeros(Shape::new(1, 3, 1, 1));
        let y = batch_norm_eval(&x, &gamma, &beta, &[0.0; 3], &[1.0; 3]).unwrap();
        // only the epsilon in 1/sqrt(1 + eps) separates output from input
        for (a, b) in y.data().iter().zip(x.data().iter()) {
            assert!((a - b).abs() <= b.abs() * 1e-5 + 1e-12);
        }
    }

    #[test]
    fn train_mode_normalizes_per_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::from_fn(Shape::new(4, 3, 5, 6), |_, _, _, _| rng.gen_range(-3.0..5.0));
        let gamma = Tensor::filled(Shape::new(1, 3, 1, 1), 1.0);
        let beta = Tensor::zeros(Shape::new(1, 3, 1, 1));
        let (_, cache, _, _) = batch_norm_train(&x, &gamma, &beta).unwrap();
        let xs = x.shape();
        let n = (xs.b * xs.plane()) as f64;
        for c in 0..3 {
            let mut mean = 0.0;
            let mut var = 0.0;
            for b in 0..xs.b {
                for i in 0..xs.plane() {
                    mean += cache.xhat.plane(b, c)[i];
                }
            }
            mean /= n;
            for b in 0..xs.b {
                for i in 0..xs.plane() {
                    let d = cache.xhat.plane(b, c)[i] - mean;
                    var += d * d;
                }
            }
            var /= n;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-4); // epsilon shrinks variance slightly
        }
    }

    #[test]
    fn affine_parameters_apply_after_normalization() {
        let x = Tensor::from_fn(Shape::new(2, 1, 2, 2), |b, _, h, w| (b * 4 + h * 2 + w) as f64);
        let gamma = Tensor::filled(Shape::new(1, 1, 1, 1), 2.0);
        let beta = Tensor::filled(Shape::new(1, 1, 1, 1), 3.0);
        let (y, cache, _, _) = batch_norm_train(&x, &gamma, &beta).unwrap();
        for (out, xh) in y.data().iter().zip(cache.xhat.data().iter()) {
            assert!((out - (2.0 * xh + 3.0)).abs() < 1e-12);
        }
    }
}
