//! SGD with momentum, Adam, and the poly learning-rate schedule.

use std::sync::Arc;

use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPSILON: f64 = 1e-8;
pub const POLY_POWER: f64 = 0.9;

/// `lr_base * (1 - iteration/max_iteration)^power`, clamped to 0 past the
/// end.
pub fn poly_lr(lr_base: f64, iteration: usize, max_iteration: usize, power: f64) -> f64 {
    if iteration >= max_iteration {
        return 0.0;
    }
    let frac = 1.0 - iteration as f64 / max_iteration as f64;
    lr_base * frac.powf(power)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

#[derive(Clone, Debug)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr_base: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub epsilon: f64,
}

impl OptimConfig {
    /// SGD recipe (large-set training): momentum 0.9.
    pub fn sgd(lr_base: f64, weight_decay: f64) -> Self {
        OptimConfig {
            kind: OptimizerKind::SgdMomentum,
            lr_base,
            momentum: DEFAULT_MOMENTUM,
            weight_decay,
            betas: ADAM_BETAS,
            epsilon: ADAM_EPSILON,
        }
    }

    /// Adam recipe (small-set training): lr 1e-3, weight decay 2e-4.
    pub fn adam(lr_base: f64, weight_decay: f64) -> Self {
        OptimConfig {
            kind: OptimizerKind::Adam,
            ..OptimConfig::sgd(lr_base, weight_decay)
        }
    }
}

/// Per-parameter state buffers mirror the parameter shapes and are created
/// lazily on the first step.
pub struct Optimizer {
    pub cfg: OptimConfig,
    velocity: Vec<Option<Tensor>>,
    second_moment: Vec<Option<Tensor>>,
    step_count: usize,
}

impl Optimizer {
    pub fn new(cfg: OptimConfig) -> Self {
        Optimizer {
            cfg,
            velocity: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step_count
    }

    /// Apply one update from the accumulated gradients. Weight decay is
    /// classic L2 (folded into the gradient) and skips norm/activation
    /// parameters.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        let n = store.len();
        self.velocity.resize_with(n, || None);
        self.second_moment.resize_with(n, || None);
        self.step_count += 1;
        let t = self.step_count as i32;
        let (beta1, beta2) = self.cfg.betas;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for idx in 0..n {
            let id = crate::params::ParamId(idx);
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let wd = if p.decay_exempt {
                0.0
            } else {
                self.cfg.weight_decay
            };
            let shape = p.value.shape();
            let value: &mut Tensor = Arc::make_mut(&mut p.value);
            match self.cfg.kind {
                OptimizerKind::SgdMomentum => {
                    let vel = self.velocity[idx].get_or_insert_with(|| Tensor::zeros(shape));
                    for j in 0..shape.count() {
                        let g = p.grad.data()[j] + wd * value.data()[j];
                        let v = self.cfg.momentum * vel.data()[j] + g;
                        vel.data_mut()[j] = v;
                        value.data_mut()[j] -= lr * v;
                    }
                }
                OptimizerKind::Adam => {
                    let m = self.velocity[idx].get_or_insert_with(|| Tensor::zeros(shape));
                    let v = self.second_moment[idx].get_or_insert_with(|| Tensor::zeros(shape));
                    for j in 0..shape.count() {
                        let g = p.grad.data()[j] + wd * value.data()[j];
                        let mj = beta1 * m.data()[j] + (1.0 - beta1) * g;
                        let vj = beta2 * v.data()[j] + (1.0 - beta2) * g * g;
                        m.data_mut()[j] = mj;
                        v.data_mut()[j] = vj;
                        let m_hat = mj / bias1;
                        let v_hat = vj / bias2;
                        value.data_mut()[j] -= lr * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn poly_lr_endpoints_and_midpoint() {
        let base = 4.5e-2;
        assert_eq!(poly_lr(base, 0, 100, POLY_POWER), base);
        assert_eq!(poly_lr(base, 100, 100, POLY_POWER), 0.0);
        assert_eq!(poly_lr(base, 150, 100, POLY_POWER), 0.0);
        let mid = poly_lr(base, 50, 100, POLY_POWER);
        assert!((mid - base * 0.5f64.powf(0.9)).abs() < 1e-12);
    }

    #[test]
    fn poly_lr_monotone_nonincreasing() {
        let mut prev = f64::INFINITY;
        for it in 0..=10_000 {
            let lr = poly_lr(1.0, it, 10_000, POLY_POWER);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    fn single_param_store(value: f64) -> (ParamStore, crate::params::ParamId) {
        let mut store = ParamStore::new();
        let id = store.register("p", Tensor::scalar(value), true, false);
        (store, id)
    }

    #[test]
    fn sgd_single_step() {
        let (mut store, id) = single_param_store(1.0);
        store.get_mut(id).grad.data_mut()[0] = 1.0;
        let mut opt = Optimizer::new(OptimConfig::sgd(0.1, 0.0));
        opt.step(&mut store, 0.1);
        assert!((store.value(id).item() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_two_steps() {
        // v1 = 1, p = -0.1; v2 = 0.9 + 1 = 1.9, p = -0.1 - 0.19 = -0.29
        let (mut store, id) = single_param_store(0.0);
        let mut opt = Optimizer::new(OptimConfig::sgd(0.1, 0.0));
        for _ in 0..2 {
            store.get_mut(id).grad.data_mut()[0] = 1.0;
            opt.step(&mut store, 0.1);
            store.zero_grads();
        }
        assert!((store.value(id).item() - (-0.29)).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_bias_corrected_unit_step() {
        let (mut store, id) = single_param_store(0.5);
        store.get_mut(id).grad.data_mut()[0] = 1.0;
        let mut opt = Optimizer::new(OptimConfig::adam(1e-3, 0.0));
        opt.step(&mut store, 1e-3);
        let moved = 0.5 - store.value(id).item();
        assert!((moved - 1e-3).abs() < 1e-6, "moved {moved}");
    }

    #[test]
    fn weight_decay_skips_exempt_parameters() {
        let mut store = ParamStore::new();
        let plain = store.register("w", Tensor::scalar(1.0), true, false);
        let exempt = store.register("bn.gamma", Tensor::scalar(1.0), true, true);
        // zero gradients: only decay moves parameters
        let mut opt = Optimizer::new(OptimConfig::sgd(0.1, 0.5));
        opt.step(&mut store, 0.1);
        assert!(store.value(plain).item() < 1.0);
        assert_eq!(store.value(exempt).item(), 1.0);
    }

    #[test]
    fn velocity_buffers_mirror_parameter_shapes() {
        let mut store = ParamStore::new();
        let id = store.register("w", Tensor::zeros(Shape::new(2, 3, 1, 1)), true, false);
        let mut opt = Optimizer::new(OptimConfig::sgd(0.1, 0.0));
        opt.step(&mut store, 0.1);
        assert_eq!(opt.velocity[id.0].as_ref().unwrap().shape(), Shape::new(2, 3, 1, 1));
    }
}
