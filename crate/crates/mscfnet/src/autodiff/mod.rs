//! Reverse-mode automatic differentiation over the tensor primitives.

mod fdcheck;
mod flow;
mod tape;

pub use fdcheck::{finite_difference_check, FdReport};
pub use flow::{BnUpdate, CeLoss, Flow, Mode, Val};
pub use tape::{Gradients, NodeId, Tape};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use crate::tensor::{Conv2dSpec, Shape, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
        Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn sum_gradient_is_ones() {
        let store = ParamStore::new();
        let mut flow = Flow::train(&store);
        let x = flow.watch(Tensor::from_fn(Shape::new(1, 2, 2, 2), |_, c, h, w| {
            (c + h + w) as f64
        }));
        let loss = flow.sum_all(&x);
        let grads = flow.backward(&loss).unwrap();
        let gx = grads.for_node(x.node().unwrap()).unwrap();
        assert!(gx.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sigmoid_gradient_closed_form() {
        let store = ParamStore::new();
        let mut flow = Flow::train(&store);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xt = random(&mut rng, Shape::new(1, 1, 3, 3));
        let x = flow.watch(xt.clone());
        let s = flow.sigmoid(&x);
        let loss = flow.sum_all(&s);
        let grads = flow.backward(&loss).unwrap();
        let gx = grads.for_node(x.node().unwrap()).unwrap();
        for (g, &v) in gx.data().iter().zip(xt.data().iter()) {
            let sig = 1.0 / (1.0 + (-v).exp());
            assert!((g - sig * (1.0 - sig)).abs() < 1e-14);
        }
    }

    #[test]
    fn conv_gradient_matches_finite_differences() {
        let store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xt = random(&mut rng, Shape::new(1, 2, 5, 6));
        let wt = random(&mut rng, Shape::new(3, 2, 3, 3));
        let spec = Conv2dSpec::with_padding(1, 1);

        let mut flow = Flow::train(&store);
        let x = flow.watch(xt.clone());
        let w = flow.watch(wt.clone());
        let y = flow.conv2d(&x, &w, None, spec).unwrap();
        let loss = flow.sum_all(&y);
        let grads = flow.backward(&loss).unwrap();

        let gx = grads.for_node(x.node().unwrap()).unwrap();
        let report = finite_difference_check(
            |probe| {
                let mut f = Flow::eval(&store);
                let xv = f.input(probe.clone());
                let wv = f.input(wt.clone());
                let y = f.conv2d(&xv, &wv, None, spec).unwrap();
                y.tensor().sum()
            },
            &xt,
            gx,
            1e-6,
            1e-6,
            256,
            0,
        );
        assert!(report.pass(), "input grad rel err {}", report.max_rel_err);

        let gw = grads.for_node(w.node().unwrap()).unwrap();
        let report = finite_difference_check(
            |probe| {
                let mut f = Flow::eval(&store);
                let xv = f.input(xt.clone());
                let wv = f.input(probe.clone());
                let y = f.conv2d(&xv, &wv, None, spec).unwrap();
                y.tensor().sum()
            },
            &wt,
            gw,
            1e-6,
            1e-6,
            256,
            1,
        );
        assert!(report.pass(), "weight grad rel err {}", report.max_rel_err);
    }

    #[test]
    fn backward_twice_is_rejected() {
        let store = ParamStore::new();
        let mut flow = Flow::train(&store);
        let x = flow.watch(Tensor::scalar(2.0));
        let loss = flow.sum_all(&x);
        assert!(flow.backward(&loss).is_ok());
        assert!(matches!(
            flow.backward(&loss),
            Err(crate::error::Error::TapeConsumed)
        ));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::new();
        let mut flow = Flow::train(&store);
        let x = flow.watch(Tensor::zeros(Shape::new(1, 1, 2, 2)));
        assert!(matches!(
            flow.backward(&x),
            Err(crate::error::Error::NonScalarLoss(_))
        ));
    }

    #[test]
    fn unreached_parameters_keep_zero_grads() {
        let mut store = ParamStore::new();
        let used = store.register("used", Tensor::scalar(2.0), true, false);
        let unused = store.register("unused", Tensor::scalar(5.0), true, false);
        let mut flow = Flow::train(&store);
        let x = flow.param(used);
        let _orphan = flow.param(unused);
        let loss = flow.sum_all(&x);
        let grads = flow.backward(&loss).unwrap();
        assert_eq!(grads.by_param.len(), 1);
        assert_eq!(grads.by_param[0].0, used);
    }
}
