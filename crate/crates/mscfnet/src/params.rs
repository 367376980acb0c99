//! Named trainable tensors with gradient accumulators.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ParamId(pub(crate) usize);

/// A named tensor plus its gradient accumulator. Non-trainable entries hold
/// state such as batch-norm running statistics; they are saved to weight
/// files but never see the optimizer.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Arc<Tensor>,
    pub grad: Tensor,
    pub trainable: bool,
    /// Weight decay skips normalization and activation-slope parameters.
    pub decay_exempt: bool,
}

/// Ordered store; registration order defines the census and the weight-file
/// layout, so it must be deterministic for a given config.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    items: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        trainable: bool,
        decay_exempt: bool,
    ) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.items.len());
        let grad = Tensor::zeros(value.shape());
        self.items.push(Parameter {
            name: name.clone(),
            value: Arc::new(value),
            grad,
            trainable,
            decay_exempt,
        });
        self.by_name.insert(name, id);
        id
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.items[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.items[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Arc<Tensor> {
        &self.items[id.0].value
    }

    /// Mutable access to a parameter's value, copying only if the tensor is
    /// currently shared (e.g. by a saved snapshot).
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.items[id.0].value)
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.items.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.items.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.items {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn accumulate_grad(&mut self, id: ParamId, delta: &Tensor) {
        self.items[id.0].grad.add_assign(delta);
    }

    /// Number of scalars the optimizer updates.
    pub fn trainable_scalars(&self) -> usize {
        self.items
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.shape().count())
            .sum()
    }

    /// Trainable scalars under a dotted-name prefix.
    pub fn trainable_scalars_under(&self, prefix: &str) -> usize {
        self.items
            .iter()
            .filter(|p| p.trainable && is_under(&p.name, prefix))
            .map(|p| p.value.shape().count())
            .sum()
    }

    /// Snapshot of all values (cheap: shares the tensors until mutated).
    pub fn snapshot(&self) -> Vec<Arc<Tensor>> {
        self.items.iter().map(|p| Arc::clone(&p.value)).collect()
    }

    pub fn restore(&mut self, snapshot: &[Arc<Tensor>]) {
        assert_eq!(snapshot.len(), self.items.len());
        for (p, v) in self.items.iter_mut().zip(snapshot.iter()) {
            p.value = Arc::clone(v);
        }
    }
}

fn is_under(name: &str, prefix: &str) -> bool {
    name == prefix || (name.starts_with(prefix) && name.as_bytes()[prefix.len()] == b'.')
}

/// He-uniform initialization for convolution kernels: U(-b, b) with
/// b = sqrt(6 / fan_in), fan_in = in-channels-per-group * kh * kw.
pub fn he_uniform(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    let fan_in = (shape.c * shape.h * shape.w) as f64;
    let bound = (6.0 / fan_in).sqrt();
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-bound..bound))
}
