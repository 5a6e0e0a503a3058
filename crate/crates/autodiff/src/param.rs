use crate::real::Real;
use crate::tape::Gradients;
use crate::tensor::Tensor;

/// First/second moment accumulators for Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

/// A named, optionally trainable weight tensor with its gradient
/// accumulator and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Vec<T>,
    pub trainable: bool,
    pub adam: AdamState<T>,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let n = value.numel();
        Self {
            name: name.into(),
            value,
            grad: vec![T::zero(); n],
            trainable: true,
            adam: AdamState {
                m: vec![T::zero(); n],
                v: vec![T::zero(); n],
                step: 0,
            },
        }
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    /// Adds this parameter's gradient from a backward pass (if it was bound
    /// on that tape) into the accumulator.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        if !self.trainable {
            return;
        }
        if let Some(g) = grads.param(&self.name) {
            self.grad.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b);
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}
