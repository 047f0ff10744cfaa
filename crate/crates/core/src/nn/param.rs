use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A named parameter (or buffer) with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamArray {
    pub name: String,
    pub values: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    /// Buffers such as batch-norm running statistics are not trainable.
    pub trainable: bool,
}

impl ParamArray {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        ParamArray {
            name: name.into(),
            values: ArrayD::zeros(IxDyn(shape)),
            grad: ArrayD::zeros(IxDyn(shape)),
            trainable: true,
        }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], value: f64) -> Self {
        let mut p = Self::zeros(name, shape);
        p.values.fill(value);
        p
    }

    /// Uniform in `±1/√fan_in`.
    pub fn uniform(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut p = Self::zeros(name, shape);
        p.values.mapv_inplace(|_| rng.random_range(-bound..=bound));
        p
    }

    pub fn buffer(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Anything owning parameters, visited in a fixed order.
pub trait Parameterized {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a ParamArray));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamArray));

    fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |p| p.zero_grad());
    }

    fn num_trainable(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| {
            if p.trainable {
                n += p.len()
            }
        });
        n
    }
}

impl Parameterized for ParamArray {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a ParamArray)) {
        f(self);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamArray)) {
        f(self);
    }
}
