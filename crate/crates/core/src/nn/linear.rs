use ndarray::{linalg::general_mat_mul, Array2, ArrayView2, Axis, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;

use super::param::{ParamArray, Parameterized};

/// Affine map `y = x Wᵀ + b` applied to each row.
#[derive(Clone, Debug)]
pub struct Linear {
    /// `[out, in]`
    pub weight: ParamArray,
    pub bias: ParamArray,
}

impl Linear {
    pub fn new(prefix: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            weight: ParamArray::uniform(format!("{prefix}.weight"), &[output, input], input, rng),
            bias: ParamArray::uniform(format!("{prefix}.bias"), &[output], input, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.weight.values.shape()[0]
    }

    fn weight(&self) -> ArrayView2<'_, f64> {
        self.weight.values.view().into_dimensionality::<Ix2>().expect("2-d weight")
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let bias = self.bias.values.view().into_dimensionality::<Ix1>().expect("1-d bias");
        let mut y = Array2::from_shape_fn((x.nrows(), self.output_dim()), |(_, j)| bias[j]);
        general_mat_mul(1.0, &x, &self.weight().t(), 1.0, &mut y);
        y
    }

    /// Accumulates parameter gradients and returns `∂/∂x`.
    pub fn backward(&mut self, x: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut dw = self.weight.grad.view_mut().into_dimensionality::<Ix2>().expect("2-d");
        general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut dw);
        let mut db = self.bias.grad.view_mut().into_dimensionality::<Ix1>().expect("1-d");
        db += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight())
    }
}

impl Parameterized for Linear {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a ParamArray)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamArray)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
