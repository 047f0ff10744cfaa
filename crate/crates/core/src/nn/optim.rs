use ndarray::{ArrayD, IxDyn};

use super::param::{ParamArray, Parameterized};
use crate::error::{Error, Result};

/// RMSProp: `v ← αv + (1−α)g²`, `p ← p − lr·g/(√v + ε)`.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub alpha: f64,
    pub eps: f64,
    square_avg: Vec<ArrayD<f64>>,
}

impl RmsProp {
    pub fn new(learning_rate: f64) -> Self {
        RmsProp {
            learning_rate,
            alpha: 0.9,
            eps: 1e-8,
            square_avg: Vec::new(),
        }
    }

    /// Running averages of squared gradients, one per trainable parameter.
    pub fn square_avg(&self) -> &[ArrayD<f64>] {
        &self.square_avg
    }

    /// Applies one update from the accumulated gradients, then clears them.
    ///
    /// A non-finite gradient aborts the step before any parameter changes;
    /// the gradients are left in place for inspection.
    pub fn step<M: Parameterized>(&mut self, model: &mut M) -> Result<()> {
        let mut bad = None;
        model.visit_params(&mut |p: &ParamArray| {
            if bad.is_none() && p.trainable && p.grad.iter().any(|g| !g.is_finite()) {
                bad = Some(p.name.clone());
            }
        });
        if let Some(name) = bad {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        if self.square_avg.is_empty() {
            model.visit_params(&mut |p: &ParamArray| {
                if p.trainable {
                    self.square_avg.push(ArrayD::zeros(IxDyn(p.values.shape())));
                }
            });
        }
        let (lr, alpha, eps) = (self.learning_rate, self.alpha, self.eps);
        let mut slots = self.square_avg.iter_mut();
        model.visit_params_mut(&mut |p: &mut ParamArray| {
            if !p.trainable {
                return;
            }
            let v = slots.next().expect("optimizer state matches parameters");
            ndarray::Zip::from(&mut p.values)
                .and(v)
                .and(&p.grad)
                .for_each(|w, v, &g| {
                    *v = alpha * *v + (1.0 - alpha) * g * g;
                    *w -= lr * g / (v.sqrt() + eps);
                });
            p.zero_grad();
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64, grad: f64) -> ParamArray {
        let mut p = ParamArray::filled("w", &[2], value);
        p.grad.fill(grad);
        p
    }

    #[test]
    fn zero_learning_rate_only_moves_state() {
        let mut p = one_param(0.5, 2.0);
        let mut opt = RmsProp::new(0.0);
        opt.step(&mut p).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.5));
        assert!(opt.square_avg()[0].iter().all(|&v| (v - 0.4).abs() < 1e-15));
        assert!(p.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = one_param(0.5, 0.0);
        RmsProp::new(0.1).step(&mut p).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn update_matches_formula() {
        let mut p = one_param(1.0, 0.5);
        let mut opt = RmsProp::new(0.01);
        opt.step(&mut p).unwrap();
        let v: f64 = 0.1 * 0.25;
        let expected = 1.0 - 0.01 * 0.5 / (v.sqrt() + 1e-8);
        assert!((p.values[[0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = one_param(1.0, f64::NAN);
        assert!(matches!(RmsProp::new(0.1).step(&mut p), Err(Error::NonFinite(_))));
        assert!(p.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn buffers_are_not_updated() {
        let mut p = one_param(1.0, 1.0).buffer();
        RmsProp::new(0.1).step(&mut p).unwrap();
        assert!(p.values.iter().all(|&v| v == 1.0));
    }
}
