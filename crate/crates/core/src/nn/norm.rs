use ndarray::{Array1, Array4, Axis, Ix1};

use super::param::{ParamArray, Parameterized};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over `N × C × H × W`.
///
/// Training mode normalizes with batch statistics; inference uses the
/// running averages.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamArray,
    pub beta: ParamArray,
    pub running_mean: ParamArray,
    pub running_var: ParamArray,
}

pub struct BatchNormCache {
    xhat: Array4<f64>,
    inv_std: Array1<f64>,
    /// Batch mean and unbiased variance, for the running averages.
    batch_mean: Array1<f64>,
    batch_var_unbiased: Array1<f64>,
}

fn vec1(p: &ParamArray) -> ndarray::ArrayView1<'_, f64> {
    p.values.view().into_dimensionality::<Ix1>().expect("1-d parameter")
}

impl BatchNorm2d {
    pub fn new(prefix: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: ParamArray::filled(format!("{prefix}.gamma"), &[channels], 1.0),
            beta: ParamArray::zeros(format!("{prefix}.beta"), &[channels]),
            running_mean: ParamArray::zeros(format!("{prefix}.running_mean"), &[channels]).buffer(),
            running_var: ParamArray::filled(format!("{prefix}.running_var"), &[channels], 1.0).buffer(),
        }
    }

    pub fn forward(&self, x: &Array4<f64>, train: bool) -> (Array4<f64>, Option<BatchNormCache>) {
        let (n, channels, h, w) = x.dim();
        let gamma = vec1(&self.gamma);
        let beta = vec1(&self.beta);
        if !train {
            let mean = vec1(&self.running_mean);
            let var = vec1(&self.running_var);
            let mut y = x.clone();
            for c in 0..channels {
                let scale = gamma[c] / (var[c] + BN_EPS).sqrt();
                let shift = beta[c] - mean[c] * scale;
                y.index_axis_mut(Axis(1), c).mapv_inplace(|v| v * scale + shift);
            }
            return (y, None);
        }
        let m = (n * h * w) as f64;
        let mut xhat = x.clone();
        let mut y = x.clone();
        let mut inv_std = Array1::zeros(channels);
        let mut batch_mean = Array1::zeros(channels);
        let mut batch_var_unbiased = Array1::zeros(channels);
        for c in 0..channels {
            let plane = x.index_axis(Axis(1), c);
            let mean = plane.sum() / m;
            let var = plane.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / m;
            let istd = 1.0 / (var + BN_EPS).sqrt();
            xhat.index_axis_mut(Axis(1), c).mapv_inplace(|v| (v - mean) * istd);
            let (g, b) = (gamma[c], beta[c]);
            y.index_axis_mut(Axis(1), c)
                .zip_mut_with(&xhat.index_axis(Axis(1), c), |o, &xh| *o = g * xh + b);
            inv_std[c] = istd;
            batch_mean[c] = mean;
            batch_var_unbiased[c] = if m > 1.0 { var * m / (m - 1.0) } else { var };
        }
        (
            y,
            Some(BatchNormCache {
                xhat,
                inv_std,
                batch_mean,
                batch_var_unbiased,
            }),
        )
    }

    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Array4<f64>) -> Array4<f64> {
        let (n, channels, h, w) = dy.dim();
        let m = (n * h * w) as f64;
        let mut dx = Array4::zeros(dy.dim());
        let gamma = vec1(&self.gamma).to_owned();
        let mut dgamma = self.gamma.grad.view_mut().into_dimensionality::<Ix1>().expect("1-d");
        let mut dbeta = self.beta.grad.view_mut().into_dimensionality::<Ix1>().expect("1-d");
        for c in 0..channels {
            let dy_c = dy.index_axis(Axis(1), c);
            let xhat_c = cache.xhat.index_axis(Axis(1), c);
            let sum_dy = dy_c.sum();
            let sum_dy_xhat = ndarray::Zip::from(&dy_c).and(&xhat_c).fold(0.0, |acc, &d, &x| acc + d * x);
            dgamma[c] += sum_dy_xhat;
            dbeta[c] += sum_dy;
            let k = gamma[c] * cache.inv_std[c] / m;
            ndarray::Zip::from(dx.index_axis_mut(Axis(1), c))
                .and(&dy_c)
                .and(&xhat_c)
                .for_each(|o, &d, &x| *o = k * (m * d - sum_dy - x * sum_dy_xhat));
        }
        dx
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let mut mean = self.running_mean.values.view_mut().into_dimensionality::<Ix1>().expect("1-d");
        mean.zip_mut_with(&cache.batch_mean, |r, &b| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b);
        let mut var = self.running_var.values.view_mut().into_dimensionality::<Ix1>().expect("1-d");
        var.zip_mut_with(&cache.batch_var_unbiased, |r, &b| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b);
    }
}

impl Parameterized for BatchNorm2d {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a ParamArray)) {
        f(&self.gamma);
        f(&self.beta);
        f(&self.running_mean);
        f(&self.running_var);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamArray)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_normalizes_and_updates_running_stats() {
        let x = Array4::from_shape_vec((1, 1, 1, 4), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bn = BatchNorm2d::new("bn", 1);
        let (y, cache) = bn.forward(&x, true);
        assert!(y.sum().abs() < 1e-12);
        let var = y.mapv(|v| v * v).sum() / 4.0;
        assert!((var - 1.25 / (1.25 + BN_EPS)).abs() < 1e-12);
        bn.update_running(&cache.unwrap());
        assert!((bn.running_mean.values[[0]] - 0.25).abs() < 1e-15);
        // unbiased variance 5/3
        assert!((bn.running_var.values[[0]] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn inference_mode_uses_running_stats() {
        let x = Array4::from_elem((1, 1, 1, 2), 3.0);
        let mut bn = BatchNorm2d::new("bn", 1);
        bn.running_mean.values.fill(1.0);
        bn.running_var.values.fill(4.0 - BN_EPS);
        let (y, cache) = bn.forward(&x, false);
        assert!(cache.is_none());
        assert!(y.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
}
