use ndarray::{linalg::general_mat_mul, s, Array2, Array3, ArrayView2, Axis, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::param::{ParamArray, Parameterized};

/// Stacked recurrent encoder shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub bidirectional: bool,
}

impl RnnConfig {
    /// Encoding size `D′` of the last layer.
    pub fn output_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM direction. Gate blocks are ordered input, forget, cell, output.
///
/// Sequences are `T × N × D`. `mask[[t, n]]` is 1 for valid frames and 0
/// for padding; state is held at zero on padded frames, so a reversed pass
/// starts fresh at each sample's last valid frame.
#[derive(Clone, Debug)]
pub struct LstmDirection {
    pub hidden: usize,
    pub reverse: bool,
    /// `[4H, D]`
    pub w_ih: ParamArray,
    /// `[4H, H]`
    pub w_hh: ParamArray,
    /// `[4H]`
    pub bias: ParamArray,
}

pub struct LstmCache {
    input: Array3<f64>,
    /// Activated gates per step, `T × N × 4H`.
    gates: Array3<f64>,
    /// tanh of the unmasked cell state.
    cell_tanh: Array3<f64>,
    /// Masked hidden and cell states (the recurrent values).
    h: Array3<f64>,
    c: Array3<f64>,
    mask: Array2<f64>,
}

impl LstmDirection {
    pub fn new(prefix: &str, input: usize, hidden: usize, reverse: bool, rng: &mut ChaCha8Rng) -> Self {
        let mut bias = ParamArray::uniform(format!("{prefix}.bias"), &[4 * hidden], hidden, rng);
        bias.values.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        LstmDirection {
            hidden,
            reverse,
            w_ih: ParamArray::uniform(format!("{prefix}.w_ih"), &[4 * hidden, input], hidden, rng),
            w_hh: ParamArray::uniform(format!("{prefix}.w_hh"), &[4 * hidden, hidden], hidden, rng),
            bias,
        }
    }

    fn order(&self, t_len: usize) -> Vec<usize> {
        if self.reverse {
            (0..t_len).rev().collect()
        } else {
            (0..t_len).collect()
        }
    }

    fn w_ih(&self) -> ArrayView2<'_, f64> {
        self.w_ih.values.view().into_dimensionality::<Ix2>().expect("2-d")
    }

    fn w_hh(&self) -> ArrayView2<'_, f64> {
        self.w_hh.values.view().into_dimensionality::<Ix2>().expect("2-d")
    }

    pub fn forward(&self, x: &Array3<f64>, mask: &Array2<f64>) -> (Array3<f64>, LstmCache) {
        let (t_len, n, d) = x.dim();
        let hd = self.hidden;
        let x2 = x.view().into_shape_with_order((t_len * n, d)).expect("contiguous input");
        let bias = self.bias.values.view().into_dimensionality::<Ix1>().expect("1-d");
        let mut pre = Array2::from_shape_fn((t_len * n, 4 * hd), |(_, j)| bias[j]);
        general_mat_mul(1.0, &x2, &self.w_ih().t(), 1.0, &mut pre);
        let pre = pre.into_shape_with_order((t_len, n, 4 * hd)).expect("reshape");

        let mut gates = Array3::zeros((t_len, n, 4 * hd));
        let mut cell_tanh = Array3::zeros((t_len, n, hd));
        let mut h_all = Array3::zeros((t_len, n, hd));
        let mut c_all = Array3::zeros((t_len, n, hd));
        let mut h_prev = Array2::<f64>::zeros((n, hd));
        let mut c_prev = Array2::<f64>::zeros((n, hd));
        let w_hh_t = self.w_hh().t().to_owned();

        for t in self.order(t_len) {
            let mut z = pre.index_axis(Axis(0), t).to_owned();
            general_mat_mul(1.0, &h_prev, &w_hh_t, 1.0, &mut z);
            for b in 0..n {
                let m = mask[[t, b]];
                let zr = z.row(b);
                let mut g_row = gates.slice_mut(s![t, b, ..]);
                for k in 0..hd {
                    let i = sigmoid(zr[k]);
                    let f = sigmoid(zr[hd + k]);
                    let g = zr[2 * hd + k].tanh();
                    let o = sigmoid(zr[3 * hd + k]);
                    g_row[k] = i;
                    g_row[hd + k] = f;
                    g_row[2 * hd + k] = g;
                    g_row[3 * hd + k] = o;
                    let c_raw = f * c_prev[[b, k]] + i * g;
                    let tc = c_raw.tanh();
                    cell_tanh[[t, b, k]] = tc;
                    h_all[[t, b, k]] = m * o * tc;
                    c_all[[t, b, k]] = m * c_raw;
                }
            }
            h_prev.assign(&h_all.index_axis(Axis(0), t));
            c_prev.assign(&c_all.index_axis(Axis(0), t));
        }
        let out = h_all.clone();
        (
            out,
            LstmCache {
                input: x.clone(),
                gates,
                cell_tanh,
                h: h_all,
                c: c_all,
                mask: mask.clone(),
            },
        )
    }

    pub fn backward(&mut self, cache: &LstmCache, dh_out: &Array3<f64>) -> Array3<f64> {
        let (t_len, n, d) = cache.input.dim();
        let hd = self.hidden;
        let order = self.order(t_len);
        let mut dgates = Array3::<f64>::zeros((t_len, n, 4 * hd));
        let mut dh_next = Array2::<f64>::zeros((n, hd));
        let mut dc_next = Array2::<f64>::zeros((n, hd));
        let mut dw_hh = Array2::<f64>::zeros((4 * hd, hd));
        let w_hh = self.w_hh().to_owned();

        for (pos, &t) in order.iter().enumerate().rev() {
            let prev = (pos > 0).then(|| order[pos - 1]);
            let mut dz = Array2::<f64>::zeros((n, 4 * hd));
            for b in 0..n {
                let m = cache.mask[[t, b]];
                if m == 0.0 {
                    continue;
                }
                for k in 0..hd {
                    let i = cache.gates[[t, b, k]];
                    let f = cache.gates[[t, b, hd + k]];
                    let g = cache.gates[[t, b, 2 * hd + k]];
                    let o = cache.gates[[t, b, 3 * hd + k]];
                    let tc = cache.cell_tanh[[t, b, k]];
                    let c_prev = prev.map_or(0.0, |p| cache.c[[p, b, k]]);
                    let dh = m * (dh_out[[t, b, k]] + dh_next[[b, k]]);
                    let dc = m * dc_next[[b, k]] + dh * o * (1.0 - tc * tc);
                    dz[[b, k]] = dc * g * i * (1.0 - i);
                    dz[[b, hd + k]] = dc * c_prev * f * (1.0 - f);
                    dz[[b, 2 * hd + k]] = dc * i * (1.0 - g * g);
                    dz[[b, 3 * hd + k]] = dh * tc * o * (1.0 - o);
                    dc_next[[b, k]] = dc * f;
                }
            }
            // rows with m == 0 pass nothing back
            for b in 0..n {
                if cache.mask[[t, b]] == 0.0 {
                    dc_next.row_mut(b).fill(0.0);
                }
            }
            dh_next = dz.dot(&w_hh);
            if let Some(p) = prev {
                general_mat_mul(1.0, &dz.t(), &cache.h.index_axis(Axis(0), p), 1.0, &mut dw_hh);
            }
            dgates.index_axis_mut(Axis(0), t).assign(&dz);
        }

        let dg2 = dgates.into_shape_with_order((t_len * n, 4 * hd)).expect("reshape");
        let x2 = cache.input.view().into_shape_with_order((t_len * n, d)).expect("reshape");
        let mut gw_ih = self.w_ih.grad.view_mut().into_dimensionality::<Ix2>().expect("2-d");
        general_mat_mul(1.0, &dg2.t(), &x2, 1.0, &mut gw_ih);
        let mut gw_hh = self.w_hh.grad.view_mut().into_dimensionality::<Ix2>().expect("2-d");
        gw_hh += &dw_hh;
        let mut gb = self.bias.grad.view_mut().into_dimensionality::<Ix1>().expect("1-d");
        gb += &dg2.sum_axis(Axis(0));
        let dx = dg2.dot(&self.w_ih());
        dx.into_shape_with_order((t_len, n, d)).expect("reshape")
    }
}

impl Parameterized for LstmDirection {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a ParamArray)) {
        f(&self.w_ih);
        f(&self.w_hh);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamArray)) {
        f(&mut self.w_ih);
        f(&mut self.w_hh);
        f(&mut self.bias);
    }
}

/// Stack of (bi)directional LSTM layers; directions are concatenated per frame.
#[derive(Clone, Debug)]
pub struct LstmStack {
    pub config: RnnConfig,
    pub layers: Vec<Vec<LstmDirection>>,
}

pub struct LstmStackCache {
    per_layer: Vec<Vec<LstmCache>>,
}

impl LstmStack {
    pub fn new(prefix: &str, input: usize, config: RnnConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(config.layers);
        let mut dim = input;
        for l in 0..config.layers {
            let mut dirs = vec![LstmDirection::new(&format!("{prefix}.{l}.fwd"), dim, config.hidden, false, rng)];
            if config.bidirectional {
                dirs.push(LstmDirection::new(&format!("{prefix}.{l}.bwd"), dim, config.hidden, true, rng));
            }
            layers.push(dirs);
            dim = config.output_dim();
        }
        LstmStack { config, layers }
    }

    pub fn forward(&self, x: &Array3<f64>, mask: &Array2<f64>) -> (Array3<f64>, LstmStackCache) {
        let mut current = x.clone();
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for dirs in &self.layers {
            let (t_len, n, _) = current.dim();
            let hd = self.config.hidden;
            let mut out = Array3::zeros((t_len, n, hd * dirs.len()));
            let mut caches = Vec::with_capacity(dirs.len());
            for (k, dir) in dirs.iter().enumerate() {
                let (h, cache) = dir.forward(&current, mask);
                out.slice_mut(s![.., .., k * hd..(k + 1) * hd]).assign(&h);
                caches.push(cache);
            }
            per_layer.push(caches);
            current = out;
        }
        (current, LstmStackCache { per_layer })
    }

    pub fn backward(&mut self, cache: &LstmStackCache, dy: &Array3<f64>) -> Array3<f64> {
        let hd = self.config.hidden;
        let mut grad = dy.clone();
        for (dirs, caches) in self.layers.iter_mut().zip(&cache.per_layer).rev() {
            let mut dx: Option<Array3<f64>> = None;
            for (k, (dir, c)) in dirs.iter_mut().zip(caches).enumerate() {
                let part = grad.slice(s![.., .., k * hd..(k + 1) * hd]).to_owned();
                let d = dir.backward(c, &part);
                match dx.as_mut() {
                    Some(acc) => *acc += &d,
                    None => dx = Some(d),
                }
            }
            grad = dx.expect("at least one direction");
        }
        grad
    }
}

impl Parameterized for LstmStack {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a ParamArray)) {
        for dir in self.layers.iter().flatten() {
            dir.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamArray)) {
        for dir in self.layers.iter_mut().flatten() {
            dir.visit_params_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn single_step_matches_gate_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut dir = LstmDirection::new("l", 1, 1, false, &mut rng);
        dir.w_ih.values.fill(0.5);
        dir.w_hh.values.fill(0.0);
        dir.bias.values.fill(0.0);
        let x = Array3::from_elem((1, 1, 1), 2.0);
        let (h, _) = dir.forward(&x, &Array2::ones((1, 1)));
        let s = sigmoid(1.0);
        let expected = s * (s * 1f64.tanh()).tanh();
        assert!((h[[0, 0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dir = LstmDirection::new("l", 3, 4, false, &mut rng);
        assert!(dir.bias.values.slice(s![4..8]).iter().all(|&b| b == 1.0));
    }

    #[test]
    fn reverse_direction_ignores_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dir = LstmDirection::new("l", 2, 3, true, &mut rng);
        let x = Array3::from_shape_fn((4, 1, 2), |(t, _, d)| (t + d) as f64 * 0.3);
        let short = x.slice(s![..2, .., ..]).to_owned();
        let (a, _) = dir.forward(&x, &Array2::from_shape_vec((4, 1), vec![1.0, 1.0, 0.0, 0.0]).unwrap());
        let (b, _) = dir.forward(&short, &Array2::ones((2, 1)));
        assert_eq!(a.slice(s![..2, .., ..]), b);
        assert!(a.slice(s![2.., .., ..]).iter().all(|&v| v == 0.0));
    }
}
