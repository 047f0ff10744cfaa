use ndarray::{linalg::general_mat_mul, s, Array2, Array4, ArrayView2, Axis, Ix2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::param::{ParamArray, Parameterized};

/// Geometry of a 2-D convolution. Pairs are `(height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

/// Output extent along one axis of a sliding operation, or `None` when the
/// (padded) input is smaller than the kernel.
pub fn sliding_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

impl ConvSpec {
    pub fn square(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: (1, 1),
            padding: (padding, padding),
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        Some((
            sliding_extent(h, self.kernel.0, self.stride.0, self.padding.0)?,
            sliding_extent(w, self.kernel.1, self.stride.1, self.padding.1)?,
        ))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }
}

/// 2-D convolution over `N × C × H × W` tensors, zero padded, computed as
/// im2col followed by a matrix product.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub spec: ConvSpec,
    /// `[out, in, kh, kw]`
    pub weight: ParamArray,
    pub bias: ParamArray,
}

pub struct ConvCache {
    cols: Vec<Array2<f64>>,
    input_hw: (usize, usize),
}

impl Conv2d {
    pub fn new(prefix: &str, spec: ConvSpec, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = spec.patch_len();
        let shape = [spec.out_channels, spec.in_channels, spec.kernel.0, spec.kernel.1];
        Conv2d {
            spec,
            weight: ParamArray::uniform(format!("{prefix}.weight"), &shape, fan_in, rng),
            bias: ParamArray::uniform(format!("{prefix}.bias"), &[spec.out_channels], fan_in, rng),
        }
    }

    fn weight_matrix(&self) -> ArrayView2<'_, f64> {
        self.weight
            .values
            .view()
            .into_shape_with_order((self.spec.out_channels, self.spec.patch_len()))
            .expect("contiguous conv weight")
    }

    fn im2col(&self, x: &Array4<f64>, n: usize, out_h: usize, out_w: usize) -> Array2<f64> {
        let ConvSpec {
            in_channels,
            kernel: (kh, kw),
            stride: (sh, sw),
            padding: (ph, pw),
            ..
        } = self.spec;
        let (h, w) = (x.dim().2, x.dim().3);
        let mut cols = Array2::zeros((self.spec.patch_len(), out_h * out_w));
        for c in 0..in_channels {
            let plane = x.slice(s![n, c, .., ..]);
            for i in 0..kh {
                for j in 0..kw {
                    let row_idx = (c * kh + i) * kw + j;
                    let mut row = cols.row_mut(row_idx);
                    let row = row.as_slice_mut().expect("standard layout");
                    for oy in 0..out_h {
                        let iy = (oy * sh + i) as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = plane.row(iy as usize);
                        for ox in 0..out_w {
                            let ix = (ox * sw + j) as isize - pw as isize;
                            if ix >= 0 && ix < w as isize {
                                row[oy * out_w + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, ConvCache) {
        let (n_batch, c, h, w) = x.dim();
        assert_eq!(c, self.spec.in_channels, "conv input channels");
        let (out_h, out_w) = self.spec.output_hw(h, w).expect("input smaller than kernel");
        let weight = self.weight_matrix();
        let bias = self.bias.values.view().into_dimensionality::<ndarray::Ix1>().expect("1-d bias");
        let mut out = Array4::zeros((n_batch, self.spec.out_channels, out_h, out_w));
        let mut all_cols = Vec::with_capacity(n_batch);
        for n in 0..n_batch {
            let cols = self.im2col(x, n, out_h, out_w);
            let mut y = out
                .index_axis_mut(Axis(0), n)
                .into_shape_with_order((self.spec.out_channels, out_h * out_w))
                .expect("contiguous output");
            for (mut row, &b) in y.rows_mut().into_iter().zip(bias.iter()) {
                row.fill(b);
            }
            general_mat_mul(1.0, &weight, &cols, 1.0, &mut y);
            all_cols.push(cols);
        }
        (
            out,
            ConvCache {
                cols: all_cols,
                input_hw: (h, w),
            },
        )
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(&mut self, cache: &ConvCache, dy: &Array4<f64>, want_input_grad: bool) -> Option<Array4<f64>> {
        let (n_batch, out_c, out_h, out_w) = dy.dim();
        let ConvSpec {
            in_channels,
            kernel: (kh, kw),
            stride: (sh, sw),
            padding: (ph, pw),
            ..
        } = self.spec;
        let (h, w) = cache.input_hw;
        let patch = self.spec.patch_len();
        let mut dx = want_input_grad.then(|| Array4::zeros((n_batch, in_channels, h, w)));
        let mut dweight = Array2::zeros((out_c, patch));
        let mut dbias = self.bias.grad.view_mut().into_dimensionality::<ndarray::Ix1>().expect("1-d bias");
        let weight = self
            .weight
            .values
            .view()
            .into_shape_with_order((out_c, patch))
            .expect("contiguous conv weight");
        for n in 0..n_batch {
            let dy_n = dy
                .index_axis(Axis(0), n)
                .into_shape_with_order((out_c, out_h * out_w))
                .expect("contiguous gradient");
            general_mat_mul(1.0, &dy_n, &cache.cols[n].t(), 1.0, &mut dweight);
            dbias += &dy_n.sum_axis(Axis(1));
            if let Some(dx) = dx.as_mut() {
                let dcols = weight.t().dot(&dy_n);
                for c in 0..in_channels {
                    let mut plane = dx.slice_mut(s![n, c, .., ..]);
                    for i in 0..kh {
                        for j in 0..kw {
                            let row = dcols.row((c * kh + i) * kw + j);
                            for oy in 0..out_h {
                                let iy = (oy * sh + i) as isize - ph as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for ox in 0..out_w {
                                    let ix = (ox * sw + j) as isize - pw as isize;
                                    if ix >= 0 && ix < w as isize {
                                        plane[[iy as usize, ix as usize]] += row[oy * out_w + ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut wgrad = self
            .weight
            .grad
            .view_mut()
            .into_shape_with_order((out_c, patch))
            .expect("contiguous conv weight grad")
            .into_dimensionality::<Ix2>()
            .expect("2-d");
        wgrad += &dweight;
        dx
    }
}

impl Parameterized for Conv2d {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a ParamArray)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamArray)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
