use ndarray::Array4;
use serde::{Deserialize, Serialize};

use super::conv::sliding_extent;

/// Max pooling geometry. Pairs are `(height, width)`; padding reads as `−∞`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl PoolSpec {
    pub fn square(size: usize) -> Self {
        PoolSpec {
            kernel: (size, size),
            stride: (size, size),
            padding: (0, 0),
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        Some((
            sliding_extent(h, self.kernel.0, self.stride.0, self.padding.0)?,
            sliding_extent(w, self.kernel.1, self.stride.1, self.padding.1)?,
        ))
    }

    /// Output and argmax positions (flat `y·W + x` within each input plane).
    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, PoolCache) {
        let (n_batch, channels, h, w) = x.dim();
        let (out_h, out_w) = self.output_hw(h, w).expect("input smaller than pooling window");
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        let mut out = Array4::zeros((n_batch, channels, out_h, out_w));
        let mut argmax = Vec::with_capacity(out.len());
        for n in 0..n_batch {
            for c in 0..channels {
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_at = usize::MAX;
                        for i in 0..kh {
                            let iy = (oy * sh + i) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for j in 0..kw {
                                let ix = (ox * sw + j) as isize - pw as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let v = x[[n, c, iy as usize, ix as usize]];
                                if v > best || best_at == usize::MAX {
                                    best = v;
                                    best_at = iy as usize * w + ix as usize;
                                }
                            }
                        }
                        out[[n, c, oy, ox]] = best;
                        argmax.push(best_at);
                    }
                }
            }
        }
        (
            out,
            PoolCache {
                argmax,
                input_dim: (n_batch, channels, h, w),
            },
        )
    }

    pub fn backward(&self, cache: &PoolCache, dy: &Array4<f64>) -> Array4<f64> {
        let (n_batch, channels, _, w) = cache.input_dim;
        let mut dx = Array4::zeros(cache.input_dim);
        let (_, _, out_h, out_w) = dy.dim();
        let mut k = 0;
        for n in 0..n_batch {
            for c in 0..channels {
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let at = cache.argmax[k];
                        k += 1;
                        if at != usize::MAX {
                            dx[[n, c, at / w, at % w]] += dy[[n, c, oy, ox]];
                        }
                    }
                }
            }
        }
        dx
    }
}

pub struct PoolCache {
    argmax: Vec<usize>,
    input_dim: (usize, usize, usize, usize),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_never_wins() {
        let x = Array4::from_shape_vec((1, 1, 2, 2), vec![-3.0, -1.0, -2.0, -4.0]).unwrap();
        let spec = PoolSpec {
            kernel: (2, 2),
            stride: (2, 1),
            padding: (0, 1),
        };
        let (y, _) = spec.forward(&x);
        assert_eq!(y.into_raw_vec_and_offset().0, vec![-2.0, -1.0, -1.0]);
    }

    #[test]
    fn gradient_routes_to_argmax() {
        let x = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0, 5.0, 2.0, 3.0]).unwrap();
        let spec = PoolSpec::square(2);
        let (y, cache) = spec.forward(&x);
        assert_eq!(y[[0, 0, 0, 0]], 5.0);
        let dx = spec.backward(&cache, &Array4::from_elem((1, 1, 1, 1), 2.0));
        assert_eq!(dx.into_raw_vec_and_offset().0, vec![0.0, 2.0, 0.0, 0.0]);
    }
}
