//! Central finite-difference checks of every hand-written backward pass.
//!
//! Each `check_*` function builds a randomly sized instance from `seed`,
//! compares analytic gradients with `(f(x+h) − f(x−h)) / 2h` on sampled
//! coordinates and reports the worst relative error.

use ndarray::{Array, Array2, Array3, Array4, Dimension, ShapeBuilder};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{Conv2d, ConvSpec};
use super::linear::Linear;
use super::lstm::{LstmStack, RnnConfig};
use super::model::{batch_ctc_loss, Model, ModelConfig, ModelKind};
use super::norm::BatchNorm2d;
use super::param::Parameterized;
use super::pool::PoolSpec;
use crate::ctc::{ctc_loss, Alphabet, Labelling, Posteriorgram};
use crate::error::Result;
use crate::imaging::{GrayImage, TARGET_HEIGHT};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const ABS_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, ABS_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub name: String,
    pub max_rel_error: f64,
    /// Number of coordinates compared.
    pub checked: usize,
}

impl GradReport {
    fn new(name: impl Into<String>) -> Self {
        GradReport {
            name: name.into(),
            max_rel_error: 0.0,
            checked: 0,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        self.max_rel_error = self.max_rel_error.max(relative_error(analytic, numeric));
        self.checked += 1;
    }
}

fn random_array<Sh: ShapeBuilder>(shape: Sh, rng: &mut ChaCha8Rng) -> Array<f64, Sh::Dim> {
    Array::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
}

fn sample_indices(len: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx.truncate(max);
    idx
}

/// Compares `analytic` with finite differences of `loss` around `x`.
fn check_input<D: Dimension>(
    report: &mut GradReport,
    x: &Array<f64, D>,
    analytic: &Array<f64, D>,
    max_coords: usize,
    rng: &mut ChaCha8Rng,
    loss: &dyn Fn(&Array<f64, D>) -> f64,
) {
    let mut probe = x.clone();
    for i in sample_indices(x.len(), max_coords, rng) {
        let orig = x.as_slice_memory_order().expect("contiguous")[i];
        probe.as_slice_memory_order_mut().expect("contiguous")[i] = orig + STEP;
        let up = loss(&probe);
        probe.as_slice_memory_order_mut().expect("contiguous")[i] = orig - STEP;
        let down = loss(&probe);
        probe.as_slice_memory_order_mut().expect("contiguous")[i] = orig;
        report.record(analytic.as_slice_memory_order().expect("contiguous")[i], (up - down) / (2.0 * STEP));
    }
}

fn nudge<M: Parameterized>(m: &mut M, array: usize, index: usize, delta: f64) {
    let mut k = 0;
    m.visit_params_mut(&mut |p| {
        if p.trainable {
            if k == array {
                p.values.as_slice_memory_order_mut().expect("contiguous")[index] += delta;
            }
            k += 1;
        }
    });
}

/// Compares accumulated parameter gradients of `m` with finite differences.
fn check_params<M: Parameterized>(
    report: &mut GradReport,
    m: &mut M,
    per_array: usize,
    rng: &mut ChaCha8Rng,
    loss: &dyn Fn(&M) -> f64,
) {
    let mut grads = Vec::new();
    m.visit_params(&mut |p| {
        if p.trainable {
            grads.push(p.grad.as_slice_memory_order().expect("contiguous").to_vec());
        }
    });
    for (a, grad) in grads.iter().enumerate() {
        for i in sample_indices(grad.len(), per_array, rng) {
            nudge(m, a, i, STEP);
            let up = loss(m);
            nudge(m, a, i, -2.0 * STEP);
            let down = loss(m);
            nudge(m, a, i, STEP);
            report.record(grad[i], (up - down) / (2.0 * STEP));
        }
    }
}

fn weighted_sum<D: Dimension>(y: &Array<f64, D>, r: &Array<f64, D>) -> f64 {
    ndarray::Zip::from(y).and(r).fold(0.0, |acc, &a, &b| acc + a * b)
}

/// Fused CTC gradient with respect to the pre-softmax activations.
pub fn check_ctc(seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=5);
    let t = rng.random_range(1..=8);
    let alphabet = Alphabet::new((0..k - 1).map(|i| char::from(b'a' + i as u8)))?;
    let logits = random_array((t, k), &mut rng).mapv(|v| 2.0 * v);
    // draw a target that fits in t frames
    let label = loop {
        let len = rng.random_range(0..=t.min(4));
        let l = Labelling::from_classes((0..len).map(|_| rng.random_range(1..k)).collect(), &alphabet)?;
        if l.min_frames() <= t {
            break l;
        }
    };
    let analytic = ctc_loss(&label, &Posteriorgram::from_logits(&logits)?, &alphabet)?.grad;
    let loss = |x: &Array2<f64>| {
        let y = Posteriorgram::from_logits(x).expect("finite logits");
        ctc_loss(&label, &y, &alphabet).expect("valid instance").loss
    };
    let mut report = GradReport::new("ctc");
    check_input(&mut report, &logits, &analytic, usize::MAX, &mut rng, &loss);
    Ok(report)
}

/// Convolution input, weight and bias gradients for a random geometry.
pub fn check_conv(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kh = rng.random_range(1..=3);
    let kw = rng.random_range(1..=3);
    let spec = ConvSpec {
        in_channels: rng.random_range(1..=3),
        out_channels: rng.random_range(1..=4),
        kernel: (kh, kw),
        stride: (rng.random_range(1..=2), rng.random_range(1..=2)),
        padding: (rng.random_range(0..kh), rng.random_range(0..kw)),
    };
    let mut conv = Conv2d::new("conv", spec, &mut rng);
    let n = rng.random_range(1..=2);
    let x = random_array((n, spec.in_channels, rng.random_range(3..=6), rng.random_range(3..=7)), &mut rng);
    let (y, cache) = conv.forward(&x);
    let r = random_array(y.raw_dim(), &mut rng);
    let dx = conv.backward(&cache, &r, true).expect("input gradient requested");
    let mut report = GradReport::new("conv");
    let c2 = conv.clone();
    check_input(&mut report, &x, &dx, 40, &mut rng, &|x: &Array4<f64>| weighted_sum(&c2.forward(x).0, &r));
    check_params(&mut report, &mut conv, 30, &mut rng, &|m: &Conv2d| weighted_sum(&m.forward(&x).0, &r));
    report
}

/// Max-pool input gradient, including padded asymmetric pools. Inputs are
/// distinct values at least `1/len` apart so no step crosses a tie.
pub fn check_pool(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = if rng.random_bool(0.5) {
        PoolSpec::square(2)
    } else {
        PoolSpec {
            kernel: (2, 2),
            stride: (2, 1),
            padding: (0, 1),
        }
    };
    let shape = (rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(2..=6), rng.random_range(2..=7));
    let len = shape.0 * shape.1 * shape.2 * shape.3;
    let mut values: Vec<f64> = (0..len).map(|i| i as f64 / len as f64).collect();
    values.shuffle(&mut rng);
    let x = Array4::from_shape_vec(shape, values).expect("shape");
    let (y, cache) = spec.forward(&x);
    let r = random_array(y.raw_dim(), &mut rng);
    let dx = spec.backward(&cache, &r);
    let mut report = GradReport::new("pool");
    check_input(&mut report, &x, &dx, usize::MAX, &mut rng, &|x: &Array4<f64>| {
        weighted_sum(&spec.forward(x).0, &r)
    });
    report
}

/// Training-mode batch norm: input, scale and shift gradients.
pub fn check_batchnorm(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(1..=3);
    let mut bn = BatchNorm2d::new("bn", c);
    bn.visit_params_mut(&mut |p| {
        if p.trainable {
            p.values.mapv_inplace(|_| rng.random_range(0.5..1.5));
        }
    });
    let x = random_array((rng.random_range(1..=3), c, rng.random_range(1..=4), rng.random_range(2..=5)), &mut rng);
    let (y, cache) = bn.forward(&x, true);
    let r = random_array(y.raw_dim(), &mut rng);
    let dx = bn.backward(&cache.expect("train mode"), &r);
    let mut report = GradReport::new("batchnorm");
    let b2 = bn.clone();
    check_input(&mut report, &x, &dx, 40, &mut rng, &|x: &Array4<f64>| weighted_sum(&b2.forward(x, true).0, &r));
    check_params(&mut report, &mut bn, 10, &mut rng, &|m: &BatchNorm2d| weighted_sum(&m.forward(&x, true).0, &r));
    report
}

/// Linear layer input, weight and bias gradients.
pub fn check_linear(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, din, dout) = (rng.random_range(1..=4), rng.random_range(1..=6), rng.random_range(1..=5));
    let mut lin = Linear::new("lin", din, dout, &mut rng);
    let x = random_array((n, din), &mut rng);
    let r = random_array((n, dout), &mut rng);
    let dx = lin.backward(x.view(), r.view());
    let mut report = GradReport::new("linear");
    let l2 = lin.clone();
    check_input(&mut report, &x, &dx, usize::MAX, &mut rng, &|x: &Array2<f64>| {
        weighted_sum(&l2.forward(x.view()), &r)
    });
    check_params(&mut report, &mut lin, 30, &mut rng, &|m: &Linear| weighted_sum(&m.forward(x.view()), &r));
    report
}

/// Stacked (bi)directional LSTM with ragged sequence lengths.
pub fn check_lstm(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = RnnConfig {
        layers: rng.random_range(1..=2),
        hidden: rng.random_range(1..=4),
        bidirectional: rng.random_bool(0.7),
    };
    let (t, n, d) = (rng.random_range(1..=6), rng.random_range(1..=3), rng.random_range(1..=4));
    let mut stack = LstmStack::new("rnn", d, config, &mut rng);
    let lengths: Vec<usize> = (0..n).map(|_| rng.random_range(1..=t)).collect();
    let mask = Array2::from_shape_fn((t, n), |(ti, b)| if ti < lengths[b] { 1.0 } else { 0.0 });
    let x = random_array((t, n, d), &mut rng);
    let (y, cache) = stack.forward(&x, &mask);
    let r = random_array(y.raw_dim(), &mut rng);
    let dx = stack.backward(&cache, &r);
    let mut report = GradReport::new("lstm");
    let s2 = stack.clone();
    check_input(&mut report, &x, &dx, 40, &mut rng, &|x: &Array3<f64>| {
        weighted_sum(&s2.forward(x, &mask).0, &r)
    });
    check_params(&mut report, &mut stack, 15, &mut rng, &|m: &LstmStack| {
        weighted_sum(&m.forward(&x, &mask).0, &r)
    });
    report
}

/// Whole recognizer: batch of ragged-width images, mean CTC loss, sampled
/// parameters of every layer.
pub fn check_model(config: ModelConfig, seed: u64, per_array: usize) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.num_classes;
    let alphabet = Alphabet::new((0..k - 1).map(|i| char::from(b'a' + i as u8)))?;
    let mut model = Model::new(config.clone(), seed)?;
    let min_w = config.min_input_width().max(8);
    let n = rng.random_range(2..=3);
    let images: Vec<GrayImage> = (0..n)
        .map(|_| {
            let w = rng.random_range(min_w..=min_w + 12);
            GrayImage::new(Array2::from_shape_simple_fn((TARGET_HEIGHT, w), || rng.random_range(0.0..1.0)))
        })
        .collect::<Result<_>>()?;
    let targets: Vec<Labelling> = images
        .iter()
        .map(|img| {
            let frames = config.sequence_length(img.width());
            loop {
                let len = rng.random_range(1..=frames.clamp(1, 3));
                let l = Labelling::from_classes((0..len).map(|_| rng.random_range(1..k)).collect(), &alphabet)?;
                if l.min_frames() <= frames {
                    return Ok(l);
                }
            }
        })
        .collect::<Result<_>>()?;
    let loss = |m: &Model| -> f64 {
        let (out, _) = m.forward(&images, true).expect("valid batch");
        batch_ctc_loss(&out, &targets, &alphabet).expect("valid targets").mean_loss
    };
    let (out, cache) = model.forward(&images, true)?;
    let bl = batch_ctc_loss(&out, &targets, &alphabet)?;
    model.zero_grad();
    model.backward(&cache, &bl.dlogits);
    let mut report = GradReport::new(format!("model {:?}", config.kind));
    check_params(&mut report, &mut model, per_array, &mut rng, &loss);
    Ok(report)
}

/// The tiny configuration of `kind` with small layers, for [`check_model`].
pub fn tiny_config(kind: ModelKind, num_classes: usize) -> ModelConfig {
    let mut c = ModelConfig::tiny(kind, num_classes, 8);
    if let Some(w) = c.window.as_mut() {
        w.width = 4;
        w.step = 2;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-4;

    fn assert_ok(r: GradReport, tol: f64) {
        assert!(r.checked > 0, "{} checked nothing", r.name);
        assert!(r.max_rel_error < tol, "{}: {}", r.name, r.max_rel_error);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn layer_gradients() {
        for seed in 0..5 {
            assert_ok(check_ctc(seed).unwrap(), TOL);
            assert_ok(check_conv(seed), TOL);
            assert_ok(check_pool(seed), TOL);
            assert_ok(check_batchnorm(seed), TOL);
            assert_ok(check_linear(seed), TOL);
            assert_ok(check_lstm(seed), TOL);
        }
    }

    #[test]
    fn model_gradients() {
        for kind in [ModelKind::ColRnn, ModelKind::WinRnn, ModelKind::CnnOnly, ModelKind::Crnn] {
            assert_ok(check_model(tiny_config(kind, 4), 1, 6).unwrap(), 1e-3);
        }
    }
}
