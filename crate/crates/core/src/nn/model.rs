//! The four recognizer configurations and their shared forward/backward pass.
//!
//! Batches are processed as one padded tensor. Images narrower than the
//! widest one are right-padded with white; each sample keeps its own frame
//! count, and padded frames carry neither recurrent state nor loss.

use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Conv2d, ConvCache, ConvSpec};
use super::linear::Linear;
use super::lstm::{LstmStack, LstmStackCache, RnnConfig};
use super::norm::{BatchNorm2d, BatchNormCache};
use super::param::{ParamArray, Parameterized};
use super::pool::{PoolCache, PoolSpec};
use crate::ctc::{ctc_loss, Alphabet, Labelling, Posteriorgram};
use crate::error::{Error, Result};
use crate::imaging::{extract_columns, extract_windows, Direction, FeatureSequence, GrayImage, WindowConfig, PAD_VALUE, TARGET_HEIGHT};

/// Feature extractor and encoder combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Raw pixel columns encoded by a recurrent network.
    ColRnn,
    /// Stacked sliding-window pixels encoded by a recurrent network.
    WinRnn,
    /// Convolutional features with an identity encoder.
    CnnOnly,
    /// Convolutional features encoded by a recurrent network.
    Crnn,
}

impl ModelKind {
    pub fn uses_cnn(self) -> bool {
        matches!(self, ModelKind::CnnOnly | ModelKind::Crnn)
    }

    pub fn uses_rnn(self) -> bool {
        !matches!(self, ModelKind::CnnOnly)
    }

    /// Learning rate used for each family at full scale.
    pub fn default_learning_rate(self) -> f64 {
        if self.uses_cnn() {
            1e-4
        } else {
            1e-3
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "col_rnn" | "colrnn" => Ok(ModelKind::ColRnn),
            "win_rnn" | "winrnn" => Ok(ModelKind::WinRnn),
            "cnn_only" | "cnnonly" => Ok(ModelKind::CnnOnly),
            "crnn" => Ok(ModelKind::Crnn),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// One convolution, optionally followed by batch norm, then ReLU and an optional max pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnLayerSpec {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub batch_norm: bool,
    pub pool: Option<PoolSpec>,
}

impl CnnLayerSpec {
    fn conv3(out_channels: usize, batch_norm: bool, pool: Option<PoolSpec>) -> Self {
        CnnLayerSpec {
            out_channels,
            kernel: (3, 3),
            stride: (1, 1),
            padding: (1, 1),
            batch_norm,
            pool,
        }
    }
}

/// Pool that halves the height but keeps the width (plus one column).
fn tall_pool() -> PoolSpec {
    PoolSpec {
        kernel: (2, 2),
        stride: (2, 1),
        padding: (0, 1),
    }
}

/// The seven-layer CRNN convolutional stack: `32 × W` in, `1 × (W/4 + 1)` out, 512 channels.
pub fn crnn_cnn() -> Vec<CnnLayerSpec> {
    vec![
        CnnLayerSpec::conv3(64, false, Some(PoolSpec::square(2))),
        CnnLayerSpec::conv3(128, false, Some(PoolSpec::square(2))),
        CnnLayerSpec::conv3(256, false, None),
        CnnLayerSpec::conv3(256, false, Some(tall_pool())),
        CnnLayerSpec::conv3(512, true, None),
        CnnLayerSpec::conv3(512, true, Some(tall_pool())),
        CnnLayerSpec {
            out_channels: 512,
            kernel: (2, 2),
            stride: (1, 1),
            padding: (0, 0),
            batch_norm: false,
            pool: None,
        },
    ]
}

/// Two-layer stack for desk-scale experiments: `32 × W` in, `8 × W/4` out.
pub fn tiny_cnn(channels: (usize, usize)) -> Vec<CnnLayerSpec> {
    vec![
        CnnLayerSpec::conv3(channels.0, false, Some(PoolSpec::square(2))),
        CnnLayerSpec::conv3(channels.1, true, Some(PoolSpec::square(2))),
    ]
}

/// Complete description of a recognizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// `|L′|`, including the blank.
    pub num_classes: usize,
    #[serde(default)]
    pub direction: Direction,
    pub rnn: Option<RnnConfig>,
    pub window: Option<WindowConfig>,
    pub cnn: Option<Vec<CnnLayerSpec>>,
}

impl ModelConfig {
    /// Full-size configuration: CRNN convolutional stack, two bidirectional
    /// LSTM layers of 256 units, 20-pixel windows moved by 5.
    pub fn full(kind: ModelKind, num_classes: usize) -> Self {
        Self::assemble(
            kind,
            num_classes,
            RnnConfig {
                layers: 2,
                hidden: 256,
                bidirectional: true,
            },
            crnn_cnn(),
        )
    }

    /// Small configuration that trains in minutes on a CPU.
    pub fn tiny(kind: ModelKind, num_classes: usize, hidden: usize) -> Self {
        Self::assemble(
            kind,
            num_classes,
            RnnConfig {
                layers: 1,
                hidden,
                bidirectional: true,
            },
            tiny_cnn((8, 16)),
        )
    }

    fn assemble(kind: ModelKind, num_classes: usize, rnn: RnnConfig, cnn: Vec<CnnLayerSpec>) -> Self {
        ModelConfig {
            kind,
            num_classes,
            direction: Direction::LeftToRight,
            rnn: kind.uses_rnn().then_some(rnn),
            window: (kind == ModelKind::WinRnn).then_some(WindowConfig {
                width: 20,
                step: 5,
                direction: Direction::LeftToRight,
            }),
            cnn: kind.uses_cnn().then_some(cnn),
        }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        if let Some(w) = self.window.as_mut() {
            w.direction = direction;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind;
        if self.num_classes < 2 {
            return Err(Error::Config("need at least one label besides the blank".into()));
        }
        if kind.uses_rnn() != self.rnn.is_some() {
            return Err(Error::Config(format!("{kind:?}: recurrent encoder config must be present exactly for RNN kinds")));
        }
        if (kind == ModelKind::WinRnn) != self.window.is_some() {
            return Err(Error::Config(format!("{kind:?}: window config must be present exactly for Win_RNN")));
        }
        if kind.uses_cnn() != self.cnn.is_some() {
            return Err(Error::Config(format!("{kind:?}: CNN config must be present exactly for CNN kinds")));
        }
        if let Some(rnn) = &self.rnn {
            if rnn.layers == 0 || rnn.hidden == 0 {
                return Err(Error::Config("recurrent encoder needs >= 1 layer and >= 1 unit".into()));
            }
        }
        if let Some(w) = &self.window {
            w.validate()?;
            if w.direction != self.direction {
                return Err(Error::Config("window direction disagrees with model direction".into()));
            }
        }
        if let Some(cnn) = &self.cnn {
            if cnn.is_empty() {
                return Err(Error::Config("CNN needs at least one layer".into()));
            }
            if self.cnn_output_shape(self.min_input_width()).is_none() {
                return Err(Error::Config(format!("CNN cannot process {TARGET_HEIGHT}-pixel-high input")));
            }
        }
        Ok(())
    }

    /// `(C′, H′, W′)` for a `TARGET_HEIGHT × width` input.
    pub fn cnn_output_shape(&self, width: usize) -> Option<(usize, usize, usize)> {
        let cnn = self.cnn.as_ref()?;
        let (mut c, mut h, mut w) = (1, TARGET_HEIGHT, width);
        for layer in cnn {
            let spec = conv_spec(c, layer);
            (h, w) = spec.output_hw(h, w)?;
            c = layer.out_channels;
            if let Some(pool) = &layer.pool {
                (h, w) = pool.output_hw(h, w)?;
            }
            if h == 0 || w == 0 {
                return None;
            }
        }
        Some((c, h, w))
    }

    /// Narrowest input the feature extractor accepts; narrower images are padded.
    pub fn min_input_width(&self) -> usize {
        if !self.kind.uses_cnn() {
            return 1;
        }
        (1..=4096).find(|&w| self.cnn_output_shape(w).is_some()).unwrap_or(4096)
    }

    /// Number of frames `T` produced for an image `width` pixels wide.
    pub fn sequence_length(&self, width: usize) -> usize {
        match self.kind {
            ModelKind::ColRnn => width.max(1),
            ModelKind::WinRnn => self.window.expect("validated").frames_for_width(width),
            ModelKind::CnnOnly | ModelKind::Crnn => {
                self.cnn_output_shape(width.max(self.min_input_width())).map_or(0, |(_, _, w)| w)
            }
        }
    }

    /// Feature dimension `D` fed to the encoder.
    pub fn feature_dim(&self) -> usize {
        match self.kind {
            ModelKind::ColRnn => TARGET_HEIGHT,
            ModelKind::WinRnn => TARGET_HEIGHT * self.window.expect("validated").width,
            ModelKind::CnnOnly | ModelKind::Crnn => {
                let (c, h, _) = self.cnn_output_shape(self.min_input_width()).expect("validated");
                c * h
            }
        }
    }

    /// Encoding size `D′` fed to the decoder head.
    pub fn encoding_dim(&self) -> usize {
        self.rnn.map_or_else(|| self.feature_dim(), |r| r.output_dim())
    }
}

fn conv_spec(in_channels: usize, layer: &CnnLayerSpec) -> ConvSpec {
    ConvSpec {
        in_channels,
        out_channels: layer.out_channels,
        kernel: layer.kernel,
        stride: layer.stride,
        padding: layer.padding,
    }
}

/// Convolutional output `C′ × H′ × W′` for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnFeatureMap {
    /// Indexed `[[c, h, w]]`.
    pub values: Array3<f64>,
}

impl CnnFeatureMap {
    pub fn channels(&self) -> usize {
        self.values.dim().0
    }

    pub fn height(&self) -> usize {
        self.values.dim().1
    }

    pub fn width(&self) -> usize {
        self.values.dim().2
    }
}

/// Reshapes `C′ × H′ × W′` into `W′` frames of size `H′·C′`; feature index
/// `c·H′ + h` holds channel `c`, row `h`.
pub fn map_to_sequence(map: &CnnFeatureMap) -> FeatureSequence {
    let (c, h, w) = map.values.dim();
    let frames = Array2::from_shape_fn((w, c * h), |(t, d)| map.values[[d / h, d % h, t]]);
    FeatureSequence::new(frames).expect("non-empty map")
}

/// Inverse of [`map_to_sequence`] given the map height.
pub fn sequence_to_map(seq: &FeatureSequence, height: usize) -> CnnFeatureMap {
    let (w, d) = seq.frames().dim();
    let c = d / height;
    CnnFeatureMap {
        values: Array3::from_shape_fn((c, height, w), |(ch, y, t)| seq.frames()[[t, ch * height + y]]),
    }
}

fn batch_to_sequence(maps: &Array4<f64>) -> Array3<f64> {
    let (n, c, h, w) = maps.dim();
    Array3::from_shape_fn((w, n, c * h), |(t, b, d)| maps[[b, d / h, d % h, t]])
}

fn sequence_to_batch(seq: &Array3<f64>, c: usize, h: usize) -> Array4<f64> {
    let (w, n, _) = seq.dim();
    Array4::from_shape_fn((n, c, h, w), |(b, ch, y, t)| seq[[t, b, ch * h + y]])
}

#[derive(Clone, Debug)]
struct CnnBlock {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
    pool: Option<PoolSpec>,
}

impl Parameterized for CnnBlock {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a ParamArray)) {
        self.conv.visit_params(f);
        if let Some(bn) = &self.bn {
            bn.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamArray)) {
        self.conv.visit_params_mut(f);
        if let Some(bn) = self.bn.as_mut() {
            bn.visit_params_mut(f);
        }
    }
}

struct BlockCache {
    conv: ConvCache,
    bn: Option<BatchNormCache>,
    activated: Array4<f64>,
    pool: Option<PoolCache>,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    cnn_out: Option<(usize, usize)>,
    rnn: Option<LstmStackCache>,
    head_input: Array2<f64>,
}

/// Batched decoder activations.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Pre-softmax activations, `T_max × N × |L′|`.
    pub logits: Array3<f64>,
    /// Valid frame count of each sample.
    pub lengths: Vec<usize>,
}

impl ForwardOutput {
    /// Posteriorgram of sample `n`, truncated to its own length.
    pub fn posteriorgram(&self, n: usize) -> Result<Posteriorgram> {
        let logits = self.logits.slice(s![..self.lengths[n], n, ..]).to_owned();
        Posteriorgram::from_logits(&logits)
    }
}

/// A recognizer: feature extraction, optional encoder, linear decoder head.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    cnn: Vec<CnnBlock>,
    rnn: Option<LstmStack>,
    head: Linear,
}

impl Model {
    /// Randomly initialized model (uniform `±1/√fan_in`, forget-gate bias 1).
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cnn = Vec::new();
        let mut channels = 1;
        for (i, layer) in config.cnn.iter().flatten().enumerate() {
            let spec = conv_spec(channels, layer);
            cnn.push(CnnBlock {
                conv: Conv2d::new(&format!("cnn.{i}.conv"), spec, &mut rng),
                bn: layer
                    .batch_norm
                    .then(|| BatchNorm2d::new(&format!("cnn.{i}.bn"), layer.out_channels)),
                pool: layer.pool,
            });
            channels = layer.out_channels;
        }
        let rnn = config
            .rnn
            .map(|r| LstmStack::new("rnn", config.feature_dim(), r, &mut rng));
        let head = Linear::new("head", config.encoding_dim(), config.num_classes, &mut rng);
        Ok(Model { config, cnn, rnn, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn oriented<'a>(&self, img: &'a GrayImage) -> Result<std::borrow::Cow<'a, GrayImage>> {
        if img.height() != TARGET_HEIGHT {
            return Err(Error::Config(format!(
                "input height {} != {TARGET_HEIGHT}; preprocess the image first",
                img.height()
            )));
        }
        Ok(match self.config.direction {
            Direction::LeftToRight => std::borrow::Cow::Borrowed(img),
            Direction::RightToLeft => std::borrow::Cow::Owned(img.mirrored()),
        })
    }

    fn pixel_features(&self, img: &GrayImage) -> FeatureSequence {
        match self.config.kind {
            ModelKind::ColRnn => extract_columns(img, Direction::LeftToRight),
            ModelKind::WinRnn => {
                let cfg = WindowConfig {
                    direction: Direction::LeftToRight,
                    ..self.config.window.expect("validated")
                };
                extract_windows(img, &cfg)
            }
            _ => unreachable!("pixel features only for RNN kinds"),
        }
    }

    fn cnn_forward_batch(&self, x: Array4<f64>, train: bool) -> (Array4<f64>, Vec<BlockCache>) {
        let mut current = x;
        let mut caches = Vec::with_capacity(self.cnn.len());
        for block in &self.cnn {
            let (mut y, conv) = block.conv.forward(&current);
            let mut bn_cache = None;
            if let Some(bn) = &block.bn {
                let (z, c) = bn.forward(&y, train);
                y = z;
                bn_cache = c;
            }
            y.mapv_inplace(|v| v.max(0.0));
            let (out, pool) = match &block.pool {
                Some(p) => {
                    let (o, c) = p.forward(&y);
                    (o, Some(c))
                }
                None => (y.clone(), None),
            };
            caches.push(BlockCache {
                conv,
                bn: bn_cache,
                activated: y,
                pool,
            });
            current = out;
        }
        (current, caches)
    }

    /// Convolutional feature map of one (preprocessed) image, inference mode.
    pub fn cnn_forward(&self, img: &GrayImage) -> Result<CnnFeatureMap> {
        if !self.config.kind.uses_cnn() {
            return Err(Error::Config(format!("{:?} has no CNN", self.config.kind)));
        }
        let img = self.oriented(img)?;
        let x = self.cnn_input(&[img.as_ref()]);
        let (out, _) = self.cnn_forward_batch(x, false);
        Ok(CnnFeatureMap {
            values: out.index_axis(Axis(0), 0).to_owned(),
        })
    }

    /// Runs the recurrent encoder over one sequence; identity for CNN_only.
    pub fn encode(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        if seq.dim() != self.config.feature_dim() {
            return Err(Error::InvalidInput(format!(
                "feature dim {} != expected {}",
                seq.dim(),
                self.config.feature_dim()
            )));
        }
        let Some(rnn) = &self.rnn else {
            return Ok(seq.clone());
        };
        let t_len = seq.len();
        let x = seq
            .frames()
            .clone()
            .into_shape_with_order((t_len, 1, seq.dim()))
            .expect("reshape");
        let (y, _) = rnn.forward(&x, &Array2::ones((t_len, 1)));
        let d = y.dim().2;
        FeatureSequence::new(y.into_shape_with_order((t_len, d)).expect("reshape"))
    }

    /// Linear projection to `|L′|` classes followed by softmax.
    pub fn decode_head(&self, encoded: &FeatureSequence) -> Result<Posteriorgram> {
        if encoded.dim() != self.config.encoding_dim() {
            return Err(Error::InvalidInput(format!(
                "encoding dim {} != expected {}",
                encoded.dim(),
                self.config.encoding_dim()
            )));
        }
        Posteriorgram::from_logits(&self.head.forward(encoded.frames().view()))
    }

    fn cnn_input(&self, images: &[&GrayImage]) -> Array4<f64> {
        let max_w = images.iter().map(|i| i.width()).max().unwrap_or(1);
        let width = max_w.max(self.config.min_input_width());
        let mut x = Array4::from_elem((images.len(), 1, TARGET_HEIGHT, width), PAD_VALUE);
        for (n, img) in images.iter().enumerate() {
            x.slice_mut(s![n, 0, .., ..img.width()]).assign(img.pixels());
        }
        x
    }

    /// Batched forward pass. `train` selects batch statistics in batch norm.
    pub fn forward(&self, images: &[GrayImage], train: bool) -> Result<(ForwardOutput, ForwardCache)> {
        if images.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let oriented = images.iter().map(|i| self.oriented(i)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&GrayImage> = oriented.iter().map(|c| c.as_ref()).collect();
        let lengths: Vec<usize> = refs.iter().map(|i| self.config.sequence_length(i.width())).collect();
        let n = refs.len();

        let (features, blocks, cnn_out) = if self.config.kind.uses_cnn() {
            let (maps, blocks) = self.cnn_forward_batch(self.cnn_input(&refs), train);
            let (_, c, h, _) = maps.dim();
            (batch_to_sequence(&maps), blocks, Some((c, h)))
        } else {
            let seqs: Vec<FeatureSequence> = refs.iter().map(|i| self.pixel_features(i)).collect();
            let t_max = lengths.iter().copied().max().unwrap_or(1);
            let mut x = Array3::from_elem((t_max, n, self.config.feature_dim()), PAD_VALUE);
            for (b, seq) in seqs.iter().enumerate() {
                x.slice_mut(s![..seq.len(), b, ..]).assign(seq.frames());
            }
            (x, Vec::new(), None)
        };

        let t_max = features.dim().0;
        let mask = Array2::from_shape_fn((t_max, n), |(t, b)| if t < lengths[b] { 1.0 } else { 0.0 });
        let (encoded, rnn_cache) = match &self.rnn {
            Some(rnn) => {
                let (y, c) = rnn.forward(&features, &mask);
                (y, Some(c))
            }
            None => (features, None),
        };
        let d = encoded.dim().2;
        let head_input = encoded.into_shape_with_order((t_max * n, d)).expect("reshape");
        let logits = self
            .head
            .forward(head_input.view())
            .into_shape_with_order((t_max, n, self.config.num_classes))
            .expect("reshape");
        Ok((
            ForwardOutput { logits, lengths },
            ForwardCache {
                blocks,
                cnn_out,
                rnn: rnn_cache,
                head_input,
            },
        ))
    }

    /// Backpropagates `∂loss/∂logits`, accumulating into every parameter's gradient.
    pub fn backward(&mut self, cache: &ForwardCache, dlogits: &Array3<f64>) {
        let (t_max, n, k) = dlogits.dim();
        let dl2 = dlogits.view().into_shape_with_order((t_max * n, k)).expect("contiguous");
        let dh = self.head.backward(cache.head_input.view(), dl2);
        let d = dh.ncols();
        let mut grad = dh.into_shape_with_order((t_max, n, d)).expect("reshape");
        if let (Some(rnn), Some(c)) = (self.rnn.as_mut(), cache.rnn.as_ref()) {
            grad = rnn.backward(c, &grad);
        }
        if let Some((c, h)) = cache.cnn_out {
            let mut g = sequence_to_batch(&grad, c, h);
            for (i, (block, bc)) in self.cnn.iter_mut().zip(&cache.blocks).enumerate().rev() {
                if let (Some(p), Some(pc)) = (&block.pool, &bc.pool) {
                    g = p.backward(pc, &g);
                }
                ndarray::Zip::from(&mut g)
                    .and(&bc.activated)
                    .for_each(|gv, &a| {
                        if a <= 0.0 {
                            *gv = 0.0
                        }
                    });
                if let (Some(bn), Some(nc)) = (block.bn.as_mut(), bc.bn.as_ref()) {
                    g = bn.backward(nc, &g);
                }
                match block.conv.backward(&bc.conv, &g, i > 0) {
                    Some(dx) => g = dx,
                    None => break,
                }
            }
        }
    }

    /// Folds the batch statistics of a training forward pass into the running averages.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (block, bc) in self.cnn.iter_mut().zip(&cache.blocks) {
            if let (Some(bn), Some(nc)) = (block.bn.as_mut(), bc.bn.as_ref()) {
                bn.update_running(nc);
            }
        }
    }

    /// Inference for one preprocessed image.
    pub fn posteriorgram(&self, img: &GrayImage) -> Result<Posteriorgram> {
        let (out, _) = self.forward(std::slice::from_ref(img), false)?;
        out.posteriorgram(0)
    }

    /// Best-path transcription of one preprocessed image.
    pub fn recognize(&self, img: &GrayImage, alphabet: &Alphabet) -> Result<String> {
        let y = self.posteriorgram(img)?;
        Ok(alphabet.decode(&crate::ctc::best_path_decode(&y, alphabet)?))
    }
}

impl Parameterized for Model {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a ParamArray)) {
        for block in &self.cnn {
            block.visit_params(f);
        }
        if let Some(rnn) = &self.rnn {
            rnn.visit_params(f);
        }
        self.head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamArray)) {
        for block in self.cnn.iter_mut() {
            block.visit_params_mut(f);
        }
        if let Some(rnn) = self.rnn.as_mut() {
            rnn.visit_params_mut(f);
        }
        self.head.visit_params_mut(f);
    }
}

/// Mean CTC loss over the feasible samples of a batch and its gradient.
#[derive(Clone, Debug)]
pub struct BatchLoss {
    /// Mean of the per-sample losses over feasible samples (0 when none are).
    pub mean_loss: f64,
    pub dlogits: Array3<f64>,
    pub feasible: usize,
    /// Samples whose target cannot be produced in their frame count.
    pub skipped: usize,
}

/// CTC over each sample's valid frames; infeasible samples are skipped.
pub fn batch_ctc_loss(output: &ForwardOutput, targets: &[Labelling], alphabet: &Alphabet) -> Result<BatchLoss> {
    let (_, n, _) = output.logits.dim();
    if targets.len() != n {
        return Err(Error::InvalidInput(format!("{} targets for {n} samples", targets.len())));
    }
    let mut dlogits = Array3::zeros(output.logits.dim());
    let mut total = 0.0;
    let mut feasible = 0;
    let mut skipped = 0;
    let mut per_sample = Vec::with_capacity(n);
    for (b, target) in targets.iter().enumerate() {
        let y = output.posteriorgram(b)?;
        let r = ctc_loss(target, &y, alphabet)?;
        if r.feasible {
            total += r.loss;
            feasible += 1;
        } else {
            skipped += 1;
        }
        per_sample.push(r);
    }
    if feasible > 0 {
        let scale = 1.0 / feasible as f64;
        for (b, r) in per_sample.iter().enumerate() {
            if r.feasible {
                let len = output.lengths[b];
                dlogits
                    .slice_mut(s![..len, b, ..])
                    .zip_mut_with(&r.grad, |d, &g| *d = g * scale);
            }
        }
    }
    Ok(BatchLoss {
        mean_loss: if feasible > 0 { total / feasible as f64 } else { 0.0 },
        dlogits,
        feasible,
        skipped,
    })
}
