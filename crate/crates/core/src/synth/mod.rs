//! Synthetic word images: random styling over a pluggable glyph renderer,
//! skew, optional Gaussian smoothing and resizing to the recognizer height.

mod font;

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Manifest, ManifestEntry, Split, Unit};
use crate::error::{Error, Result};
use crate::imaging::{resize_to_height, GrayImage, TARGET_HEIGHT};

/// Styling of one rendered word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub text: String,
    pub font_id: String,
    /// Glyph cell height in pixels before the final resize.
    pub font_size: usize,
    pub bold: bool,
    pub italic: bool,
    pub fg_intensity: f64,
    pub bg_intensity: f64,
    /// Extra pixels between glyphs; may be negative.
    pub kerning: i32,
    pub skew_degrees: f64,
    /// 0 for no smoothing.
    pub blur_sigma: f64,
    pub seed: u64,
}

impl RenderSpec {
    /// Plain black-on-white rendering with no jitter.
    pub fn plain(text: impl Into<String>, font_id: impl Into<String>, font_size: usize) -> Self {
        RenderSpec {
            text: text.into(),
            font_id: font_id.into(),
            font_size,
            bold: false,
            italic: false,
            fg_intensity: 0.0,
            bg_intensity: 1.0,
            kerning: 0,
            skew_degrees: 0.0,
            blur_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bg_intensity <= self.fg_intensity {
            return Err(Error::Config("background must be lighter than foreground".into()));
        }
        if !(0.0..=1.0).contains(&self.fg_intensity) || !(0.0..=1.0).contains(&self.bg_intensity) {
            return Err(Error::Config("intensities must lie in [0, 1]".into()));
        }
        if self.font_size == 0 {
            return Err(Error::Config("font size must be positive".into()));
        }
        if self.blur_sigma < 0.0 || !self.skew_degrees.is_finite() {
            return Err(Error::Config("invalid blur or skew".into()));
        }
        Ok(())
    }
}

/// Source of glyph coverage rasters. Complex-script shaping would plug in here.
pub trait GlyphRenderer {
    fn font_ids(&self) -> Vec<String>;

    /// Coverage in `[0, 1]` for one character drawn `size` pixels tall, or
    /// `None` when the font has no glyph for it.
    fn rasterize(&self, font_id: &str, ch: char, size: usize) -> Result<Option<Array2<f64>>>;

    /// Horizontal gap between glyphs before kerning.
    fn spacing(&self, size: usize) -> usize {
        (size as f64 / 7.0).round().max(1.0) as usize
    }
}

/// Built-in 5×7 bitmap font, scaled by nearest neighbour.
#[derive(Clone, Copy, Debug, Default)]
pub struct BitmapFont;

impl BitmapFont {
    pub const FONT_ID: &'static str = "bitmap5x7";

    /// Glyph width at a given cell height.
    pub fn cell_width(size: usize) -> usize {
        ((size * font::GLYPH_COLS) as f64 / font::GLYPH_ROWS as f64).round().max(1.0) as usize
    }
}

impl GlyphRenderer for BitmapFont {
    fn font_ids(&self) -> Vec<String> {
        vec![Self::FONT_ID.to_string()]
    }

    fn rasterize(&self, font_id: &str, ch: char, size: usize) -> Result<Option<Array2<f64>>> {
        if font_id != Self::FONT_ID {
            return Err(Error::Config(format!("unknown font {font_id:?}")));
        }
        let Some(rows) = font::glyph_rows(ch) else {
            return Ok(None);
        };
        let width = Self::cell_width(size);
        Ok(Some(Array2::from_shape_fn((size, width), |(y, x)| {
            let gy = y * font::GLYPH_ROWS / size;
            let gx = x * font::GLYPH_COLS / width;
            let bit = (rows[gy] >> (font::GLYPH_COLS - 1 - gx)) & 1;
            bit as f64
        })))
    }
}

/// Result of rasterizing a spec before the final resize.
#[derive(Clone, Debug)]
pub struct RenderedText {
    pub image: GrayImage,
    /// Ink coverage in `[0, 1]`, same shape as `image`.
    pub mask: Array2<f64>,
    /// Left edge of each glyph before skew.
    pub glyph_offsets: Vec<usize>,
}

const ITALIC_SHEAR: f64 = 0.2;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian smoothing with edge clamping.
pub fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = img.dim();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let horiz: Array2<f64> = Array2::from_shape_fn((h, w), |(y, x)| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * img[[y, clamp(x as isize + i as isize - r, w)]])
            .sum::<f64>()
    });
    Array2::from_shape_fn((h, w), |(y, x)| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * horiz[[clamp(y as isize + i as isize - r, h), x]])
            .sum::<f64>()
            .clamp(0.0, 1.0)
    })
}

/// Rasterizes at native size: glyphs, bold dilation, skew/italic shear, blur.
pub fn render_unscaled(renderer: &dyn GlyphRenderer, spec: &RenderSpec) -> Result<RenderedText> {
    spec.validate()?;
    if spec.text.is_empty() {
        return Err(Error::InvalidInput("cannot render empty text".into()));
    }
    let size = spec.font_size;
    let mut glyphs = Vec::new();
    let mut missing = Vec::new();
    for ch in spec.text.chars() {
        match renderer.rasterize(&spec.font_id, ch, size)? {
            Some(g) => glyphs.push(g),
            None => {
                if !missing.contains(&ch) {
                    missing.push(ch)
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingGlyph {
            font: spec.font_id.clone(),
            chars: missing,
        });
    }
    if spec.bold {
        let stroke = (size / 10).max(1);
        glyphs = glyphs
            .into_iter()
            .map(|g| {
                let (gh, gw) = g.dim();
                Array2::from_shape_fn((gh, gw + stroke), |(y, x)| {
                    (0..=stroke)
                        .filter_map(|d| x.checked_sub(d).filter(|&sx| sx < gw))
                        .map(|sx| g[[y, sx]])
                        .fold(0.0, f64::max)
                })
            })
            .collect();
    }

    let margin_y = ((size * 2) as f64 / 7.0).round() as usize;
    let margin_x = margin_y.max(1);
    let gap = renderer.spacing(size) as i64 + spec.kerning as i64;
    let mut offsets = Vec::with_capacity(glyphs.len());
    let mut x = margin_x as i64;
    let mut right = x;
    for g in &glyphs {
        offsets.push(x.max(0) as usize);
        right = right.max(x + g.ncols() as i64);
        x += (g.ncols() as i64 + gap).max(1);
    }
    let height = size + 2 * margin_y;
    let text_width = right as usize + margin_x;
    let mut flat = Array2::<f64>::zeros((height, text_width));
    for (g, &off) in glyphs.iter().zip(&offsets) {
        for ((y, gx), &v) in g.indexed_iter() {
            let cell = &mut flat[[margin_y + y, off + gx]];
            *cell = cell.max(v);
        }
    }

    let shear = spec.skew_degrees.to_radians().tan() + if spec.italic { ITALIC_SHEAR } else { 0.0 };
    let mask = if shear == 0.0 {
        flat
    } else {
        let span = shear.abs() * (height - 1) as f64;
        let width = text_width + span.ceil() as usize;
        let base = if shear < 0.0 { span } else { 0.0 };
        Array2::from_shape_fn((height, width), |(y, x)| {
            // rows nearer the top move further right for positive shear
            let src = x as f64 - (shear * (height - 1 - y) as f64 + base);
            let x0 = src.floor();
            let frac = src - x0;
            let at = |xi: f64| {
                if xi < 0.0 || xi >= text_width as f64 {
                    0.0
                } else {
                    flat[[y, xi as usize]]
                }
            };
            at(x0) * (1.0 - frac) + at(x0 + 1.0) * frac
        })
    };

    let (fg, bg) = (spec.fg_intensity, spec.bg_intensity);
    let mut pixels = mask.mapv(|c| bg + (fg - bg) * c);
    if spec.blur_sigma > 0.0 {
        pixels = gaussian_blur(&pixels, spec.blur_sigma);
    }
    Ok(RenderedText {
        image: GrayImage::new(pixels)?,
        mask,
        glyph_offsets: offsets,
    })
}

/// Renders a spec and resizes to the recognizer height.
pub fn render(renderer: &dyn GlyphRenderer, spec: &RenderSpec) -> Result<GrayImage> {
    Ok(resize_to_height(&render_unscaled(renderer, spec)?.image, TARGET_HEIGHT))
}

/// Like [`render`] but also returns the resized ink mask.
pub fn render_with_mask(renderer: &dyn GlyphRenderer, spec: &RenderSpec) -> Result<(GrayImage, Array2<f64>)> {
    let raw = render_unscaled(renderer, spec)?;
    let image = resize_to_height(&raw.image, TARGET_HEIGHT);
    let mask = resize_to_height(&GrayImage::new(raw.mask.mapv(|v| v.clamp(0.0, 1.0)))?, TARGET_HEIGHT).into_pixels();
    Ok((image, mask))
}

/// Ranges the styling jitter is drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub font_size: (usize, usize),
    pub skew_degrees: (f64, f64),
    pub kerning: (i32, i32),
    pub fg_intensity: (f64, f64),
    pub bg_intensity: (f64, f64),
    pub bold_probability: f64,
    pub italic_probability: f64,
    pub blur_probability: f64,
    pub blur_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            font_size: (24, 48),
            skew_degrees: (-3.0, 3.0),
            kerning: (-1, 2),
            fg_intensity: (0.0, 0.3),
            bg_intensity: (0.7, 1.0),
            bold_probability: 0.25,
            italic_probability: 0.25,
            blur_probability: 0.25,
            blur_sigma: 0.5,
        }
    }
}

impl SynthConfig {
    /// High contrast, upright, regular weight.
    pub fn clean() -> Self {
        SynthConfig {
            font_size: (28, 36),
            skew_degrees: (0.0, 0.0),
            kerning: (0, 1),
            fg_intensity: (0.0, 0.1),
            bg_intensity: (0.9, 1.0),
            bold_probability: 0.0,
            italic_probability: 0.0,
            ..Self::default()
        }
    }

    /// Low contrast, strongly slanted, frequently bold or italic, tight spacing.
    pub fn degraded() -> Self {
        SynthConfig {
            font_size: (20, 32),
            skew_degrees: (-8.0, 8.0),
            kerning: (-2, 1),
            fg_intensity: (0.25, 0.45),
            bg_intensity: (0.55, 0.8),
            bold_probability: 0.5,
            italic_probability: 0.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = self.font_size.0 <= self.font_size.1
            && self.skew_degrees.0 <= self.skew_degrees.1
            && self.kerning.0 <= self.kerning.1
            && self.fg_intensity.0 <= self.fg_intensity.1
            && self.bg_intensity.0 <= self.bg_intensity.1;
        if !ordered || self.font_size.0 == 0 {
            return Err(Error::Config("jitter ranges must be non-empty".into()));
        }
        if self.fg_intensity.1 >= self.bg_intensity.0 {
            return Err(Error::Config("foreground range must lie below background range".into()));
        }
        if self.fg_intensity.0 < 0.0 || self.bg_intensity.1 > 1.0 {
            return Err(Error::Config("intensities must lie in [0, 1]".into()));
        }
        for p in [self.bold_probability, self.italic_probability, self.blur_probability] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config("probabilities must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

fn uniform_f64(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws a random styling for `text`.
pub fn sample_spec(text: &str, fonts: &[String], config: &SynthConfig, rng: &mut impl Rng) -> Result<RenderSpec> {
    if text.is_empty() {
        return Err(Error::InvalidInput("cannot render empty text".into()));
    }
    if fonts.is_empty() {
        return Err(Error::Config("no fonts registered".into()));
    }
    config.validate()?;
    let font_id = fonts[rng.random_range(0..fonts.len())].clone();
    let font_size = rng.random_range(config.font_size.0..=config.font_size.1);
    let bold = rng.random_bool(config.bold_probability);
    let italic = rng.random_bool(config.italic_probability);
    let fg_intensity = uniform_f64(rng, config.fg_intensity);
    let bg_intensity = uniform_f64(rng, config.bg_intensity);
    let kerning = rng.random_range(config.kerning.0..=config.kerning.1);
    let skew_degrees = uniform_f64(rng, config.skew_degrees);
    let blur_sigma = if rng.random_bool(config.blur_probability) {
        config.blur_sigma
    } else {
        0.0
    };
    let seed = rng.random();
    Ok(RenderSpec {
        text: text.to_owned(),
        font_id,
        font_size,
        bold,
        italic,
        fg_intensity,
        bg_intensity,
        kerning,
        skew_degrees,
        blur_sigma,
        seed,
    })
}

/// RNG stream for image `index` of a corpus; independent of generation order.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// How many images a corpus holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusSize {
    /// Every lexicon word rendered this many times, in lexicon order.
    PerWord(usize),
    /// This many images, each of a uniformly drawn lexicon word.
    Total(usize),
}

/// Options for [`generate_corpus`].
#[derive(Clone, Debug)]
pub struct CorpusOptions {
    pub config: SynthConfig,
    pub split: Split,
    pub seed: u64,
    /// File name prefix, so several corpora can share a directory.
    pub prefix: String,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            config: SynthConfig::default(),
            split: Split::Train,
            seed: 0,
            prefix: "img".into(),
        }
    }
}

/// Renders a lexicon into `out_dir` as PGM files and returns their manifest.
pub fn generate_corpus(
    renderer: &dyn GlyphRenderer,
    lexicon: &[String],
    size: CorpusSize,
    out_dir: &Path,
    options: &CorpusOptions,
) -> Result<Manifest> {
    if lexicon.is_empty() {
        return Err(Error::InvalidInput("empty lexicon".into()));
    }
    options.config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let fonts = renderer.font_ids();
    let total = match size {
        CorpusSize::PerWord(n) => n * lexicon.len(),
        CorpusSize::Total(n) => n,
    };
    let mut manifest = Manifest::new(out_dir, Unit::Word);
    for i in 0..total {
        let mut rng = item_rng(options.seed, i as u64);
        let word = match size {
            CorpusSize::PerWord(n) => &lexicon[i / n],
            CorpusSize::Total(_) => &lexicon[rng.random_range(0..lexicon.len())],
        };
        let spec = sample_spec(word, &fonts, &options.config, &mut rng)?;
        let image = render(renderer, &spec)?;
        let name = format!("{}{i:06}.pgm", options.prefix);
        image.save_pgm(out_dir.join(&name))?;
        manifest.entries.push(ManifestEntry {
            path: name.into(),
            text: word.clone(),
            split: options.split,
        });
    }
    Ok(manifest)
}

/// `count` distinct random words with lengths in `min_len..=max_len` over `symbols`.
pub fn random_lexicon(symbols: &[char], count: usize, min_len: usize, max_len: usize, seed: u64) -> Result<Vec<String>> {
    if symbols.is_empty() || min_len == 0 || min_len > max_len {
        return Err(Error::InvalidInput("invalid lexicon parameters".into()));
    }
    let capacity: f64 = (min_len..=max_len).map(|l| (symbols.len() as f64).powi(l as i32)).sum();
    if (count as f64) > capacity {
        return Err(Error::InvalidInput(format!("cannot draw {count} distinct words")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Vec::with_capacity(count);
    let mut seen = std::collections::HashSet::new();
    while words.len() < count {
        let len = rng.random_range(min_len..=max_len);
        let w: String = (0..len).map(|_| symbols[rng.random_range(0..symbols.len())]).collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fonts() -> Vec<String> {
        BitmapFont.font_ids()
    }

    #[test]
    fn blur_fraction_is_a_quarter() {
        let config = SynthConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let blurred = (0..n)
            .filter(|_| sample_spec("ab", &fonts(), &config, &mut rng).unwrap().blur_sigma == 0.5)
            .count();
        let frac = blurred as f64 / n as f64;
        assert!((frac - 0.25).abs() <= 0.02, "blur fraction {frac}");
    }

    #[test]
    fn sampled_specs_respect_ranges() {
        let config = SynthConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let s = sample_spec("a1", &fonts(), &config, &mut rng).unwrap();
            assert!(s.bg_intensity > s.fg_intensity);
            assert!((24..=48).contains(&s.font_size));
            assert!(s.skew_degrees.abs() <= 3.0);
            assert!((-1..=2).contains(&s.kerning));
        }
    }

    #[test]
    fn sample_spec_is_deterministic() {
        let a = sample_spec("42", &fonts(), &SynthConfig::default(), &mut item_rng(9, 3)).unwrap();
        let b = sample_spec("42", &fonts(), &SynthConfig::default(), &mut item_rng(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_spec_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_spec("a", &[], &SynthConfig::default(), &mut rng),
            Err(Error::Config(_))
        ));
        assert!(sample_spec("", &fonts(), &SynthConfig::default(), &mut rng).is_err());
        let bad = SynthConfig {
            fg_intensity: (0.0, 0.8),
            ..SynthConfig::default()
        };
        assert!(sample_spec("a", &fonts(), &bad, &mut rng).is_err());
    }

    #[test]
    fn glyphs_land_at_layout_offsets() {
        let spec = RenderSpec::plain("1a", BitmapFont::FONT_ID, 14);
        let r = render_unscaled(&BitmapFont, &spec).unwrap();
        // size 14: margin 4, cell 10, gap 2
        assert_eq!(r.glyph_offsets, vec![4, 16]);
        assert_eq!(r.image.height(), 14 + 8);
        assert_eq!(r.image.width(), 4 + 10 + 2 + 10 + 4);
        // '1' top row is 00100: ink in cell columns 4..6
        let top = r.mask.row(4);
        assert_eq!(top[4 + 4], 1.0);
        assert_eq!(top[4 + 3], 0.0);
        assert_eq!(top[4 + 6], 0.0);
        assert!(r.mask.column(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blur_changes_only_blurred_renders() {
        let plain = RenderSpec::plain("ab", BitmapFont::FONT_ID, 28);
        let blurred = RenderSpec {
            blur_sigma: 0.5,
            ..plain.clone()
        };
        let raw = render_unscaled(&BitmapFont, &plain).unwrap();
        let unblurred = raw.mask.mapv(|c| 1.0 - c);
        assert_eq!(raw.image.pixels(), &unblurred);
        assert_ne!(render(&BitmapFont, &plain).unwrap(), render(&BitmapFont, &blurred).unwrap());
    }

    #[test]
    fn missing_glyph_lists_characters() {
        let spec = RenderSpec::plain("a€b£", BitmapFont::FONT_ID, 14);
        match render(&BitmapFont, &spec) {
            Err(Error::MissingGlyph { chars, .. }) => assert_eq!(chars, vec!['€', '£']),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn renders_have_height_32_and_light_background() {
        let config = SynthConfig::default();
        for i in 0..60 {
            let mut rng = item_rng(77, i);
            let spec = sample_spec("Ab3", &fonts(), &config, &mut rng).unwrap();
            let (img, mask) = render_with_mask(&BitmapFont, &spec).unwrap();
            assert_eq!(img.height(), TARGET_HEIGHT);
            assert!(img.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
            let (mut fg, mut nf, mut bg, mut nb) = (0.0, 0, 0.0, 0);
            for (&p, &m) in img.pixels().iter().zip(mask.iter()) {
                if m > 0.5 {
                    fg += p;
                    nf += 1;
                } else {
                    bg += p;
                    nb += 1;
                }
            }
            assert!(nf > 0 && nb > 0);
            assert!(bg / nb as f64 > fg / nf as f64, "spec {spec:?}");
        }
    }

    #[test]
    fn gaussian_kernel_is_normalized() {
        let k = gaussian_kernel(0.5);
        assert_eq!(k.len(), 5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let flat = Array2::from_elem((5, 5), 0.3);
        assert!(gaussian_blur(&flat, 0.5).iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn lexicon_is_distinct_and_bounded() {
        let symbols: Vec<char> = "0123456789".chars().collect();
        let words = random_lexicon(&symbols, 200, 1, 5, 1).unwrap();
        assert_eq!(words.len(), 200);
        let set: std::collections::HashSet<_> = words.iter().collect();
        assert_eq!(set.len(), 200);
        assert!(words.iter().all(|w| (1..=5).contains(&w.len())));
        assert!(random_lexicon(&['a'], 3, 1, 2, 0).is_err());
    }
}
