//! Grey-scale images, preprocessing to the recognizer's input height, and
//! the pixel-based feature extractors (single columns and sliding windows).

use std::path::Path as FsPath;

use image::DynamicImage;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input height expected by every model configuration.
pub const TARGET_HEIGHT: usize = 32;

/// Intensity used for columns past the right edge of an image (white).
pub const PAD_VALUE: f64 = 1.0;

/// Grey-scale image with intensities in `[0, 1]`, stored row-major as `H × W`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pixels: Array2<f64>,
}

impl GrayImage {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        if pixels.nrows() == 0 || pixels.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "image must be at least 1x1, got {}x{}",
                pixels.ncols(),
                pixels.nrows()
            )));
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("intensities must lie in [0, 1]".into()));
        }
        Ok(GrayImage { pixels })
    }

    /// Constant-intensity image.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((height, width), value))
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    /// Pixels indexed `[[y, x]]`.
    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array2<f64> {
        self.pixels
    }

    pub fn mirrored(&self) -> GrayImage {
        GrayImage {
            pixels: self.pixels.slice(s![.., ..;-1]).to_owned(),
        }
    }

    /// Sub-image `[x, x+w) × [y, y+h)`; the rectangle must lie inside the image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage> {
        if w == 0 || h == 0 || x + w > self.width() || y + h > self.height() {
            return Err(Error::InvalidInput(format!(
                "box ({x}, {y}, {w}, {h}) outside {}x{} image",
                self.width(),
                self.height()
            )));
        }
        Ok(GrayImage {
            pixels: self.pixels.slice(s![y..y + h, x..x + w]).to_owned(),
        })
    }

    /// Encodes as binary 8-bit PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width(), self.height()).into_bytes();
        out.extend(self.pixels.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Reading direction of the script, which fixes the order of frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    LeftToRight,
    RightToLeft,
}

/// `T × D` sequence of feature vectors, one row per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    frames: Array2<f64>,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::InvalidInput("feature sequence needs at least one frame".into()));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature sequence".into()));
        }
        Ok(FeatureSequence { frames })
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    /// Feature dimension `D`.
    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// Sliding-window geometry for window features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub width: usize,
    pub step: usize,
    #[serde(default)]
    pub direction: Direction,
}

impl WindowConfig {
    pub fn new(width: usize, step: usize, direction: Direction) -> Result<Self> {
        let cfg = WindowConfig { width, step, direction };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.step == 0 {
            return Err(Error::Config("window width and step must be >= 1".into()));
        }
        Ok(())
    }

    /// Frames produced for an image `image_width` pixels wide: `⌊W/S⌋`, at least one.
    pub fn frames_for_width(&self, image_width: usize) -> usize {
        (image_width / self.step).max(1)
    }
}

/// Decodes PNG or PGM bytes to grey scale without resizing.
///
/// Colour inputs are converted with luminance weights 0.299/0.587/0.114;
/// alpha is ignored.
pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Format(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match &img {
        DynamicImage::ImageLuma8(buf) => {
            Array2::from_shape_fn((h, w), |(y, x)| buf.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0)
        }
        DynamicImage::ImageLumaA8(buf) => {
            Array2::from_shape_fn((h, w), |(y, x)| buf.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0)
        }
        DynamicImage::ImageLuma16(buf) => {
            Array2::from_shape_fn((h, w), |(y, x)| buf.get_pixel(x as u32, y as u32).0[0] as f64 / 65535.0)
        }
        DynamicImage::ImageLumaA16(buf) => {
            Array2::from_shape_fn((h, w), |(y, x)| buf.get_pixel(x as u32, y as u32).0[0] as f64 / 65535.0)
        }
        other => {
            let rgb = other.to_rgb16();
            Array2::from_shape_fn((h, w), |(y, x)| {
                let [r, g, b] = rgb.get_pixel(x as u32, y as u32).0;
                let lum = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
                (lum / 65535.0).clamp(0.0, 1.0)
            })
        }
    };
    GrayImage::new(pixels)
}

/// Aspect-preserving bilinear resize to `height` rows.
///
/// The output width is `round(W · height / H)`, clamped to at least 1.
pub fn resize_to_height(img: &GrayImage, height: usize) -> GrayImage {
    let width = ((img.width() as f64 * height as f64 / img.height() as f64).round() as usize).max(1);
    resize(img, width, height)
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize(img: &GrayImage, width: usize, height: usize) -> GrayImage {
    if width == img.width() && height == img.height() {
        return img.clone();
    }
    let taps = |out_len: usize, in_len: usize| -> Vec<(usize, usize, f64)> {
        let scale = in_len as f64 / out_len as f64;
        (0..out_len)
            .map(|i| {
                let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(in_len - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let rows = taps(height, img.height());
    let cols = taps(width, img.width());
    let src = img.pixels();
    let pixels = Array2::from_shape_fn((height, width), |(y, x)| {
        let (y0, y1, wy) = rows[y];
        let (x0, x1, wx) = cols[x];
        let top = src[[y0, x0]] * (1.0 - wx) + src[[y0, x1]] * wx;
        let bottom = src[[y1, x0]] * (1.0 - wx) + src[[y1, x1]] * wx;
        (top * (1.0 - wy) + bottom * wy).clamp(0.0, 1.0)
    });
    GrayImage { pixels }
}

/// Decodes an image and normalizes it to the recognizer's input: grey scale,
/// height [`TARGET_HEIGHT`], original aspect ratio.
pub fn preprocess(bytes: &[u8]) -> Result<GrayImage> {
    Ok(resize_to_height(&decode(bytes)?, TARGET_HEIGHT))
}

pub fn load(path: impl AsRef<FsPath>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn load_preprocessed(path: impl AsRef<FsPath>) -> Result<GrayImage> {
    Ok(resize_to_height(&load(path)?, TARGET_HEIGHT))
}

/// One frame per image column (`T = W`, `D = H`).
pub fn extract_columns(img: &GrayImage, direction: Direction) -> FeatureSequence {
    let frames = match direction {
        Direction::LeftToRight => img.pixels().t().to_owned(),
        Direction::RightToLeft => img.pixels().slice(s![.., ..;-1]).t().to_owned(),
    };
    FeatureSequence { frames }
}

/// Stacks the columns of a `width × H` window moved by `step` pixels.
///
/// Frame `t` covers columns `[t·step, t·step + width)`; feature index
/// `j·H + y` holds column `j` of the window, row `y`. Columns past the
/// right edge read as [`PAD_VALUE`].
pub fn extract_windows(img: &GrayImage, cfg: &WindowConfig) -> FeatureSequence {
    let source = match cfg.direction {
        Direction::LeftToRight => img.clone(),
        Direction::RightToLeft => img.mirrored(),
    };
    let (h, w) = (source.height(), source.width());
    let t_len = cfg.frames_for_width(w);
    let px = source.pixels();
    let frames = Array2::from_shape_fn((t_len, h * cfg.width), |(t, d)| {
        let (j, y) = (d / h, d % h);
        let x = t * cfg.step + j;
        if x < w {
            px[[y, x]]
        } else {
            PAD_VALUE
        }
    });
    FeatureSequence { frames }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, ImageFormat, Luma, Rgb};
    use proptest::prelude::*;
    use std::io::Cursor;

    fn png_gray(w: u32, h: u32) -> Vec<u8> {
        let buf = ImageBuffer::from_fn(w, h, |x, y| Luma([((x * 7 + y * 3) % 256) as u8]));
        let mut out = Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(buf).write_to(&mut out, ImageFormat::Png).unwrap();
        out.into_inner()
    }

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::new(Array2::from_shape_fn((h, w), |(y, x)| ((x * 13 + y * 7) % 17) as f64 / 16.0)).unwrap()
    }

    #[test]
    fn preprocess_shapes() {
        let img = preprocess(&png_gray(64, 64)).unwrap();
        assert_eq!((img.width(), img.height()), (32, 32));
        let img = preprocess(&png_gray(200, 50)).unwrap();
        assert_eq!((img.width(), img.height()), (128, 32));
        let img = preprocess(&png_gray(10, 400)).unwrap();
        assert_eq!((img.width(), img.height()), (1, 32));
    }

    #[test]
    fn preprocess_rejects_garbage() {
        assert!(matches!(preprocess(b"not an image"), Err(Error::Format(_))));
    }

    #[test]
    fn colour_uses_luminance_weights() {
        let buf = ImageBuffer::from_pixel(2, 2, Rgb([255u8, 0, 0]));
        let mut out = Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(buf).write_to(&mut out, ImageFormat::Png).unwrap();
        let img = decode(&out.into_inner()).unwrap();
        assert!((img.pixels()[[0, 0]] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn pgm_round_trip_is_stable() {
        let once = preprocess(&png_gray(90, 45)).unwrap();
        let reread = preprocess(&once.to_pgm()).unwrap();
        let again = preprocess(&reread.to_pgm()).unwrap();
        assert_eq!(reread, again);
        assert_eq!(reread, decode(&once.to_pgm()).unwrap());
    }

    #[test]
    fn column_features() {
        let img = ramp(10, 32);
        let seq = extract_columns(&img, Direction::LeftToRight);
        assert_eq!((seq.len(), seq.dim()), (10, 32));
        assert_eq!(seq.frames()[[3, 5]], img.pixels()[[5, 3]]);

        let flat = GrayImage::filled(7, 32, 0.5).unwrap();
        assert!(extract_columns(&flat, Direction::LeftToRight).frames().iter().all(|&v| v == 0.5));

        assert_eq!(
            extract_columns(&img, Direction::RightToLeft),
            extract_columns(&img.mirrored(), Direction::LeftToRight)
        );
    }

    #[test]
    fn window_features() {
        let cfg = WindowConfig::new(20, 5, Direction::LeftToRight).unwrap();
        let seq = extract_windows(&ramp(100, 32), &cfg);
        assert_eq!((seq.len(), seq.dim()), (20, 640));

        let img = ramp(7, 32);
        let seq = extract_windows(&img, &cfg);
        assert_eq!(seq.len(), 1);
        let frame = seq.frames().row(0);
        assert!(frame.iter().skip(7 * 32).all(|&v| v == PAD_VALUE));
        assert_eq!(frame.len() - 7 * 32, 13 * 32);
        assert_eq!(frame[32 * 6 + 4], img.pixels()[[4, 6]]);

        let unit = WindowConfig::new(1, 1, Direction::LeftToRight).unwrap();
        let img = ramp(23, 32);
        assert_eq!(extract_windows(&img, &unit), extract_columns(&img, Direction::LeftToRight));
        assert!(WindowConfig::new(0, 1, Direction::LeftToRight).is_err());
    }

    #[test]
    fn crop_bounds() {
        let img = ramp(10, 8);
        assert_eq!(img.crop(2, 1, 3, 4).unwrap().pixels()[[0, 0]], img.pixels()[[1, 2]]);
        assert!(img.crop(8, 0, 3, 4).is_err());
        assert!(img.crop(0, 0, 0, 4).is_err());
    }

    proptest! {
        #[test]
        fn resize_is_idempotent(w in 1usize..120, h in 1usize..80, seed in 0u64..1000) {
            let px = Array2::from_shape_fn((h, w), |(y, x)| ((x as u64 * 31 + y as u64 * 17 + seed) % 101) as f64 / 100.0);
            let img = GrayImage::new(px).unwrap();
            let once = resize_to_height(&img, TARGET_HEIGHT);
            prop_assert_eq!(once.height(), TARGET_HEIGHT);
            prop_assert!(once.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(resize_to_height(&once, TARGET_HEIGHT), once);
        }

        #[test]
        fn features_stay_in_unit_range(w in 1usize..60, ww in 1usize..25, step in 1usize..8) {
            let img = ramp(w, 32);
            let cfg = WindowConfig::new(ww, step, Direction::LeftToRight).unwrap();
            let seq = extract_windows(&img, &cfg);
            prop_assert_eq!(seq.len(), (w / step).max(1));
            prop_assert!(seq.frames().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
