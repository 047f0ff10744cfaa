//! Page OCR from externally supplied detections: crop each box, recognize
//! it, and join the transcriptions in reading order.
//!
//! Detection files hold one box per line, `x y w h order_index unit [line_id]`,
//! with `#` comments and an optional `page <path>` line.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ctc::Alphabet;
use crate::dataset::Unit;
use crate::error::{Error, Result};
use crate::imaging::{resize_to_height, Direction, GrayImage, TARGET_HEIGHT};
use crate::metrics::{word_accuracy, EvalReport};
use crate::nn::{Checkpoint, Model};

/// One detected word or line, in page pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub order_index: u32,
    pub unit: Unit,
    /// Words sharing a line id are joined by spaces; a change starts a new line.
    pub line_id: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionSet {
    pub page: Option<PathBuf>,
    pub boxes: Vec<DetectionBox>,
}

fn field<T: std::str::FromStr>(tok: Option<&str>, name: &str, line: usize) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::InvalidInput(format!("line {line}: missing {name}")))?;
    tok.parse()
        .map_err(|_| Error::InvalidInput(format!("line {line}: bad {name} {tok:?}")))
}

impl DetectionSet {
    pub fn parse(text: &str) -> Result<Self> {
        let mut set = DetectionSet::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(path) = content.strip_prefix("page ") {
                set.page = Some(PathBuf::from(path.trim()));
                continue;
            }
            let mut toks = content.split_whitespace();
            let b = DetectionBox {
                x: field(toks.next(), "x", line)?,
                y: field(toks.next(), "y", line)?,
                w: field(toks.next(), "w", line)?,
                h: field(toks.next(), "h", line)?,
                order_index: field(toks.next(), "order_index", line)?,
                unit: field(toks.next(), "unit", line)?,
                line_id: toks.next().map(|t| field(Some(t), "line_id", line)).transpose()?,
            };
            if toks.next().is_some() {
                return Err(Error::InvalidInput(format!("line {line}: trailing fields")));
            }
            if !seen.insert(b.order_index) {
                return Err(Error::InvalidInput(format!("line {line}: duplicate order_index {}", b.order_index)));
            }
            set.boxes.push(b);
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Outcome for one box: its text, or why it was skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxResult {
    pub detection: DetectionBox,
    pub text: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageResult {
    pub text: String,
    /// In reading order.
    pub per_box: Vec<BoxResult>,
}

impl PageResult {
    /// Joins recognized boxes: words on a line by a space, lines by a newline.
    /// Skipped boxes contribute nothing.
    pub fn join(per_box: &[BoxResult]) -> String {
        let mut out = String::new();
        let mut prev: Option<&DetectionBox> = None;
        for r in per_box {
            let Some(text) = &r.text else { continue };
            let d = &r.detection;
            if let Some(p) = prev {
                let same_line = d.unit == Unit::Word && p.unit == Unit::Word && d.line_id == p.line_id;
                out.push(if same_line { ' ' } else { '\n' });
            }
            out.push_str(text);
            prev = Some(d);
        }
        out
    }
}

/// A restored model with its alphabet and unit.
#[derive(Clone, Debug)]
pub struct Recognizer {
    pub model: Model,
    pub alphabet: Alphabet,
    pub unit: Unit,
}

impl Recognizer {
    /// Restores `checkpoint`, reading in `direction`.
    pub fn new(checkpoint: &Checkpoint, direction: Direction) -> Result<Self> {
        let mut ck = checkpoint.clone();
        ck.meta.config.direction = direction;
        Ok(Recognizer {
            model: ck.restore()?,
            alphabet: ck.meta.alphabet,
            unit: ck.meta.unit,
        })
    }

    /// Recognizes a crop of any height.
    pub fn recognize(&self, crop: &GrayImage) -> Result<String> {
        let img = if crop.height() == TARGET_HEIGHT {
            crop.clone()
        } else {
            resize_to_height(crop, TARGET_HEIGHT)
        };
        self.model.recognize(&img, &self.alphabet)
    }
}

/// Crops, recognizes and joins every box of `detections` in order_index order.
pub fn recognize_page(page: &GrayImage, detections: &DetectionSet, recognizer: &Recognizer) -> Result<PageResult> {
    if let Some(b) = detections.boxes.iter().find(|b| b.unit != recognizer.unit) {
        return Err(Error::Config(format!(
            "{} box with a {} model",
            b.unit, recognizer.unit
        )));
    }
    let mut boxes = detections.boxes.clone();
    boxes.sort_by_key(|b| b.order_index);
    let mut per_box = Vec::with_capacity(boxes.len());
    for b in boxes {
        let result = page
            .crop(b.x, b.y, b.w, b.h)
            .and_then(|crop| recognizer.recognize(&crop));
        per_box.push(match result {
            Ok(text) => BoxResult {
                detection: b,
                text: Some(text),
                error: None,
            },
            Err(e) => BoxResult {
                detection: b,
                text: None,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(PageResult {
        text: PageResult::join(&per_box),
        per_box,
    })
}

/// CA, SA and WA of a page transcription against its ground truth.
pub fn score_page(result: &PageResult, gt_text: &str) -> Result<EvalReport> {
    let mut report = EvalReport::from_pairs(&[(result.text.as_str(), gt_text)])?;
    report.word_accuracy = Some(word_accuracy(&result.text, gt_text)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{CheckpointMeta, ModelConfig, ModelKind};
    use proptest::prelude::*;

    fn word(order: u32, line: Option<u32>) -> DetectionBox {
        DetectionBox {
            x: 0,
            y: 0,
            w: 10,
            h: 10,
            order_index: order,
            unit: Unit::Word,
            line_id: line,
        }
    }

    fn ok(d: DetectionBox, t: &str) -> BoxResult {
        BoxResult {
            detection: d,
            text: Some(t.into()),
            error: None,
        }
    }

    fn recognizer(unit: Unit) -> Recognizer {
        let alphabet = Alphabet::new("ab".chars()).unwrap();
        let config = ModelConfig::tiny(ModelKind::ColRnn, alphabet.num_classes(), 3);
        let model = Model::new(config.clone(), 4).unwrap();
        let ck = Checkpoint::capture(&model, CheckpointMeta::new(config, alphabet, unit));
        Recognizer::new(&ck, Direction::LeftToRight).unwrap()
    }

    fn page() -> GrayImage {
        GrayImage::new(ndarray::Array2::from_shape_fn((40, 90), |(y, x)| ((x * 7 + y * 3) % 11) as f64 / 10.0)).unwrap()
    }

    #[test]
    fn parses_detection_files() {
        let text = "# boxes\npage scans/p1.png\n10 5 40 20 2 word 0\n0 0 8 8 1 word 0 # first\n\n3 4 5 6 3 line\n";
        let d = DetectionSet::parse(text).unwrap();
        assert_eq!(d.page, Some(PathBuf::from("scans/p1.png")));
        assert_eq!(d.boxes.len(), 3);
        assert_eq!(d.boxes[0].x, 10);
        assert_eq!(d.boxes[0].line_id, Some(0));
        assert_eq!(d.boxes[2].unit, Unit::Line);
        assert_eq!(d.boxes[2].line_id, None);
        assert!(DetectionSet::parse("1 2 3 4 1 word\n1 2 3 4 1 word\n").is_err());
        assert!(DetectionSet::parse("1 2 3 word\n").is_err());
        assert!(DetectionSet::parse("1 2 3 4 1 glyph\n").is_err());
        assert!(DetectionSet::parse("1 2 3 4 1 word 0 9\n").is_err());
    }

    #[test]
    fn join_rules() {
        let r = [ok(word(0, Some(0)), "ab"), ok(word(1, Some(0)), "c"), ok(word(2, Some(1)), "d")];
        assert_eq!(PageResult::join(&r), "ab c\nd");
        let r = [ok(word(0, None), "ab"), ok(word(1, None), "c")];
        assert_eq!(PageResult::join(&r), "ab c");
        let mut line = word(0, None);
        line.unit = Unit::Line;
        let mut line2 = line;
        line2.order_index = 1;
        assert_eq!(PageResult::join(&[ok(line, "a b"), ok(line2, "c")]), "a b\nc");
    }

    #[test]
    fn empty_detections_give_empty_page() {
        let r = recognize_page(&page(), &DetectionSet::default(), &recognizer(Unit::Word)).unwrap();
        assert_eq!(r.text, "");
        assert!(r.per_box.is_empty());
    }

    #[test]
    fn unit_mismatch_is_config_error() {
        let d = DetectionSet {
            page: None,
            boxes: vec![word(0, None)],
        };
        assert!(matches!(
            recognize_page(&page(), &d, &recognizer(Unit::Line)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn out_of_bounds_box_is_skipped() {
        let mut bad = word(1, None);
        bad.x = 85;
        let d = DetectionSet {
            page: None,
            boxes: vec![bad, word(0, None)],
        };
        let rec = recognizer(Unit::Word);
        let r = recognize_page(&page(), &d, &rec).unwrap();
        assert_eq!(r.per_box.len(), 2);
        assert!(r.per_box[0].error.is_none());
        assert!(r.per_box[1].error.is_some() && r.per_box[1].text.is_none());
        assert_eq!(r.text, r.per_box[0].text.clone().unwrap());
    }

    #[test]
    fn single_box_equals_direct_recognition() {
        let rec = recognizer(Unit::Word);
        let b = DetectionBox {
            x: 7,
            y: 3,
            w: 50,
            h: 30,
            ..word(0, None)
        };
        let d = DetectionSet {
            page: None,
            boxes: vec![b],
        };
        let r = recognize_page(&page(), &d, &rec).unwrap();
        let crop = page().crop(7, 3, 50, 30).unwrap();
        assert_eq!(r.text, rec.recognize(&crop).unwrap());
    }

    #[test]
    fn score_page_examples() {
        let page_of = |t: &str| PageResult {
            text: t.into(),
            per_box: Vec::new(),
        };
        let r = score_page(&page_of("the cat sat"), "the cat sat").unwrap();
        assert_eq!((r.char_accuracy, r.word_accuracy), (100.0, Some(100.0)));
        let r = score_page(&page_of(""), "the cat sat").unwrap();
        assert_eq!((r.char_accuracy, r.word_accuracy), (0.0, Some(0.0)));
        // one wrong 3-letter word with 2 substitutions in a 4-word, 15-char page
        let r = score_page(&page_of("ab cde fgh ijk"), "ab cxy fgh ijk").unwrap();
        assert!((r.word_accuracy.unwrap() - 75.0).abs() < 1e-12);
        assert!((r.char_accuracy - 100.0 * 12.0 / 14.0).abs() < 1e-12);
        assert!(score_page(&page_of("a"), "").is_err());
    }

    proptest! {
        #[test]
        fn box_order_in_list_is_irrelevant(perm in Just((0u32..5).collect::<Vec<_>>()).prop_shuffle()) {
            let rec = recognizer(Unit::Word);
            let boxes: Vec<DetectionBox> = (0u32..5)
                .map(|i| DetectionBox { x: 5 * i as usize, w: 20 + i as usize, ..word(i, Some(i / 2)) })
                .collect();
            let shuffled: Vec<DetectionBox> = perm.iter().map(|&i| boxes[i as usize]).collect();
            let a = recognize_page(&page(), &DetectionSet { page: None, boxes }, &rec).unwrap();
            let b = recognize_page(&page(), &DetectionSet { page: None, boxes: shuffled }, &rec).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn join_is_lossless(words in proptest::collection::vec(("[a-c]{1,3}", 0u32..3), 0..8)) {
            let mut line = 0;
            let per_box: Vec<BoxResult> = words
                .iter()
                .enumerate()
                .map(|(i, (w, step))| {
                    line += step;
                    ok(word(i as u32, Some(line)), w)
                })
                .collect();
            let text = PageResult::join(&per_box);
            let recovered: Vec<&str> = if text.is_empty() { vec![] } else { text.split(['\n', ' ']).collect() };
            let expected: Vec<&str> = words.iter().map(|(w, _)| w.as_str()).collect();
            prop_assert_eq!(recovered, expected);
            prop_assert_eq!(text.matches('\n').count(), per_box.windows(2).filter(|p| p[0].detection.line_id != p[1].detection.line_id).count());
        }
    }
}
