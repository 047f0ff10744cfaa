//! Connectionist Temporal Classification: path probabilities, the collapse
//! mapping, the forward-backward loss with its softmax-fused gradient, and
//! best-path decoding.
//!
//! All probability arithmetic happens in natural-log space. Zero probability
//! is represented by `f64::NEG_INFINITY`.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Character used to spell the blank label when paths are written as text.
pub const BLANK_CHAR: char = '~';

/// Largest number of paths [`labelling_probability_bruteforce`] will enumerate.
pub const MAX_ENUMERATED_PATHS: u64 = 10_000_000;

/// Output label set `L` plus the reserved blank, forming `L′`.
///
/// Class indices address `L′`. With the default blank position of 0, label
/// `labels[i]` has class index `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AlphabetRepr", into = "AlphabetRepr")]
pub struct Alphabet {
    labels: Vec<char>,
    blank_index: usize,
    lookup: HashMap<char, usize>,
}

#[derive(Serialize, Deserialize)]
struct AlphabetRepr {
    labels: String,
    blank_index: usize,
}

impl TryFrom<AlphabetRepr> for Alphabet {
    type Error = Error;

    fn try_from(repr: AlphabetRepr) -> Result<Self> {
        Alphabet::with_blank_index(repr.labels.chars(), repr.blank_index)
    }
}

impl From<Alphabet> for AlphabetRepr {
    fn from(alphabet: Alphabet) -> Self {
        AlphabetRepr {
            labels: alphabet.labels.iter().collect(),
            blank_index: alphabet.blank_index,
        }
    }
}

impl Alphabet {
    /// Alphabet with the blank at class index 0.
    pub fn new(labels: impl IntoIterator<Item = char>) -> Result<Self> {
        Self::with_blank_index(labels, 0)
    }

    pub fn with_blank_index(labels: impl IntoIterator<Item = char>, blank_index: usize) -> Result<Self> {
        let labels: Vec<char> = labels.into_iter().collect();
        if blank_index > labels.len() {
            return Err(Error::InvalidInput(format!(
                "blank index {blank_index} outside 0..={}",
                labels.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(labels.len());
        for (i, &ch) in labels.iter().enumerate() {
            let class = if i < blank_index { i } else { i + 1 };
            if lookup.insert(ch, class).is_some() {
                return Err(Error::InvalidInput(format!("duplicate label {ch:?}")));
            }
        }
        Ok(Alphabet {
            labels,
            blank_index,
            lookup,
        })
    }

    /// The labels of `L`, in order, without the blank.
    pub fn labels(&self) -> &[char] {
        &self.labels
    }

    pub fn blank_index(&self) -> usize {
        self.blank_index
    }

    /// `|L′|`, the number of classes including the blank.
    pub fn num_classes(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn class_of(&self, ch: char) -> Option<usize> {
        self.lookup.get(&ch).copied()
    }

    /// The label for a class index, or `None` for the blank and out-of-range indices.
    pub fn char_of(&self, class: usize) -> Option<char> {
        if class == self.blank_index || class > self.labels.len() {
            None
        } else if class < self.blank_index {
            Some(self.labels[class])
        } else {
            Some(self.labels[class - 1])
        }
    }

    pub fn contains(&self, ch: char) -> bool {
        self.lookup.contains_key(&ch)
    }

    /// Encodes text as a labelling. Every character must belong to `L`.
    pub fn encode(&self, text: &str) -> Result<Labelling> {
        let symbols = text
            .chars()
            .map(|ch| {
                self.class_of(ch)
                    .ok_or_else(|| Error::InvalidInput(format!("character {ch:?} not in alphabet")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Labelling { symbols })
    }

    pub fn decode(&self, labelling: &Labelling) -> String {
        labelling
            .symbols
            .iter()
            .filter_map(|&class| self.char_of(class))
            .collect()
    }

    /// Parses a path written with [`BLANK_CHAR`] for the blank, e.g. `"g~~aa~nd"`.
    pub fn parse_path(&self, text: &str) -> Result<Path> {
        if self.contains(BLANK_CHAR) {
            return Err(Error::InvalidInput(format!(
                "alphabet contains {BLANK_CHAR:?}; path text is ambiguous"
            )));
        }
        let frames = text
            .chars()
            .map(|ch| {
                if ch == BLANK_CHAR {
                    Ok(self.blank_index)
                } else {
                    self.class_of(ch)
                        .ok_or_else(|| Error::InvalidInput(format!("character {ch:?} not in alphabet")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Path { frames })
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class < self.num_classes() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "class index {class} out of range for {} classes",
                self.num_classes()
            )))
        }
    }
}

/// A target label sequence over `L`, stored as class indices of `L′`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Labelling {
    symbols: Vec<usize>,
}

impl Labelling {
    /// Builds a labelling from class indices, rejecting the blank and out-of-range indices.
    pub fn from_classes(symbols: Vec<usize>, alphabet: &Alphabet) -> Result<Self> {
        for &s in &symbols {
            alphabet.check_class(s)?;
            if s == alphabet.blank_index() {
                return Err(Error::InvalidInput("labelling contains the blank label".into()));
            }
        }
        Ok(Labelling { symbols })
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Minimum number of frames a path needs to collapse to this labelling:
    /// one per symbol plus one separating blank per adjacent repeat.
    pub fn min_frames(&self) -> usize {
        let repeats = self.symbols.windows(2).filter(|w| w[0] == w[1]).count();
        self.symbols.len() + repeats
    }
}

/// A length-`T` sequence over `L′`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Path {
    frames: Vec<usize>,
}

impl Path {
    pub fn new(frames: Vec<usize>) -> Self {
        Path { frames }
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Per-frame class distributions, `T × |L′|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Posteriorgram {
    probs: Array2<f64>,
    log_probs: Array2<f64>,
}

impl Posteriorgram {
    /// Applies a row-wise log-softmax to pre-softmax activations.
    pub fn from_logits(logits: &Array2<f64>) -> Result<Self> {
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        let mut log_probs = logits.clone();
        for mut row in log_probs.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        let probs = log_probs.mapv(f64::exp);
        Ok(Posteriorgram { probs, log_probs })
    }

    /// Wraps explicit probabilities. Rows must sum to 1 within 1e-6 and
    /// entries must lie in `[0, 1]`.
    pub fn from_probs(probs: Array2<f64>) -> Result<Self> {
        if probs.ncols() == 0 {
            return Err(Error::InvalidInput("posteriorgram has no classes".into()));
        }
        for (t, row) in probs.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidInput(format!("frame {t} has entries outside [0, 1]")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!("frame {t} sums to {sum}")));
            }
        }
        let log_probs = probs.mapv(f64::ln);
        Ok(Posteriorgram { probs, log_probs })
    }

    /// Same distribution in every one of `frames` frames.
    pub fn repeated(frame: &[f64], frames: usize) -> Result<Self> {
        let mut probs = Array2::zeros((frames, frame.len()));
        for mut row in probs.rows_mut() {
            row.assign(&ArrayView1::from(frame));
        }
        Self::from_probs(probs)
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn log_probs(&self) -> &Array2<f64> {
        &self.log_probs
    }

    /// Number of frames `T`.
    pub fn frames(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }

    /// Keeps only the first `frames` frames.
    pub fn truncated(&self, frames: usize) -> Self {
        let frames = frames.min(self.frames());
        Posteriorgram {
            probs: self.probs.slice(ndarray::s![..frames, ..]).to_owned(),
            log_probs: self.log_probs.slice(ndarray::s![..frames, ..]).to_owned(),
        }
    }

    fn check_alphabet(&self, alphabet: &Alphabet) -> Result<()> {
        if self.num_classes() != alphabet.num_classes() {
            return Err(Error::InvalidInput(format!(
                "posteriorgram has {} classes, alphabet has {}",
                self.num_classes(),
                alphabet.num_classes()
            )));
        }
        Ok(())
    }
}

/// Loss and gradient for one sample.
#[derive(Clone, Debug)]
pub struct CtcLossResult {
    /// `−ln p(l|x)`; `+∞` when no path collapses to the target.
    pub loss: f64,
    /// `∂loss/∂z`, where `z` are the pre-softmax activations that produced the
    /// posteriorgram. Shape `T × |L′|`. All zeros when the target is unreachable.
    pub grad: Array2<f64>,
    /// False when the target cannot be produced in `T` frames.
    pub feasible: bool,
}

/// Applies the collapse mapping: merge adjacent repeats, then drop blanks.
pub fn collapse(path: &Path, alphabet: &Alphabet) -> Result<Labelling> {
    for &f in path.frames() {
        alphabet.check_class(f)?;
    }
    Ok(collapse_unchecked(path.frames(), alphabet.blank_index()))
}

fn collapse_unchecked(frames: &[usize], blank: usize) -> Labelling {
    let mut symbols = Vec::new();
    let mut prev = None;
    for &f in frames {
        if Some(f) != prev && f != blank {
            symbols.push(f);
        }
        prev = Some(f);
    }
    Labelling { symbols }
}

/// Probability of a single path: the product of its per-frame probabilities.
pub fn path_probability(path: &Path, y: &Posteriorgram) -> Result<f64> {
    if path.len() != y.frames() {
        return Err(Error::InvalidInput(format!(
            "path length {} != posteriorgram length {}",
            path.len(),
            y.frames()
        )));
    }
    let mut log_p = 0.0;
    for (t, &k) in path.frames().iter().enumerate() {
        if k >= y.num_classes() {
            return Err(Error::InvalidInput(format!("class index {k} out of range")));
        }
        log_p += y.log_probs()[[t, k]];
    }
    Ok(log_p.exp())
}

/// `p(l|x)` by summing over every path in `L′^T` that collapses to `l`.
///
/// Exponential in `T`; intended as a reference for small instances.
pub fn labelling_probability_bruteforce(l: &Labelling, y: &Posteriorgram, alphabet: &Alphabet) -> Result<f64> {
    y.check_alphabet(alphabet)?;
    let t_len = y.frames();
    let k = alphabet.num_classes();
    let total = (k as u64).checked_pow(t_len as u32).filter(|&n| n <= MAX_ENUMERATED_PATHS);
    let Some(total) = total else {
        return Err(Error::Capacity(format!("{k}^{t_len} paths exceeds {MAX_ENUMERATED_PATHS}")));
    };
    if l.len() > t_len {
        return Ok(0.0);
    }
    let mut frames = vec![0usize; t_len];
    let mut sum = 0.0;
    for _ in 0..total {
        let path = Path::new(frames.clone());
        if collapse_unchecked(&frames, alphabet.blank_index()) == *l {
            sum += path_probability(&path, y)?;
        }
        // odometer increment
        for f in frames.iter_mut().rev() {
            *f += 1;
            if *f < k {
                break;
            }
            *f = 0;
        }
    }
    Ok(sum)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// CTC loss `−ln p(l|x)` via forward-backward over the blank-interleaved
/// target `~l1~l2~…~lN~`, with the gradient with respect to the
/// pre-softmax activations.
pub fn ctc_loss(l: &Labelling, y: &Posteriorgram, alphabet: &Alphabet) -> Result<CtcLossResult> {
    y.check_alphabet(alphabet)?;
    let blank = alphabet.blank_index();
    for &s in l.symbols() {
        alphabet.check_class(s)?;
        if s == blank {
            return Err(Error::InvalidInput("target contains the blank label".into()));
        }
    }

    let t_len = y.frames();
    let k = y.num_classes();
    let lp = y.log_probs();
    let unreachable = || CtcLossResult {
        loss: f64::INFINITY,
        grad: Array2::zeros((t_len, k)),
        feasible: false,
    };
    if t_len < l.min_frames() {
        return Ok(unreachable());
    }
    if t_len == 0 {
        return Ok(CtcLossResult {
            loss: 0.0,
            grad: Array2::zeros((0, k)),
            feasible: true,
        });
    }

    let mut ext = Vec::with_capacity(2 * l.len() + 1);
    ext.push(blank);
    for &s in l.symbols() {
        ext.push(s);
        ext.push(blank);
    }
    let s_len = ext.len();
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let neg_inf = f64::NEG_INFINITY;
    let mut alpha = Array2::from_elem((t_len, s_len), neg_inf);
    alpha[[0, 0]] = lp[[0, ext[0]]];
    if s_len > 1 {
        alpha[[0, 1]] = lp[[0, ext[1]]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha[[t - 1, s]];
            if s >= 1 {
                acc = log_add(acc, alpha[[t - 1, s - 1]]);
            }
            if can_skip(s) {
                acc = log_add(acc, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = acc + lp[[t, ext[s]]];
        }
    }

    let mut beta = Array2::from_elem((t_len, s_len), neg_inf);
    beta[[t_len - 1, s_len - 1]] = lp[[t_len - 1, ext[s_len - 1]]];
    if s_len > 1 {
        beta[[t_len - 1, s_len - 2]] = lp[[t_len - 1, ext[s_len - 2]]];
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut acc = beta[[t + 1, s]];
            if s + 1 < s_len {
                acc = log_add(acc, beta[[t + 1, s + 1]]);
            }
            if s + 2 < s_len && can_skip(s + 2) {
                acc = log_add(acc, beta[[t + 1, s + 2]]);
            }
            beta[[t, s]] = acc + lp[[t, ext[s]]];
        }
    }

    let mut log_p = alpha[[t_len - 1, s_len - 1]];
    if s_len > 1 {
        log_p = log_add(log_p, alpha[[t_len - 1, s_len - 2]]);
    }
    if log_p == neg_inf {
        return Ok(unreachable());
    }

    // grad_t(k) = y_t(k) - (1/p) * sum_{s: ext[s]=k} alpha_t(s) beta_t(s) / y_t(k)
    let mut grad = y.probs().clone();
    for t in 0..t_len {
        let mut occupancy = vec![neg_inf; k];
        for s in 0..s_len {
            let v = alpha[[t, s]] + beta[[t, s]];
            occupancy[ext[s]] = log_add(occupancy[ext[s]], v);
        }
        for (c, &occ) in occupancy.iter().enumerate() {
            if occ != neg_inf {
                grad[[t, c]] -= (occ - lp[[t, c]] - log_p).exp();
            }
        }
    }

    Ok(CtcLossResult {
        loss: -log_p,
        grad,
        feasible: true,
    })
}

/// Per-frame argmax path. Ties go to the lowest class index.
pub fn best_path(y: &Posteriorgram) -> Path {
    let frames = y
        .probs()
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    Path::new(frames)
}

/// Best-path decoding: collapse of the per-frame argmax path.
pub fn best_path_decode(y: &Posteriorgram, alphabet: &Alphabet) -> Result<Labelling> {
    y.check_alphabet(alphabet)?;
    Ok(collapse_unchecked(best_path(y).frames(), alphabet.blank_index()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ab() -> Alphabet {
        Alphabet::new("abdghin".chars()).unwrap()
    }

    fn two_frame_a() -> (Alphabet, Posteriorgram) {
        // blank is class 0, 'a' is class 1
        let alphabet = Alphabet::new(['a']).unwrap();
        let y = Posteriorgram::repeated(&[0.6, 0.4], 2).unwrap();
        (alphabet, y)
    }

    #[test]
    fn collapse_examples() {
        let alphabet = ab();
        let decode = |p: &str| alphabet.decode(&collapse(&alphabet.parse_path(p).unwrap(), &alphabet).unwrap());
        assert_eq!(decode("g~~aa~nd~hh~~ii"), "gandhi");
        assert_eq!(decode("~~~~"), "");
        assert_eq!(decode("aa~a"), "aa");
    }

    #[test]
    fn collapse_rejects_out_of_range() {
        let alphabet = ab();
        let err = collapse(&Path::new(vec![0, 99]), &alphabet).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn alphabet_rejects_duplicates_and_bad_blank() {
        assert!(Alphabet::new("aba".chars()).is_err());
        assert!(Alphabet::with_blank_index("ab".chars(), 3).is_err());
        let last = Alphabet::with_blank_index("ab".chars(), 2).unwrap();
        assert_eq!(last.class_of('a'), Some(0));
        assert_eq!(last.char_of(2), None);
        assert_eq!(last.num_classes(), 3);
    }

    #[test]
    fn alphabet_serde_round_trip() {
        let alphabet = Alphabet::with_blank_index("xyz".chars(), 1).unwrap();
        let json = serde_json::to_string(&alphabet).unwrap();
        let back: Alphabet = serde_json::from_str(&json).unwrap();
        assert_eq!(alphabet, back);
    }

    #[test]
    fn path_probability_examples() {
        let alphabet = Alphabet::new(['a']).unwrap();
        let certain = Posteriorgram::repeated(&[0.0, 1.0], 1).unwrap();
        let p = path_probability(&alphabet.parse_path("a").unwrap(), &certain).unwrap();
        assert_eq!(p, 1.0);

        let (alphabet, y) = two_frame_a();
        let p = path_probability(&alphabet.parse_path("a~").unwrap(), &y).unwrap();
        assert!((p - 0.24).abs() < 1e-12);
        let p = path_probability(&alphabet.parse_path("~~").unwrap(), &y).unwrap();
        assert!((p - 0.36).abs() < 1e-12);

        let err = path_probability(&alphabet.parse_path("a").unwrap(), &y).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn bruteforce_examples() {
        let (alphabet, y) = two_frame_a();
        let a = alphabet.encode("a").unwrap();
        let p = labelling_probability_bruteforce(&a, &y, &alphabet).unwrap();
        assert!((p - 0.64).abs() < 1e-12);
        let empty = alphabet.encode("").unwrap();
        let p = labelling_probability_bruteforce(&empty, &y, &alphabet).unwrap();
        assert!((p - 0.36).abs() < 1e-12);
        let long = alphabet.encode("aaa").unwrap();
        assert_eq!(labelling_probability_bruteforce(&long, &y, &alphabet).unwrap(), 0.0);
    }

    #[test]
    fn bruteforce_capacity_guard() {
        let alphabet = Alphabet::new("abc".chars()).unwrap();
        let y = Posteriorgram::repeated(&[0.25; 4], 12).unwrap();
        let err = labelling_probability_bruteforce(&Labelling::default(), &y, &alphabet).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn ctc_loss_examples() {
        let (alphabet, y) = two_frame_a();
        let r = ctc_loss(&alphabet.encode("a").unwrap(), &y, &alphabet).unwrap();
        assert!((r.loss - 0.4462871026284195).abs() < 1e-12);
        assert!(r.feasible);

        let certain = Posteriorgram::repeated(&[0.0, 1.0], 1).unwrap();
        let r = ctc_loss(&alphabet.encode("a").unwrap(), &certain, &alphabet).unwrap();
        assert_eq!(r.loss, 0.0);

        let r = ctc_loss(&alphabet.encode("aa").unwrap(), &y, &alphabet).unwrap();
        assert_eq!(r.loss, f64::INFINITY);
        assert!(!r.feasible);
        assert!(r.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ctc_loss_rejects_blank_target() {
        let (alphabet, y) = two_frame_a();
        let err = Labelling::from_classes(vec![0], &alphabet).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        let sneaky = Labelling { symbols: vec![0] };
        assert!(matches!(ctc_loss(&sneaky, &y, &alphabet), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ctc_loss_zero_probability_target_is_flagged() {
        let alphabet = Alphabet::new("ab".chars()).unwrap();
        // 'b' never has mass
        let y = Posteriorgram::from_probs(array![[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]]).unwrap();
        let r = ctc_loss(&alphabet.encode("b").unwrap(), &y, &alphabet).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.loss, f64::INFINITY);
    }

    #[test]
    fn best_path_examples() {
        let alphabet = Alphabet::new("ab".chars()).unwrap();
        let y = Posteriorgram::from_probs(array![
            [0.8, 0.1, 0.1],
            [0.1, 0.8, 0.1],
            [0.2, 0.7, 0.1],
            [0.6, 0.3, 0.1],
            [0.1, 0.1, 0.8],
        ])
        .unwrap();
        assert_eq!(alphabet.decode(&best_path_decode(&y, &alphabet).unwrap()), "ab");

        let (alphabet, y) = two_frame_a();
        assert!(best_path_decode(&y, &alphabet).unwrap().is_empty());

        let alphabet = Alphabet::new("ab".chars()).unwrap();
        let uniform = Posteriorgram::repeated(&[1.0 / 3.0; 3], 3).unwrap();
        assert_eq!(best_path(&uniform).frames(), &[0, 0, 0]);
        assert!(best_path_decode(&uniform, &alphabet).unwrap().is_empty());
    }

    #[test]
    fn posteriorgram_validation() {
        assert!(Posteriorgram::from_probs(array![[0.5, 0.6]]).is_err());
        assert!(Posteriorgram::from_probs(array![[1.5, -0.5]]).is_err());
        let y = Posteriorgram::from_logits(&array![[3f64.ln(), 0.0]]).unwrap();
        assert!((y.probs()[[0, 0]] - 0.75).abs() < 1e-12);
        assert!((y.probs()[[0, 1]] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn min_frames_counts_repeats() {
        let alphabet = ab();
        assert_eq!(alphabet.encode("aab").unwrap().min_frames(), 4);
        assert_eq!(alphabet.encode("abab").unwrap().min_frames(), 4);
        assert_eq!(alphabet.encode("").unwrap().min_frames(), 0);
    }
}
