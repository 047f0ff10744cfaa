//! ISRI-style accuracy measures over Unicode code points and whitespace
//! separated words.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregate accuracy figures for a set of predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Character accuracy in percent. Negative when edits outnumber ground-truth characters.
    pub char_accuracy: f64,
    /// Percentage of samples predicted exactly.
    pub seq_accuracy: f64,
    /// Word accuracy in percent, when computed.
    pub word_accuracy: Option<f64>,
    pub total_gt_chars: usize,
    pub total_edit_distance: usize,
    pub n_samples: usize,
}

impl EvalReport {
    /// Character error rate, `100 · ΣLD / Σlen(g)`.
    pub fn cer(&self) -> f64 {
        100.0 * self.total_edit_distance as f64 / self.total_gt_chars as f64
    }

    /// CA and SA over `(prediction, ground truth)` pairs.
    pub fn from_pairs<P: AsRef<str>, G: AsRef<str>>(pairs: &[(P, G)]) -> Result<Self> {
        let totals = pooled_totals(pairs);
        if totals.gt_chars == 0 {
            return Err(Error::Undefined("total ground-truth length is zero".into()));
        }
        Ok(EvalReport {
            char_accuracy: ca_from_totals(totals.gt_chars, totals.edits),
            seq_accuracy: 100.0 * totals.exact as f64 / pairs.len() as f64,
            word_accuracy: None,
            total_gt_chars: totals.gt_chars,
            total_edit_distance: totals.edits,
            n_samples: pairs.len(),
        })
    }
}

struct Totals {
    gt_chars: usize,
    edits: usize,
    exact: usize,
}

fn pooled_totals<P: AsRef<str>, G: AsRef<str>>(pairs: &[(P, G)]) -> Totals {
    let mut totals = Totals {
        gt_chars: 0,
        edits: 0,
        exact: 0,
    };
    for (pred, gt) in pairs {
        let d = levenshtein(pred.as_ref(), gt.as_ref());
        totals.gt_chars += gt.as_ref().chars().count();
        totals.edits += d;
        totals.exact += usize::from(d == 0);
    }
    totals
}

fn ca_from_totals(gt_chars: usize, edits: usize) -> f64 {
    (gt_chars as f64 - edits as f64) / gt_chars as f64 * 100.0
}

/// Minimum number of single code-point insertions, deletions and
/// substitutions turning `a` into `b`.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Corpus-pooled character accuracy: `(Σlen(g) − ΣLD(l, g)) / Σlen(g) × 100`.
pub fn char_accuracy<P: AsRef<str>, G: AsRef<str>>(pairs: &[(P, G)]) -> Result<f64> {
    let totals = pooled_totals(pairs);
    if totals.gt_chars == 0 {
        return Err(Error::Undefined("total ground-truth length is zero".into()));
    }
    Ok(ca_from_totals(totals.gt_chars, totals.edits))
}

/// Percentage of pairs with a zero edit distance.
pub fn seq_accuracy<P: AsRef<str>, G: AsRef<str>>(pairs: &[(P, G)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Undefined("no samples".into()));
    }
    let exact = pairs.iter().filter(|(p, g)| p.as_ref() == g.as_ref()).count();
    Ok(100.0 * exact as f64 / pairs.len() as f64)
}

/// Splits on runs of Unicode whitespace.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word accuracy of a single page.
pub fn word_accuracy(pred_page: &str, gt_page: &str) -> Result<f64> {
    word_accuracy_pages(&[(pred_page, gt_page)])
}

/// Pooled word accuracy over pages: `ΣLCS / Σ|words(g)| × 100`.
pub fn word_accuracy_pages<P: AsRef<str>, G: AsRef<str>>(pages: &[(P, G)]) -> Result<f64> {
    let mut matched = 0;
    let mut total = 0;
    for (pred, gt) in pages {
        let gt_words = words(gt.as_ref());
        matched += lcs_len(&words(pred.as_ref()), &gt_words);
        total += gt_words.len();
    }
    if total == 0 {
        return Err(Error::Undefined("ground truth has no words".into()));
    }
    Ok(100.0 * matched as f64 / total as f64)
}
