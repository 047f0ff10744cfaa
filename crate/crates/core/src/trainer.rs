//! Dataset ingestion, alphabet construction, the epoch loop with
//! validation-driven checkpoint selection, fine-tuning and evaluation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctc::{Alphabet, Labelling};
use crate::dataset::{Manifest, Split, Unit};
use crate::error::{Error, Result};
use crate::imaging::{load_preprocessed, GrayImage};
use crate::metrics::EvalReport;
use crate::nn::{batch_ctc_loss, Checkpoint, CheckpointMeta, Model, ModelConfig, RmsProp};

/// Placeholder for ground-truth characters the model can never emit.
pub const UNKNOWN_CHAR: char = '\u{FFFD}';

/// A preprocessed image with its transcription.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: GrayImage,
    pub text: String,
}

/// Loads and preprocesses every entry of one split.
pub fn load_split(manifest: &Manifest, split: Split) -> Result<Vec<Sample>> {
    manifest
        .split(split)
        .map(|e| {
            Ok(Sample {
                image: load_preprocessed(manifest.resolve(e))?,
                text: e.text.clone(),
            })
        })
        .collect()
}

/// Sorted distinct code points of `texts`, plus space for line models.
pub fn alphabet_from_texts<'a>(texts: impl IntoIterator<Item = &'a str>, unit: Unit) -> Result<Alphabet> {
    let mut set = BTreeSet::new();
    let mut any = false;
    for t in texts {
        any = true;
        set.extend(t.chars());
    }
    if !any {
        return Err(Error::Config("train split is empty".into()));
    }
    if unit == Unit::Line {
        set.insert(' ');
    }
    Alphabet::new(set)
}

/// Alphabet of a manifest's train split.
pub fn build_alphabet(manifest: &Manifest) -> Result<Alphabet> {
    alphabet_from_texts(manifest.split(Split::Train).map(|e| e.text.as_str()), manifest.unit)
}

/// Indices of the `⌈fraction·n⌉` entries kept by a seeded shuffle, in ascending order.
pub fn select_fraction(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} outside (0, 1]")));
    }
    let keep = ((fraction * n as f64).ceil() as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f4ac));
    idx.truncate(keep);
    idx.sort_unstable();
    Ok(idx)
}

/// Training hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainPlan {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub unit: Unit,
    /// Architecture; `num_classes` is replaced by the alphabet size.
    /// Ignored when fine-tuning, where the checkpoint's config is kept.
    pub config: ModelConfig,
    pub fine_tune_from: Option<Checkpoint>,
    /// Train on a seeded random subset of this fraction of the train split.
    pub real_fraction: Option<f64>,
    pub seed: u64,
}

impl TrainPlan {
    /// Default batch size (64 words or 16 lines) and the kind's learning rate.
    pub fn new(config: ModelConfig, unit: Unit, epochs: usize) -> Self {
        TrainPlan {
            epochs,
            batch_size: match unit {
                Unit::Word => 64,
                Unit::Line => 16,
            },
            learning_rate: config.kind.default_learning_rate(),
            unit,
            config,
            fine_tune_from: None,
            real_fraction: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if let Some(f) = self.real_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("real_fraction {f} outside (0, 1]")));
            }
        }
        if let Some(ck) = &self.fine_tune_from {
            if ck.meta.unit != self.unit {
                return Err(Error::Config("fine-tune checkpoint unit differs from plan".into()));
            }
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_char_accuracy: f64,
    pub val_seq_accuracy: f64,
    /// Samples skipped this epoch because their target was unreachable.
    pub skipped: usize,
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the highest validation CA.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Train samples whose text uses characters outside the alphabet.
    pub out_of_alphabet: usize,
    pub train_samples: usize,
}

impl TrainOutcome {
    /// `epoch,mean_loss,val_CA,val_SA` lines with a header.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,val_CA,val_SA\n");
        for e in &self.log {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.mean_loss, e.val_char_accuracy, e.val_seq_accuracy
            ));
        }
        out
    }
}

/// Loads the train and val splits of `manifest` and trains.
pub fn train(plan: &TrainPlan, manifest: &Manifest) -> Result<TrainOutcome> {
    plan.validate()?;
    if manifest.unit != plan.unit {
        return Err(Error::Config(format!("manifest unit {} but plan unit {}", manifest.unit, plan.unit)));
    }
    let train = load_split(manifest, Split::Train)?;
    let val = load_split(manifest, Split::Val)?;
    train_samples(plan, &train, &val, &mut |_| {})
}

fn batches(widths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..widths.len()).collect();
    order.shuffle(rng);
    // sort within chunks so batches hold similar widths and little padding
    let chunk = batch_size * 16;
    let mut out = Vec::new();
    for c in order.chunks_mut(chunk) {
        c.sort_by_key(|&i| widths[i]);
        out.extend(c.chunks(batch_size).map(<[usize]>::to_vec));
    }
    out.shuffle(rng);
    out
}

/// Trains on in-memory samples. `observer` sees each epoch's log row.
pub fn train_samples(
    plan: &TrainPlan,
    train: &[Sample],
    val: &[Sample],
    observer: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    plan.validate()?;
    if val.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let (mut model, alphabet) = match &plan.fine_tune_from {
        Some(ck) => (ck.restore()?, ck.meta.alphabet.clone()),
        None => {
            let alphabet = alphabet_from_texts(train.iter().map(|s| s.text.as_str()), plan.unit)?;
            let config = ModelConfig {
                num_classes: alphabet.num_classes(),
                ..plan.config.clone()
            };
            (Model::new(config, plan.seed)?, alphabet)
        }
    };
    if train.is_empty() {
        return Err(Error::Config("train split is empty".into()));
    }

    let chosen: Vec<usize> = match plan.real_fraction {
        Some(f) => select_fraction(train.len(), f, plan.seed)?,
        None => (0..train.len()).collect(),
    };
    let mut images = Vec::with_capacity(chosen.len());
    let mut targets = Vec::with_capacity(chosen.len());
    let mut out_of_alphabet = 0;
    for &i in &chosen {
        match alphabet.encode(&train[i].text) {
            Ok(l) => {
                images.push(&train[i].image);
                targets.push(l);
            }
            Err(_) => out_of_alphabet += 1,
        }
    }
    if targets.is_empty() {
        return Err(Error::Training("no train sample is expressible in the alphabet".into()));
    }
    let widths: Vec<usize> = images.iter().map(|i| i.width()).collect();

    let mut meta = CheckpointMeta::new(model.config().clone(), alphabet.clone(), plan.unit);
    meta.learning_rate = plan.learning_rate;
    meta.seed = plan.seed;
    let mut optimizer = RmsProp::new(plan.learning_rate);
    let mut best: Option<Checkpoint> = None;
    let mut log = Vec::with_capacity(plan.epochs);

    for epoch in 1..=plan.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(epoch as u64);
        let mut loss_sum = 0.0;
        let mut feasible = 0;
        let mut skipped = 0;
        for (b, batch) in batches(&widths, plan.batch_size, &mut rng).iter().enumerate() {
            let imgs: Vec<GrayImage> = batch.iter().map(|&i| images[i].clone()).collect();
            let tgts: Vec<Labelling> = batch.iter().map(|&i| targets[i].clone()).collect();
            let (out, cache) = model.forward(&imgs, true)?;
            let loss = batch_ctc_loss(&out, &tgts, &alphabet)?;
            skipped += loss.skipped;
            if loss.feasible == 0 {
                continue;
            }
            if !loss.mean_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {} at epoch {epoch}, batch {b}",
                    loss.mean_loss
                )));
            }
            loss_sum += loss.mean_loss * loss.feasible as f64;
            feasible += loss.feasible;
            model.backward(&cache, &loss.dlogits);
            model.update_running_stats(&cache);
            optimizer
                .step(&mut model)
                .map_err(|e| Error::NonFinite(format!("{e} at epoch {epoch}, batch {b}")))?;
        }
        if feasible == 0 {
            return Err(Error::Training("every training target is unreachable".into()));
        }
        let eval = evaluate_model(&model, &alphabet, val)?;
        let row = EpochLog {
            epoch,
            mean_loss: loss_sum / feasible as f64,
            val_char_accuracy: eval.report.char_accuracy,
            val_seq_accuracy: eval.report.seq_accuracy,
            skipped,
        };
        observer(&row);
        let improved = best
            .as_ref()
            .is_none_or(|b| row.val_char_accuracy > b.meta.val_char_accuracy.unwrap_or(f64::NEG_INFINITY));
        if improved {
            let mut m = meta.clone();
            m.epoch = epoch;
            m.val_char_accuracy = Some(row.val_char_accuracy);
            m.val_seq_accuracy = Some(row.val_seq_accuracy);
            best = Some(Checkpoint::capture(&model, m));
        }
        log.push(row);
    }
    Ok(TrainOutcome {
        checkpoint: best.expect("at least one epoch"),
        log,
        out_of_alphabet,
        train_samples: targets.len(),
    })
}

/// Predictions and metrics over a labelled set.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<String>,
    /// Ground-truth characters replaced by [`UNKNOWN_CHAR`].
    pub unknown_chars: usize,
}

const EVAL_BATCH: usize = 64;

/// Best-path predictions for each image. Images are batched only with
/// others of identical width, so results equal one-at-a-time inference.
pub fn predict(model: &Model, alphabet: &Alphabet, images: &[&GrayImage]) -> Result<Vec<String>> {
    if model.config().num_classes != alphabet.num_classes() {
        return Err(Error::Config(format!(
            "model has {} classes but alphabet has {}",
            model.config().num_classes,
            alphabet.num_classes()
        )));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, img) in images.iter().enumerate() {
        groups.entry(img.width()).or_default().push(i);
    }
    let mut out = vec![String::new(); images.len()];
    for idx in groups.values() {
        for chunk in idx.chunks(EVAL_BATCH) {
            let batch: Vec<GrayImage> = chunk.iter().map(|&i| images[i].clone()).collect();
            let (fwd, _) = model.forward(&batch, false)?;
            for (b, &i) in chunk.iter().enumerate() {
                let y = fwd.posteriorgram(b)?;
                out[i] = alphabet.decode(&crate::ctc::best_path_decode(&y, alphabet)?);
            }
        }
    }
    Ok(out)
}

/// CA and SA of `model` on `samples`.
pub fn evaluate_model(model: &Model, alphabet: &Alphabet, samples: &[Sample]) -> Result<Evaluation> {
    let images: Vec<&GrayImage> = samples.iter().map(|s| &s.image).collect();
    let predictions = predict(model, alphabet, &images)?;
    let mut unknown_chars = 0;
    let gts: Vec<String> = samples
        .iter()
        .map(|s| {
            s.text
                .chars()
                .map(|c| {
                    if alphabet.contains(c) {
                        c
                    } else {
                        unknown_chars += 1;
                        UNKNOWN_CHAR
                    }
                })
                .collect()
        })
        .collect();
    let pairs: Vec<(&str, &str)> = predictions.iter().map(String::as_str).zip(gts.iter().map(String::as_str)).collect();
    Ok(Evaluation {
        report: EvalReport::from_pairs(&pairs)?,
        predictions,
        unknown_chars,
    })
}

/// Evaluates a checkpoint on one split of a manifest.
pub fn evaluate(checkpoint: &Checkpoint, manifest: &Manifest, split: Split) -> Result<Evaluation> {
    if checkpoint.meta.unit != manifest.unit {
        return Err(Error::Config(format!(
            "checkpoint unit {} but manifest unit {}",
            checkpoint.meta.unit, manifest.unit
        )));
    }
    let model = checkpoint.restore()?;
    evaluate_model(&model, &checkpoint.meta.alphabet, &load_split(manifest, split)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ManifestEntry;
    use crate::nn::ModelKind;
    use crate::synth::{render, BitmapFont, RenderSpec};

    fn manifest_of(texts: &[(&str, Split)], unit: Unit) -> Manifest {
        let mut m = Manifest::new(".", unit);
        for (t, s) in texts {
            m.entries.push(ManifestEntry {
                path: "x.pgm".into(),
                text: t.to_string(),
                split: *s,
            });
        }
        m
    }

    #[test]
    fn alphabet_examples() {
        let m = manifest_of(&[("ab", Split::Train), ("bc", Split::Train), ("zz", Split::Val)], Unit::Word);
        let a = build_alphabet(&m).unwrap();
        assert_eq!(a.labels(), &['a', 'b', 'c']);
        assert_eq!(a.num_classes(), 4);
        let m = manifest_of(&[("a b", Split::Train), ("bc", Split::Train)], Unit::Line);
        assert_eq!(build_alphabet(&m).unwrap().labels(), &[' ', 'a', 'b', 'c']);
        let m = manifest_of(&[("ab", Split::Train), ("bc", Split::Train)], Unit::Line);
        assert!(build_alphabet(&m).unwrap().contains(' '));
        let m = manifest_of(&[("bc", Split::Train), ("ab", Split::Train)], Unit::Word);
        assert_eq!(build_alphabet(&m).unwrap().labels(), &['a', 'b', 'c']);
        let m = manifest_of(&[("ab", Split::Val)], Unit::Word);
        assert!(matches!(build_alphabet(&m), Err(Error::Config(_))));
    }

    #[test]
    fn fraction_selection_counts() {
        for n in [1usize, 7, 10, 101] {
            let idx = select_fraction(n, 0.5, 3).unwrap();
            assert_eq!(idx.len(), (n as f64 * 0.5).ceil() as usize);
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(select_fraction(10, 0.5, 3).unwrap(), select_fraction(10, 0.5, 3).unwrap());
        assert_eq!(select_fraction(5, 1.0, 0).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(select_fraction(5, 0.0, 0).is_err());
        assert!(select_fraction(5, 1.5, 0).is_err());
    }

    fn samples(texts: &[&str]) -> Vec<Sample> {
        texts
            .iter()
            .map(|t| Sample {
                image: render(&BitmapFont, &RenderSpec::plain(*t, BitmapFont::FONT_ID, 21)).unwrap(),
                text: t.to_string(),
            })
            .collect()
    }

    fn tiny_plan(epochs: usize) -> TrainPlan {
        let mut plan = TrainPlan::new(ModelConfig::tiny(ModelKind::Crnn, 1, 4), Unit::Word, epochs);
        plan.batch_size = 2;
        plan.learning_rate = 1e-3;
        plan.seed = 9;
        plan
    }

    #[test]
    fn plan_rejects_bad_values() {
        assert!(matches!(tiny_plan(0).validate(), Err(Error::Config(_))));
        let mut p = tiny_plan(1);
        p.real_fraction = Some(0.0);
        assert!(p.validate().is_err());
        let s = samples(&["1", "2"]);
        assert!(train_samples(&tiny_plan(1), &s, &[], &mut |_| {}).is_err());
        assert!(train_samples(&tiny_plan(1), &[], &s, &mut |_| {}).is_err());
    }

    #[test]
    fn best_checkpoint_dominates_log_and_runs_repeat() {
        let train = samples(&["12", "3", "21", "13"]);
        let val = samples(&["12", "3"]);
        let a = train_samples(&tiny_plan(3), &train, &val, &mut |_| {}).unwrap();
        let best = a.checkpoint.meta.val_char_accuracy.unwrap();
        assert!(a.log.iter().all(|e| best >= e.val_char_accuracy));
        assert_eq!(a.log.len(), 3);
        assert!(a.log_csv().starts_with("epoch,mean_loss,val_CA,val_SA\n"));
        let b = train_samples(&tiny_plan(3), &train, &val, &mut |_| {}).unwrap();
        assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn unreachable_targets_fail_training() {
        // a single-pixel-wide image gives one frame; "11" needs three
        let img = GrayImage::filled(1, 32, 1.0).unwrap();
        let train = vec![Sample {
            image: img.clone(),
            text: "11".into(),
        }];
        let mut plan = tiny_plan(1);
        plan.config = ModelConfig::tiny(ModelKind::ColRnn, 1, 4);
        let err = train_samples(&plan, &train, &train, &mut |_| {}).unwrap_err();
        assert!(matches!(err, Error::Training(_)), "{err:?}");
    }

    #[test]
    fn evaluation_handles_unknown_chars_and_is_repeatable() {
        let train = samples(&["12", "3"]);
        let out = train_samples(&tiny_plan(1), &train, &train, &mut |_| {}).unwrap();
        let model = out.checkpoint.restore().unwrap();
        let alphabet = &out.checkpoint.meta.alphabet;
        let test = samples(&["19", "3"]);
        let a = evaluate_model(&model, alphabet, &test).unwrap();
        assert_eq!(a.unknown_chars, 1);
        assert_eq!(a, evaluate_model(&model, alphabet, &test).unwrap());
        let single: Vec<String> = test.iter().map(|s| model.recognize(&s.image, alphabet).unwrap()).collect();
        assert_eq!(a.predictions, single);
        let restored = Checkpoint::from_bytes(&out.checkpoint.to_bytes().unwrap()).unwrap();
        let b = evaluate_model(&restored.restore().unwrap(), alphabet, &test).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_predictions_score_zero() {
        let alphabet = Alphabet::new("123".chars()).unwrap();
        let config = ModelConfig::tiny(ModelKind::ColRnn, alphabet.num_classes(), 2);
        let mut model = Model::new(config, 0).unwrap();
        // blank wins every frame
        crate::nn::Parameterized::visit_params_mut(&mut model, &mut |p| {
            p.values.fill(0.0);
            if p.name == "head.bias" {
                p.values[[0]] = 5.0;
            }
        });
        let r = evaluate_model(&model, &alphabet, &samples(&["12", "3"])).unwrap();
        assert_eq!(r.predictions, vec!["", ""]);
        assert_eq!(r.report.char_accuracy, 0.0);
        assert_eq!(r.report.seq_accuracy, 0.0);
    }
}
