//! `ctc-ocr`: train, evaluate and run CTC text recognizers.
//!
//! Failures print `{"error": kind, "message": ...}` on stderr and exit with status 1
//! (2 for malformed command lines).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use ctc_ocr::metrics::{word_accuracy_pages, EvalReport};
use ctc_ocr::pipeline::{recognize_page, score_page, DetectionSet, Recognizer};
use ctc_ocr::synth::{generate_corpus, BitmapFont, CorpusOptions, CorpusSize, SynthConfig};
use ctc_ocr::trainer::{self, TrainPlan};
use ctc_ocr::{imaging, Checkpoint, Direction, Error, Manifest, ModelConfig, ModelKind, Result, Split, Unit};

#[derive(Parser, Debug)]
#[command(name = "ctc-ocr", version, about = "CTC-based word and line recognition")]
struct Cli {
    /// Seed for initialization, shuffling and rendering.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// TOML file with `[train]` and `[synth]` sections; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Checkpoint to read (evaluate, recognize, page-ocr) or write (train).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a recognizer on a manifest and save the best checkpoint.
    Train(TrainArgs),
    /// Score predictions against ground truth, or a checkpoint on a manifest split.
    Evaluate(EvaluateArgs),
    /// Transcribe a single word or line image.
    Recognize {
        #[arg(long)]
        image: PathBuf,
        /// Read right to left.
        #[arg(long)]
        rtl: bool,
    },
    /// Transcribe a page from externally detected boxes.
    PageOcr {
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        rtl: bool,
        /// Ground-truth page text; adds CA/WA to the output.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Render synthetic word images for a lexicon.
    Synth {
        /// One word per line.
        #[arg(long)]
        lexicon: PathBuf,
        /// Images per lexicon word.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Style::Default)]
        style: Style,
        #[arg(long, default_value = "train")]
        split: String,
    },
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    unit: Option<String>,
    /// crnn, col_rnn, win_rnn or cnn_only.
    #[arg(long)]
    kind: Option<String>,
    /// Use the small desk-scale layers with this many LSTM units.
    #[arg(long)]
    tiny: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    rtl: bool,
    /// Continue from this checkpoint instead of a fresh model.
    #[arg(long)]
    fine_tune_from: Option<PathBuf>,
    /// Train on this fraction of the train split.
    #[arg(long)]
    real_fraction: Option<f64>,
    /// CSV training log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct EvaluateArgs {
    /// Predictions, one sample per line (or a whole page).
    #[arg(long, requires = "gt")]
    pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    gt: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Word)]
    mode: Mode,
    /// Manifest to evaluate `--checkpoint` on.
    #[arg(long, conflicts_with = "pred")]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Word,
    Line,
    Page,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Style {
    Default,
    Clean,
    Degraded,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    train: TrainSection,
    synth: Option<SynthConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    kind: Option<String>,
    unit: Option<String>,
    tiny: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    rtl: Option<bool>,
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        Some(p) => toml::from_str(&read_to_string(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
        None => Ok(FileConfig::default()),
    }
}

fn require_checkpoint(cli: &Cli) -> Result<Checkpoint> {
    let path = cli
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("--checkpoint is required".into()))?;
    Checkpoint::load(path)
}

fn direction(rtl: bool) -> Direction {
    if rtl {
        Direction::RightToLeft
    } else {
        Direction::LeftToRight
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn train(cli: &Cli, args: &TrainArgs, file: &FileConfig) -> Result<()> {
    let t = &file.train;
    let out = cli
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("--checkpoint (output path) is required".into()))?;
    let unit: Unit = args.unit.as_deref().or(t.unit.as_deref()).unwrap_or("word").parse()?;
    let kind: ModelKind = args.kind.as_deref().or(t.kind.as_deref()).unwrap_or("crnn").parse()?;
    let rtl = args.rtl || t.rtl.unwrap_or(false);
    // placeholder class count; training sizes the head from the alphabet
    let config = match args.tiny.or(t.tiny) {
        Some(hidden) => ModelConfig::tiny(kind, 2, hidden),
        None => ModelConfig::full(kind, 2),
    }
    .with_direction(direction(rtl));
    let mut plan = TrainPlan::new(config, unit, args.epochs.or(t.epochs).unwrap_or(30));
    if let Some(b) = args.batch_size.or(t.batch_size) {
        plan.batch_size = b;
    }
    if let Some(lr) = args.learning_rate.or(t.learning_rate) {
        plan.learning_rate = lr;
    }
    plan.seed = cli.seed.unwrap_or(0);
    plan.real_fraction = args.real_fraction;
    if let Some(p) = &args.fine_tune_from {
        plan.fine_tune_from = Some(Checkpoint::load(p)?);
    }

    let manifest = Manifest::load(&args.manifest, unit)?;
    let train = trainer::load_split(&manifest, Split::Train)?;
    let val = trainer::load_split(&manifest, Split::Val)?;
    let outcome = trainer::train_samples(&plan, &train, &val, &mut |e| {
        eprintln!(
            "epoch {}: loss {:.4} val CA {:.2} val SA {:.2}",
            e.epoch, e.mean_loss, e.val_char_accuracy, e.val_seq_accuracy
        )
    })?;
    outcome.checkpoint.save(out)?;
    if let Some(log) = &args.log {
        std::fs::write(log, outcome.log_csv()).map_err(|e| Error::Io {
            path: log.clone(),
            source: e,
        })?;
    }
    let meta = &outcome.checkpoint.meta;
    print_json(&json!({
        "checkpoint": out,
        "best_epoch": meta.epoch,
        "val_char_accuracy": meta.val_char_accuracy,
        "val_seq_accuracy": meta.val_seq_accuracy,
        "train_samples": outcome.train_samples,
        "out_of_alphabet": outcome.out_of_alphabet,
        "skipped_last_epoch": outcome.log.last().map(|e| e.skipped),
    }));
    Ok(())
}

fn evaluate_texts(pred: &str, gt: &str, mode: Mode) -> Result<EvalReport> {
    match mode {
        Mode::Page => {
            let mut r = EvalReport::from_pairs(&[(pred, gt)])?;
            r.word_accuracy = Some(word_accuracy_pages(&[(pred, gt)])?);
            Ok(r)
        }
        Mode::Word | Mode::Line => {
            let p: Vec<&str> = pred.lines().collect();
            let g: Vec<&str> = gt.lines().collect();
            if p.len() != g.len() {
                return Err(Error::InvalidInput(format!(
                    "{} predictions for {} ground-truth lines",
                    p.len(),
                    g.len()
                )));
            }
            let pairs: Vec<(&str, &str)> = p.into_iter().zip(g).collect();
            let mut r = EvalReport::from_pairs(&pairs)?;
            if matches!(mode, Mode::Line) {
                r.word_accuracy = Some(word_accuracy_pages(&pairs)?);
            }
            Ok(r)
        }
    }
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let report = match (&args.pred, &args.gt, &args.manifest) {
        (Some(pred), Some(gt), _) => evaluate_texts(&read_to_string(pred)?, &read_to_string(gt)?, args.mode)?,
        (_, _, Some(manifest)) => {
            let ck = require_checkpoint(cli)?;
            let manifest = Manifest::load(manifest, ck.meta.unit)?;
            let eval = trainer::evaluate(&ck, &manifest, args.split.parse()?)?;
            if eval.unknown_chars > 0 {
                eprintln!("{} ground-truth characters are outside the alphabet", eval.unknown_chars);
            }
            eval.report
        }
        _ => return Err(Error::Config("give --pred and --gt, or --manifest with --checkpoint".into())),
    };
    print_json(&serde_json::to_value(&report).expect("serializable"));
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let file = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Train(args) => train(cli, args, &file),
        Command::Evaluate(args) => evaluate(cli, args),
        Command::Recognize { image, rtl } => {
            let rec = Recognizer::new(&require_checkpoint(cli)?, direction(*rtl))?;
            println!("{}", rec.recognize(&imaging::load(image)?)?);
            Ok(())
        }
        Command::PageOcr {
            image,
            detections,
            rtl,
            gt,
        } => {
            let rec = Recognizer::new(&require_checkpoint(cli)?, direction(*rtl))?;
            let det = DetectionSet::load(detections)?;
            let page_path = match (image, &det.page) {
                (Some(p), _) => p.clone(),
                (None, Some(p)) => detections.parent().unwrap_or(Path::new(".")).join(p),
                (None, None) => return Err(Error::Config("no page image given".into())),
            };
            let result = recognize_page(&imaging::load(&page_path)?, &det, &rec)?;
            let score = match gt {
                Some(p) => Some(score_page(&result, &read_to_string(p)?)?),
                None => None,
            };
            print_json(&json!({ "text": result.text, "per_box": result.per_box, "score": score }));
            Ok(())
        }
        Command::Synth {
            lexicon,
            count,
            out,
            style,
            split,
        } => {
            let words: Vec<String> = read_to_string(lexicon)?
                .lines()
                .map(str::trim)
                .filter(|w| !w.is_empty())
                .map(String::from)
                .collect();
            let config = match style {
                Style::Default => file.synth.clone().unwrap_or_default(),
                Style::Clean => SynthConfig::clean(),
                Style::Degraded => SynthConfig::degraded(),
            };
            let options = CorpusOptions {
                config,
                split: split.parse()?,
                seed: cli.seed.unwrap_or(0),
                prefix: "img".into(),
            };
            let manifest = generate_corpus(&BitmapFont, &words, CorpusSize::PerWord(*count), out, &options)?;
            let path = out.join("manifest.tsv");
            manifest.save(&path)?;
            print_json(&json!({ "images": manifest.entries.len(), "manifest": path }));
            Ok(())
        }
    }
}

fn fail(kind: &str, message: impl std::fmt::Display) {
    eprintln!("{}", json!({ "error": kind, "message": message.to_string() }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            fail("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            fail(e.kind(), &e);
            ExitCode::FAILURE
        }
    }
}
