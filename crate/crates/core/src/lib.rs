//! Segmentation-free text recognition with Connectionist Temporal
//! Classification.
//!
//! A word or line image is turned into a sequence of feature frames (raw
//! pixel columns, sliding windows or convolutional features), optionally
//! encoded by a bidirectional LSTM, projected to per-frame class
//! distributions and transcribed with best-path decoding. Training
//! minimizes the CTC loss with RMSProp.

pub mod ctc;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod trainer;

pub use ctc::{Alphabet, Labelling, Path, Posteriorgram};
pub use dataset::{Manifest, ManifestEntry, Split, Unit};
pub use error::{Error, Result};
pub use imaging::{Direction, FeatureSequence, GrayImage, WindowConfig};
pub use metrics::EvalReport;
pub use nn::{Checkpoint, Model, ModelConfig, ModelKind};
