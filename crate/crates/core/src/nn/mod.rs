//! Differentiable layers with hand-written backward passes, the four
//! recognizer configurations, the optimizer and checkpoint files.

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod linear;
pub mod lstm;
pub mod model;
pub mod norm;
pub mod optim;
pub mod param;
pub mod pool;

pub use checkpoint::{Checkpoint, CheckpointMeta, NamedArray, CHECKPOINT_VERSION};
pub use lstm::RnnConfig;
pub use model::{batch_ctc_loss, map_to_sequence, BatchLoss, CnnFeatureMap, CnnLayerSpec, ForwardOutput, Model, ModelConfig, ModelKind};
pub use optim::RmsProp;
pub use param::{ParamArray, Parameterized};
