//! Loss functions, the Adam optimizer, the training loop, and checkpoints.

pub mod checkpoint;
pub mod loss;
pub mod optimizer;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{cross_entropy, sequence_loss, LossMode};
pub use optimizer::{optimizer_step, AdamHyper, OptimizerState};
pub use trainer::{history_to_csv, train, EpochStats, TrainConfig, TrainOutcome};
