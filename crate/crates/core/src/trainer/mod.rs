//! Contrastive training with a cross-batch memory bank.

mod bank;
mod encoder;
mod loss;
mod optim;
mod stage;

pub use bank::{Label, MemoryBank};
pub use encoder::{Encoder, ForwardCache, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{contrastive_loss, LossConfig, LossOutput, Reduction};
pub use optim::{sgd_momentum_step, MomentumState};
pub use stage::{
    default_schedule, make_positive_pair, run_stage, StageConfig, StageMetrics, TrainerConfig,
    TrainingData,
};
