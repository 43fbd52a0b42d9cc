//! Loss, optimizers, and the deterministic mini-batch trainer.

mod loss;
mod optim;
mod trainer;

pub use loss::{loss_and_grad, LossKind};
pub use optim::{optimizer_step, Optimizer, OptimizerState};
pub use trainer::{
    init_model, train, train_with, Checkpoint, EpochReport, Precision, Regressor, TargetStats,
    TrainConfig,
};
