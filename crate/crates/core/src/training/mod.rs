//! Losses, Adam, the training loop and evaluation metrics.

mod adam;
mod loss;
mod metrics;
mod single;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    classification_loss, classification_loss_from_logits, joint_loss, loss_expression, regression_loss, LossConfig,
};
pub use metrics::{evaluate, predict_all, trajectory_mse, Metrics};
pub use single::{build_single_task, Task};
pub use train::{init_model, train, validation_pass, write_loss_log, EpochLog, TrainConfig};
