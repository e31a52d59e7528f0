//! Loss, optimizer and the mini-batch training loop.

mod fit;
mod loss;
mod optim;
#[cfg(test)]
mod tests;

pub use fit::{
    epoch_order, gather_batch, train, train_step, LogRow, LossLog, TrainConfig, TrainObserver,
    TrainSummary,
};
pub use loss::mse_loss;
pub use optim::{adamw_update, AdamW, OptimState};
