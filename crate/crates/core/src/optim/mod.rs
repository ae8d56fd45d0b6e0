//! Training losses and the optimizer.

mod adamw;
mod loss;

pub use adamw::{AdamW, AdamWConfig};
pub use loss::{ce_loss, focal_loss, loss_value, record_loss, LossConfig, LossKind, LOG_CLAMP};
