//! Target assignment, detection loss, SGD and the epoch loop.

mod assign;
mod config;
mod loss;
mod sgd;
mod trainer;

pub use assign::{anchor_ratio, assign_batch, assign_targets, candidate_cells, AssignedTarget};
pub use config::{TrainConfig, ANCHOR_RATIO_LIMIT, OBJ_BALANCE};
pub use loss::{compute_loss, loss_and_grad, LossParts};
pub use sgd::Sgd;
pub use trainer::{
    eval_loss, make_batch, train, train_step, Batch, EpochRecord, TrainOutcome, LOG_COLUMNS,
};
