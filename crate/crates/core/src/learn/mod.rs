//! Learning rules: target signals, feedback projection, local consolidation
//! with Adam, and the surrogate-gradient baseline.

pub mod adam;
pub mod feedback;
pub mod local;
pub mod surrogate;
pub mod tp;
pub mod train;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use feedback::{init_feedback, project_target, FeedbackMatrices, FeedbackMatrix, FeedbackScale};
pub use local::{layer_error, local_grad};
pub use surrogate::pseudo_bp_grads;
pub use tp::{compute_tp, TpMode};
pub use train::{batch_grads, evaluate, predict, train_epoch, EvalConfig, EvalStats, EpochStats, Model, TpApply, TrainConfig};
