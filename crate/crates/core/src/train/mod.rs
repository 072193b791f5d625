//! Truncated backpropagation through time, normalized steepest descent and
//! perplexity evaluation.

mod bptt;
mod eval;
pub mod gradcheck;
mod optim;
mod trainer;

pub use bptt::{bptt_window, bptt_window_acc, window_loss, Grads, WindowResult};
pub use eval::{evaluate, EvalReport};
pub use optim::{normalized_sgd_update, schedule_lr, Schedule, UpdateOutcome};
pub use trainer::{train, LogRow, MaskMode, TrainConfig, TrainLog};
