//! AdamW training of the Explicd and black-box models, evaluation, and the
//! zero-shot baseline.

mod eval;
mod fit;
mod metrics;
mod optim;
#[cfg(test)]
mod tests;

use std::path::PathBuf;

pub use eval::{evaluate, evaluate_blackbox, eval_threads, predict_explicd, zero_shot_eval, zero_shot_predict, EvalMetrics};
pub use fit::{train_blackbox, train_explicd, StepLoss, TrainReport};
pub use metrics::{metrics_jsonl, write_metrics, Metrics};
pub use optim::{adamw_step, OptimizerState, TrainConfig};

use crate::autodiff::AutodiffError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at step {step}: total {total}, cross-entropy {ce}, anchor {anchor}")]
    NonFiniteLoss { step: usize, total: f64, ce: f64, anchor: f64 },
    #[error("non-finite gradient for `{param}` at step {step}")]
    NonFiniteGradient { param: String, step: u64 },
    #[error("cannot evaluate on an empty sample set")]
    EmptyEval,
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<AutodiffError> for TrainError {
    fn from(e: AutodiffError) -> Self {
        TrainError::Model(e.into())
    }
}
