use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalMetrics, TrainError};

/// One record of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub step: usize,
    /// Mean losses over the steps since the previous record.
    pub train_loss: f64,
    pub train_ce: f64,
    pub train_anchor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_alignment: Option<f64>,
    /// Seconds since training started. Kept out of the serialized log so
    /// that reruns produce identical files.
    #[serde(skip)]
    pub wall_time: f64,
}

impl Metrics {
    pub fn new(step: usize, [loss, ce, anchor]: [f64; 3], eval: Option<EvalMetrics>, wall_time: f64) -> Self {
        let (test_accuracy, alignment, macro_alignment) = match eval {
            Some(e) => (Some(e.accuracy), e.alignment, e.macro_alignment),
            None => (None, None, None),
        };
        Self { step, train_loss: loss, train_ce: ce, train_anchor: anchor, test_accuracy, alignment, macro_alignment, wall_time }
    }
}

/// JSON Lines, one record per line.
pub fn metrics_jsonl(records: &[Metrics]) -> String {
    records.iter().map(|m| serde_json::to_string(m).expect("metrics serialize") + "\n").collect()
}

pub fn write_metrics(path: impl AsRef<Path>, records: &[Metrics]) -> Result<(), TrainError> {
    let path = path.as_ref();
    std::fs::write(path, metrics_jsonl(records)).map_err(|source| TrainError::Io { path: path.into(), source })
}
