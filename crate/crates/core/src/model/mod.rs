//! The concept-bottleneck network: visual encoder, concept tokens,
//! anchor-similarity profile and linear head.

mod checkpoint;
mod concept;
mod config;
mod encoder;
mod explain;
mod gradcheck;
mod head;
mod network;
mod params;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use concept::{encode_concepts, ConceptEncoding};
pub use config::{ModelConfig, Similarity};
pub use encoder::{encode_image, encode_patches, patchify};
pub use explain::{argmax, explain, write_pgm, AxisExplanation, ExplanationReport, Heatmap};
pub use gradcheck::{micro_config, micro_knowledge_base, micro_model_check};
pub use head::{anchor_loss, anchor_loss_batch, classify, concat_profile, similarity_profile, total_loss, LossParts};
pub use network::{
    blackbox_forward, explicd_forward, init_encoder_params, pooled_features, BlackBoxModel, ExplicdModel, ExplicdOutput,
    ModelKind,
};
pub use params::{Bound, ParamStore};

use crate::autodiff::AutodiffError;
use crate::knowledge::KnowledgeError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("image shape {found:?} does not match configured {expected:?}")]
    ImageShape { expected: Vec<usize>, found: Vec<usize> },
    #[error("empty batch")]
    EmptyBatch,
    #[error("{what}: expected shape {expected:?}, found {found:?}")]
    Shape { what: &'static str, expected: Vec<usize>, found: Vec<usize> },
    #[error("{what} {index} out of range for {count} entries")]
    Label { what: &'static str, index: usize, count: usize },
    #[error("incompatible model and knowledge: {0}")]
    Incompatible(String),
    #[error("checkpoint line {line}: {reason}")]
    CheckpointFormat { line: usize, reason: String },
    #[error("{what} digest mismatch: checkpoint has {expected}, got {found}")]
    DigestMismatch { what: &'static str, expected: String, found: String },
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}
