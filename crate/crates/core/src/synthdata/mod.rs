//! Procedurally rendered shapes whose color, shape, texture and size are
//! known per sample, plus the matching criteria knowledge base.

mod dataset;
mod render;
mod spec;

use std::path::PathBuf;

pub use dataset::{gen_dataset, kb_from_spec, manifest_text, parse_manifest, Dataset, ManifestEntry, Split, IMAGE_DIR, KB_FILE, MANIFEST_FILE};
pub use render::{image_to_raster, raster_to_image, render_sample, SyntheticSample, STRIPE_LEVEL};
pub use spec::{ClassBinding, Color, Shape, Size, SynthSpec, Texture};

use crate::knowledge::KnowledgeError;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {reason}", path.display())]
    Image { path: PathBuf, reason: String },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}
