//! Diagnostic-criteria knowledge bases and their frozen anchor embeddings.

mod anchors;
mod embed;
mod kb;


use std::path::PathBuf;

pub use anchors::{option_prompt, AnchorSet};
pub use embed::{hash_embed_text, tokenize, HASH_EMBEDDER};
pub use kb::{CriteriaAxis, KnowledgeBase};

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed knowledge base JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("a knowledge base needs at least 2 classes, found {found}")]
    TooFewClasses { found: usize },
    #[error("a knowledge base needs at least one criteria axis")]
    NoAxes,
    #[error("empty {what}")]
    EmptyName { what: &'static str },
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("duplicate axis `{0}`")]
    DuplicateAxis(String),
    #[error("axis `{axis}` has {found} options; need between 2 and {classes} (the class count)")]
    OptionCount { axis: String, found: usize, classes: usize },
    #[error("axis `{axis}` does not assign an option to class `{class}`")]
    MissingClass { axis: String, class: String },
    #[error("axis `{axis}` refers to unknown class `{class}`")]
    UnknownClass { axis: String, class: String },
    #[error("axis `{axis}` assigns class `{class}` to more than one option")]
    ClassMappedTwice { axis: String, class: String },
    #[error("axis `{axis}` maps a class to option {index}, but only {options} exist")]
    OptionIndex { axis: String, index: usize, options: usize },
    #[error("axis `{axis}` has option `{text}` that no class uses")]
    UnusedOption { axis: String, text: String },
    #[error("axis `{axis}` lists option `{text}` twice")]
    DuplicateOption { axis: String, text: String },
    #[error("text `{0}` has no tokens to embed")]
    EmptyText(String),
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("anchor file line {line}: {reason}")]
    AnchorFormat { line: usize, reason: String },
    #[error("anchor {what}: expected {expected}, found {found}")]
    AnchorCount { what: String, expected: usize, found: usize },
    #[error("anchor row for axis {axis} option {option} has zero or non-finite norm")]
    DegenerateAnchor { axis: usize, option: usize },
}
