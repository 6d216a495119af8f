//! The `explicd` command line: data generation, anchor embedding, training,
//! evaluation, explanation export and gradient checking.
//!
//! Every command returns the text it prints on stdout, so the whole pipeline
//! can be driven in-process through [`run`].

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod data;
mod error;
mod eval;
mod explain;
mod gradcheck;
mod train;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use explicd_core::knowledge::{AnchorSet, KnowledgeBase};
use explicd_core::model::ModelKind;
use explicd_core::synthdata::{Dataset, SyntheticSample, KB_FILE};
use serde::Serialize;

pub use config::RunConfig;
pub use error::{exit_code, GradCheckFailed, Invalid, EXIT_INVALID, EXIT_RUNTIME};

#[derive(Debug, Parser)]
#[command(name = "explicd", version, about = "Concept-bottleneck image classification with frozen criteria anchors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset with its criteria knowledge base.
    GenData(data::GenDataArgs),
    /// Embed every criteria option of a knowledge base with the hash embedder.
    EmbedAnchors(data::EmbedArgs),
    /// Validate and normalize an anchor file computed elsewhere.
    ImportAnchors(data::ImportArgs),
    /// Train an Explicd or black-box model.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint.
    Eval(eval::EvalArgs),
    /// Zero-shot classification with an untrained encoder.
    Zeroshot(eval::ZeroShotArgs),
    /// Export scores, contributions and heatmaps for one image.
    Explain(explain::ExplainArgs),
    /// Check reverse-mode gradients of a micro-model against finite differences.
    Gradcheck(gradcheck::GradCheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Explicd,
    Blackbox,
}

impl From<Mode> for ModelKind {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Explicd => ModelKind::Explicd,
            Mode::Blackbox => ModelKind::BlackBox,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    #[default]
    Test,
    All,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> anyhow::Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    execute(Cli::try_parse_from(args)?)
}

pub fn execute(cli: Cli) -> anyhow::Result<String> {
    match cli.command {
        Command::GenData(a) => data::gen_data(a),
        Command::EmbedAnchors(a) => data::embed_anchors(a),
        Command::ImportAnchors(a) => data::import_anchors(a),
        Command::Train(a) => train::train(a),
        Command::Eval(a) => eval::eval(a),
        Command::Zeroshot(a) => eval::zeroshot(a),
        Command::Explain(a) => explain::explain(a),
        Command::Gradcheck(a) => gradcheck::gradcheck(a),
    }
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

/// `--kb` if given, otherwise `kb.json` inside the dataset directory.
fn load_kb(kb: Option<&Path>, data: Option<&Path>) -> anyhow::Result<KnowledgeBase> {
    let path = match (kb, data) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(d)) => d.join(KB_FILE),
        (None, None) => return Err(error::invalid("need --kb or --data to locate the knowledge base")),
    };
    Ok(KnowledgeBase::load(&path)?)
}

/// Imported anchors if a path is given, otherwise the hash embedding at `dim`.
fn load_anchors(path: Option<&Path>, kb: &KnowledgeBase, dim: usize) -> anyhow::Result<AnchorSet> {
    Ok(match path {
        Some(p) => AnchorSet::import(p, kb)?,
        None => AnchorSet::embed(kb, dim)?,
    })
}

fn load_dataset(dir: &Path) -> anyhow::Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn select(data: Dataset, split: SplitArg) -> Vec<SyntheticSample> {
    match split {
        SplitArg::Train => data.train,
        SplitArg::Test => data.test,
        SplitArg::All => data.train.into_iter().chain(data.test).collect(),
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}
