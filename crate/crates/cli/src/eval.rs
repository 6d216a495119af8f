use std::path::PathBuf;

use clap::Args;
use explicd_core::model::{init_encoder_params, Checkpoint, ModelKind};
use explicd_core::rng::labeled_seed;
use explicd_core::train::{evaluate, evaluate_blackbox, zero_shot_eval};
use serde::Serialize;

use crate::train::{axis_rows, AxisAccuracy};
use crate::{load_anchors, load_dataset, load_kb, select, to_json, RunConfig, SplitArg};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Anchor file the model was trained with; defaults to the hash
    /// embedding at the checkpoint's dimension.
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub split: SplitArg,
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    kind: &'static str,
    split: String,
    samples: usize,
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alignment: Option<Vec<AxisAccuracy>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    macro_alignment: Option<f64>,
}

fn split_name(s: SplitArg) -> String {
    format!("{s:?}").to_lowercase()
}

pub fn eval(a: EvalArgs) -> anyhow::Result<String> {
    let kb = load_kb(a.kb.as_deref(), Some(&a.data))?;
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    let kind = checkpoint.kind;
    let samples = select(load_dataset(&a.data)?, a.split);
    let metrics = match kind {
        ModelKind::Explicd => {
            let anchors = load_anchors(a.anchors.as_deref(), &kb, checkpoint.config.dim)?;
            let model = checkpoint.into_explicd(&kb, &anchors)?;
            evaluate(&model, &anchors, &kb, &samples)?
        }
        ModelKind::BlackBox => evaluate_blackbox(&checkpoint.into_blackbox(&kb)?, &samples)?,
    };
    let summary = EvalSummary {
        kind: kind.as_str(),
        split: split_name(a.split),
        samples: samples.len(),
        accuracy: metrics.accuracy,
        alignment: axis_rows(&kb, metrics.alignment.as_deref()),
        macro_alignment: metrics.macro_alignment,
    };
    eprintln!("accuracy  {:.4}", summary.accuracy);
    for row in summary.alignment.iter().flatten() {
        eprintln!("  {:<12} {:.4}", row.axis, row.accuracy);
    }
    Ok(to_json(&summary))
}

#[derive(Debug, Args)]
pub struct ZeroShotArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Flat JSON config for the encoder shape.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds the untrained encoder.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    pub split: SplitArg,
}

pub fn zeroshot(a: ZeroShotArgs) -> anyhow::Result<String> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = a.dim {
        cfg.model.dim = d;
    }
    cfg.model.validate()?;
    let kb = load_kb(a.kb.as_deref(), Some(&a.data))?;
    let samples = select(load_dataset(&a.data)?, a.split);
    // Same derivation as training, so this is the encoder a run with this seed starts from.
    let encoder = init_encoder_params(&cfg.model, labeled_seed(a.seed, "init"))?;
    let accuracy = zero_shot_eval(&encoder, &cfg.model, &kb, &samples)?;
    Ok(to_json(&serde_json::json!({
        "split": split_name(a.split),
        "samples": samples.len(),
        "seed": a.seed,
        "accuracy": accuracy,
        "chance": 1.0 / kb.num_classes() as f64,
    })))
}
