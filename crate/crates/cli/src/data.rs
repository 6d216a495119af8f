use std::path::PathBuf;

use clap::Args;
use explicd_core::knowledge::{AnchorSet, KnowledgeBase};
use explicd_core::synthdata::{gen_dataset, kb_from_spec, SynthSpec};
use serde_json::json;

use crate::to_json;

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_per_class: usize,
    /// Seed of the train/test split; defaults to --seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Render every shape at its nominal size in the exact center.
    #[arg(long)]
    pub no_jitter: bool,
}

pub fn gen_data(a: GenDataArgs) -> anyhow::Result<String> {
    let mut spec = SynthSpec::with_seed(a.seed);
    if let Some(noise) = a.noise_std {
        spec.noise_std = noise;
    }
    spec.jitter = !a.no_jitter;
    let kb = kb_from_spec(&spec)?;
    let data = gen_dataset(&spec, a.n_per_class, a.split_seed.unwrap_or(a.seed))?;
    data.write(&a.out, &kb)?;
    log::info!("wrote {} samples to {}", data.manifest.len(), a.out.display());
    Ok(to_json(&json!({
        "classes": kb.num_classes(),
        "train": data.train.len(),
        "test": data.test.len(),
        "manifest_digest": data.manifest_digest(),
        "kb_digest": kb.digest(),
    })))
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn describe(anchors: &AnchorSet, kb: &KnowledgeBase) -> String {
    to_json(&json!({
        "dim": anchors.dim(),
        "axes": kb.num_axes(),
        "options": anchors.option_counts(),
        "provenance": anchors.provenance(),
        "digest": anchors.digest(),
    }))
}

pub fn embed_anchors(a: EmbedArgs) -> anyhow::Result<String> {
    let kb = KnowledgeBase::load(&a.kb)?;
    let anchors = AnchorSet::embed(&kb, a.dim)?;
    anchors.save(&a.out)?;
    Ok(describe(&anchors, &kb))
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Anchor file to validate, one `axis option v1 .. vd` row per option.
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the normalized anchor file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn import_anchors(a: ImportArgs) -> anyhow::Result<String> {
    let kb = KnowledgeBase::load(&a.kb)?;
    let anchors = AnchorSet::import(&a.input, &kb)?;
    anchors.save(&a.out)?;
    Ok(describe(&anchors, &kb))
}
