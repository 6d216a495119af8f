use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use explicd_core::model::{explain as explain_image, write_pgm, Checkpoint, ExplanationReport, Heatmap};
use explicd_core::pnm::decode_ppm;
use explicd_core::synthdata::raster_to_image;
use serde::Serialize;
use serde_json::json;

use crate::error::invalid;
use crate::{create_dir, load_anchors, load_dataset, load_kb, to_json};

pub const EXPLANATION_FILE: &str = "explanation.json";
pub const HEATMAP_FILE: &str = "heatmap.pgm";

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["sample", "image"]))]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory; needed with --sample, and supplies kb.json.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    /// Manifest id of the sample to explain.
    #[arg(long)]
    pub sample: Option<String>,
    /// A binary PPM image to explain.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Explanation<'a> {
    source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_class: Option<usize>,
    #[serde(flatten)]
    report: &'a ExplanationReport,
}

/// File-name-safe form of an axis name.
fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c.to_ascii_lowercase() } else { '_' }).collect()
}

pub fn explain(a: ExplainArgs) -> anyhow::Result<String> {
    let kb = load_kb(a.kb.as_deref(), a.data.as_deref())?;
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    let anchors = load_anchors(a.anchors.as_deref(), &kb, checkpoint.config.dim)?;
    let model = checkpoint.into_explicd(&kb, &anchors)?;

    let (source, true_class, image) = match (&a.sample, &a.image) {
        (Some(id), _) => {
            let dir = a.data.as_deref().ok_or_else(|| invalid("--sample needs --data"))?;
            let data = load_dataset(dir)?;
            let sample = data
                .train
                .into_iter()
                .chain(data.test)
                .find(|s| &s.id == id)
                .ok_or_else(|| invalid(format!("no sample `{id}` in {}", dir.display())))?;
            (id.clone(), Some(sample.class), sample.image)
        }
        (None, Some(path)) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let raster = decode_ppm(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            (path.display().to_string(), None, raster_to_image(&raster))
        }
        (None, None) => unreachable!("clap requires --sample or --image"),
    };

    let report = explain_image(&model, &anchors, &kb, &image)?;
    let out = create_dir(&a.out)?;
    let [rows, cols] = report.grid;
    let scale = model.config.patch;
    let mut files = vec![EXPLANATION_FILE.to_string(), HEATMAP_FILE.to_string()];
    write_pgm(out.join(HEATMAP_FILE), &Heatmap::from_grid(&report.heatmap, rows, cols, scale))?;
    for axis in &report.axes {
        let name = format!("heatmap-{}.pgm", slug(&axis.axis));
        write_pgm(out.join(&name), &Heatmap::from_grid(&axis.attention, rows, cols, scale))?;
        files.push(name);
    }
    let text = to_json(&Explanation { source, true_class, report: &report });
    let path = out.join(EXPLANATION_FILE);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;

    Ok(to_json(&json!({
        "predicted_class": report.predicted_class,
        "predicted_name": report.predicted_name,
        "true_class": true_class,
        "logit": report.logits[report.predicted_class],
        "reconstructed_logit": report.reconstructed_logit(),
        "files": files,
    })))
}
