use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use explicd_core::knowledge::KnowledgeBase;
use explicd_core::model::{BlackBoxModel, Checkpoint, ExplicdModel, ModelKind};
use explicd_core::rng::labeled_seed;
use explicd_core::train::{train_blackbox, train_explicd, write_metrics, Metrics};
use serde::Serialize;

use crate::error::invalid;
use crate::{create_dir, load_anchors, load_dataset, load_kb, to_json, Mode, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ANCHORS_FILE: &str = "anchors.txt";

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat JSON config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Knowledge base; defaults to the dataset's kb.json.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Anchor file to import instead of hash-embedding the knowledge base.
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    /// Output directory for checkpoint, metrics and summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda_anchor: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
}

impl TrainArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = self.$flag.clone() {
                    cfg.$($field)+ = v;
                }
            };
        }
        set!(steps => train.max_steps);
        set!(lr => train.lr);
        set!(seed => train.seed);
        set!(batch_size => train.batch_size);
        set!(eval_interval => train.eval_interval);
        set!(lambda_anchor => model.lambda_anchor);
        set!(tau => model.tau);
        set!(dim => model.dim);
        if let Some(m) = self.mode {
            cfg.mode = m.into();
        }
        for (slot, flag) in [(&mut cfg.data, &self.data), (&mut cfg.anchors, &self.anchors), (&mut cfg.out, &self.out)] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
pub struct AxisAccuracy {
    pub axis: String,
    pub accuracy: f64,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    mode: &'static str,
    steps: usize,
    seed: u64,
    train_samples: usize,
    test_samples: usize,
    final_train_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alignment: Option<Vec<AxisAccuracy>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    macro_alignment: Option<f64>,
    kb_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    anchor_digest: Option<String>,
    manifest_digest: String,
    checkpoint_digest: String,
}

pub fn axis_rows(kb: &KnowledgeBase, alignment: Option<&[f64]>) -> Option<Vec<AxisAccuracy>> {
    alignment.map(|a| kb.axes().iter().zip(a).map(|(axis, &accuracy)| AxisAccuracy { axis: axis.name.clone(), accuracy }).collect())
}

pub fn train(a: TrainArgs) -> anyhow::Result<String> {
    let cfg = a.resolve()?;
    let data_dir = cfg.data.clone().ok_or_else(|| invalid("train needs --data"))?;
    let out = create_dir(&cfg.out.clone().ok_or_else(|| invalid("train needs --out"))?)?;
    let kb = load_kb(a.kb.as_deref(), Some(&data_dir))?;
    let data = load_dataset(&data_dir)?;
    let init_seed = labeled_seed(cfg.train.seed, "init");

    let (checkpoint, report, anchor_digest) = match cfg.mode {
        ModelKind::Explicd => {
            let anchors = load_anchors(cfg.anchors.as_deref(), &kb, cfg.model.dim)?;
            let mut model = ExplicdModel::new(cfg.model.clone(), &kb, init_seed)?;
            model.check_compatible(&kb, &anchors)?;
            let report = train_explicd(&mut model, &anchors, &kb, &data.train, &data.test, &cfg.train)?;
            anchors.save(out.join(ANCHORS_FILE))?;
            (Checkpoint::from_explicd(&model, &kb, &anchors), report, Some(anchors.digest()))
        }
        ModelKind::BlackBox => {
            let mut model = BlackBoxModel::new(cfg.model.clone(), kb.num_classes(), init_seed)?;
            let report = train_blackbox(&mut model, &data.train, &data.test, &cfg.train)?;
            (Checkpoint::from_blackbox(&model, &kb), report, None)
        }
    };
    checkpoint.save(out.join(CHECKPOINT_FILE))?;
    write_metrics(out.join(METRICS_FILE), &report.metrics)?;

    let last: Option<&Metrics> = report.metrics.last();
    let summary = TrainSummary {
        mode: cfg.mode.as_str(),
        steps: cfg.train.max_steps,
        seed: cfg.train.seed,
        train_samples: data.train.len(),
        test_samples: data.test.len(),
        final_train_loss: last.map(|m| m.train_loss),
        test_accuracy: last.and_then(|m| m.test_accuracy),
        alignment: axis_rows(&kb, last.and_then(|m| m.alignment.as_deref())),
        macro_alignment: last.and_then(|m| m.macro_alignment),
        kb_digest: kb.digest(),
        anchor_digest,
        manifest_digest: data.manifest_digest(),
        checkpoint_digest: checkpoint.digest(),
    };
    let text = to_json(&summary);
    let path = out.join(SUMMARY_FILE);
    std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    Ok(text)
}
