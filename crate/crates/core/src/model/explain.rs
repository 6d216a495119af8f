//! Explanation extraction: alignment scores, per-criterion contributions and
//! attention heatmaps for a single image.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExplicdModel, ModelError};
use crate::autodiff::{Tape, Tensor};
use crate::knowledge::{AnchorSet, KnowledgeBase};
use crate::pnm::{decode_pgm, encode_pgm, PnmError, Raster};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisExplanation {
    pub axis: String,
    pub options: Vec<String>,
    pub scores: Vec<f64>,
    pub predicted_option: usize,
    /// Attention of this axis' concept token over patches, row-major grid.
    pub attention: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub predicted_class: usize,
    pub predicted_name: String,
    pub logits: Vec<f64>,
    /// `bias[predicted_class]`
    pub bias: f64,
    /// `W[predicted_class] ⊙ profile`, in profile order.
    pub contributions: Vec<f64>,
    pub axes: Vec<AxisExplanation>,
    /// Patch grid as `[rows, cols]`.
    pub grid: [usize; 2],
    /// Mean attention over all concept tokens.
    pub heatmap: Vec<f64>,
}

impl ExplanationReport {
    /// `Σ contributions + bias`, which reproduces the predicted logit.
    pub fn reconstructed_logit(&self) -> f64 {
        self.contributions.iter().sum::<f64>() + self.bias
    }
}

/// Explains one `C×H×W` image.
pub fn explain(model: &ExplicdModel, anchors: &AnchorSet, kb: &KnowledgeBase, image: &Tensor) -> Result<ExplanationReport, ModelError> {
    model.check_compatible(kb, anchors)?;
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let out = model.forward(&tape, &bound, anchors, &[image])?;
    let logits = out.logits.value().data().to_vec();
    let profile = out.profile.value().data().to_vec();
    let attention = out.attention.to_tensor();
    let s = attention.shape()[2];

    let predicted_class = argmax(&logits);
    let head_w = model.params.get("head.w").ok_or_else(|| ModelError::MissingParam("head.w".into()))?;
    let head_b = model.params.get("head.b").ok_or_else(|| ModelError::MissingParam("head.b".into()))?;
    let contributions = head_w.row(predicted_class).iter().zip(&profile).map(|(w, p)| w * p).collect();

    let axes = kb
        .axes()
        .iter()
        .zip(&out.scores)
        .enumerate()
        .map(|(i, (axis, scores))| {
            let scores = scores.value().data().to_vec();
            AxisExplanation {
                axis: axis.name.clone(),
                options: axis.options.clone(),
                predicted_option: argmax(&scores),
                scores,
                attention: attention.data()[i * s..(i + 1) * s].to_vec(),
            }
        })
        .collect::<Vec<_>>();
    let k = axes.len() as f64;
    let heatmap = (0..s).map(|j| axes.iter().map(|a| a.attention[j]).sum::<f64>() / k).collect();
    let (gh, gw) = model.config.grid();
    Ok(ExplanationReport {
        predicted_class,
        predicted_name: kb.classes()[predicted_class].clone(),
        bias: head_b.data()[predicted_class],
        logits,
        contributions,
        axes,
        grid: [gh, gw],
        heatmap,
    })
}

/// 8-bit grayscale heatmap at image resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Heatmap {
    /// Min-max scales a row-major `rows × cols` grid to `[0, 255]` and
    /// upsamples each cell to a `scale × scale` block. A constant grid maps
    /// to all zeros.
    pub fn from_grid(values: &[f64], rows: usize, cols: usize, scale: usize) -> Self {
        assert_eq!(values.len(), rows * cols, "grid size");
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let level = |v: f64| if span > 0.0 { (255.0 * (v - lo) / span).round() as u8 } else { 0 };
        let (height, width) = (rows * scale, cols * scale);
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(level(values[(y / scale) * cols + x / scale]));
            }
        }
        Self { width, height, pixels }
    }

    /// Binary PGM (P5) bytes.
    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(&Raster { width: self.width, height: self.height, pixels: self.pixels.clone() })
    }

    pub fn parse_pgm(bytes: &[u8]) -> Result<Self, PnmError> {
        let r = decode_pgm(bytes)?;
        Ok(Self { width: r.width, height: r.height, pixels: r.pixels })
    }
}

pub fn write_pgm(path: impl AsRef<Path>, heatmap: &Heatmap) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, heatmap.to_pgm()).map_err(|source| ModelError::Io { path: path.into(), source })
}
