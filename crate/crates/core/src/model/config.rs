use serde::{Deserialize, Serialize};

use super::ModelError;

/// How concept tokens are compared to anchors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    /// Concept tokens are L2-normalized, so scores are cosines in `[-1, 1]`.
    Cosine,
    /// Raw dot product with the (unit-norm) anchors.
    Dot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Embedding width `d`, shared by the encoder, concept tokens and anchors.
    pub dim: usize,
    pub patch: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Softmax temperature of the anchor loss.
    pub tau: f64,
    /// Weight of the averaged anchor loss in the total objective.
    pub lambda_anchor: f64,
    pub similarity: Similarity,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 3,
            height: 32,
            width: 32,
            dim: 64,
            patch: 8,
            depth: 2,
            heads: 4,
            mlp_ratio: 2,
            tau: 0.07,
            lambda_anchor: 1.0,
            similarity: Similarity::Cosine,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| Err(ModelError::Config(reason));
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.lambda_anchor >= 0.0) || !self.lambda_anchor.is_finite() {
            return bad(format!("lambda_anchor must be non-negative, got {}", self.lambda_anchor));
        }
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return bad(format!("dim {} must be a positive multiple of heads {}", self.dim, self.heads));
        }
        if self.patch == 0 || !self.height.is_multiple_of(self.patch) || !self.width.is_multiple_of(self.patch) {
            return bad(format!("image {}×{} is not divisible by patch {}", self.height, self.width, self.patch));
        }
        if self.channels == 0 || self.height == 0 || self.width == 0 || self.mlp_ratio == 0 {
            return bad("image extents and mlp_ratio must be positive".into());
        }
        if !(self.init_std >= 0.0) {
            return bad(format!("init_std must be non-negative, got {}", self.init_std));
        }
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.patch, self.width / self.patch)
    }

    /// Number of patches `S`.
    pub fn seq_len(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw
    }

    pub fn patch_pixels(&self) -> usize {
        self.channels * self.patch * self.patch
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}
