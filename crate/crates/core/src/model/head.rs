//! Similarity profile, linear head and the training objective.

use super::{Bound, ModelError, Similarity};
use crate::autodiff::{concat, Tape, Tensor, Var};

/// Per-axis alignment scores `[B, n_i]` between concept tokens `[B, K, d]`
/// and anchor matrices `[n_i, d]`.
pub fn similarity_profile<'t>(
    concepts: Var<'t>,
    anchors: &[Var<'t>],
    similarity: Similarity,
) -> Result<Vec<Var<'t>>, ModelError> {
    let shape = concepts.shape();
    if shape.len() != 3 || shape[1] != anchors.len() {
        return Err(ModelError::Shape { what: "concept tokens", expected: vec![shape[0], anchors.len(), 0], found: shape });
    }
    let (batch, d) = (shape[0], shape[2]);
    let tokens = match similarity {
        Similarity::Cosine => concepts.l2_normalize(),
        Similarity::Dot => concepts,
    };
    anchors
        .iter()
        .enumerate()
        .map(|(i, anchor)| Ok(tokens.slice(1, i, i + 1)?.reshape(&[batch, d])?.matmul_t(anchor)?))
        .collect()
}

/// Concatenates per-axis scores into the `[B, Σ n_i]` profile.
pub fn concat_profile<'t>(scores: &[Var<'t>]) -> Result<Var<'t>, ModelError> {
    Ok(concat(scores, 1)?)
}

/// `logits = profile · Wᵀ + b` with `W: [N, Σ n_i]`.
pub fn classify<'t>(p: &Bound<'t>, profile: Var<'t>) -> Result<Var<'t>, ModelError> {
    let w = p.get("head.w")?;
    let (pw, ww) = (profile.shape(), w.shape());
    if pw.last() != ww.last() {
        return Err(ModelError::Shape { what: "profile", expected: vec![pw[0], ww[1]], found: pw });
    }
    Ok(profile.matmul_t(&w)?.add_broadcast(&p.get("head.b")?)?)
}

/// Softmax cross-entropy of `scores / τ` against the positive option of each
/// sample, averaged over the batch.
pub fn anchor_loss_batch<'t>(scores: Var<'t>, positives: &[usize], tau: f64) -> Result<Var<'t>, ModelError> {
    if !(tau > 0.0) {
        return Err(ModelError::Config(format!("tau must be positive, got {tau}")));
    }
    Ok(scores.scale(1.0 / tau).cross_entropy(positives)?)
}

/// Anchor loss of a single axis: `-log softmax(scores / τ)[positive]`.
pub fn anchor_loss(scores: &[f64], positive: usize, tau: f64) -> Result<f64, ModelError> {
    if positive >= scores.len() {
        return Err(ModelError::Label { what: "positive option", index: positive, count: scores.len() });
    }
    let tape = Tape::new();
    let s = tape.constant(Tensor::new(vec![1, scores.len()], scores.to_vec()).map_err(ModelError::from)?);
    Ok(anchor_loss_batch(s, &[positive], tau)?.item()?)
}

/// Loss value split into its parts.
pub struct LossParts<'t> {
    pub total: Var<'t>,
    pub ce: Var<'t>,
    /// Weighted anchor term `λ · (1/K) Σ_i anchor_loss_i`; `None` when `λ = 0`,
    /// in which case the anchor losses are not evaluated at all.
    pub anchor: Option<Var<'t>>,
}

impl LossParts<'_> {
    pub fn anchor_value(&self) -> f64 {
        self.anchor.map(|a| a.value().data()[0]).unwrap_or(0.0)
    }
}

/// `CE(logits, labels) + λ · (1/K) Σ_i anchor_loss_i`.
///
/// `positives[i][b]` is the positive option on axis `i` for sample `b`.
pub fn total_loss<'t>(
    logits: Var<'t>,
    labels: &[usize],
    scores: &[Var<'t>],
    positives: &[Vec<usize>],
    tau: f64,
    lambda_anchor: f64,
) -> Result<LossParts<'t>, ModelError> {
    if scores.len() != positives.len() || scores.is_empty() {
        return Err(ModelError::Shape { what: "positive labels", expected: vec![scores.len()], found: vec![positives.len()] });
    }
    let classes = logits.shape()[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(ModelError::Label { what: "class", index: bad, count: classes });
    }
    let ce = logits.cross_entropy(labels)?;
    if lambda_anchor == 0.0 {
        return Ok(LossParts { total: ce, ce, anchor: None });
    }
    let mut sum: Option<Var<'t>> = None;
    for (s, pos) in scores.iter().zip(positives) {
        let term = anchor_loss_batch(*s, pos, tau)?;
        sum = Some(match sum {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    let anchor = sum.expect("at least one axis").scale(lambda_anchor / scores.len() as f64);
    let total = ce.add(&anchor)?;
    Ok(LossParts { total, ce, anchor: Some(anchor) })
}
