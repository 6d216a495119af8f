//! Visual concept learning: K learnable tokens read the feature map through
//! one single-head cross-attention layer.

use super::{Bound, ModelError};
use crate::autodiff::Var;

/// Encoded concept tokens and the attention that produced them.
pub struct ConceptEncoding<'t> {
    /// `[B, K, d]`
    pub concepts: Var<'t>,
    /// `[B, K, S]`, each row a probability vector over patches.
    pub attention: Var<'t>,
}

/// Cross-attention with the concept tokens as queries and the feature map as
/// keys and values:
///
/// ```text
/// Q = p·W_q   K = F·W_k   V = F·W_v
/// A = softmax(Q Kᵀ / √d)  p̂ = (A V)·W_o
/// ```
pub fn encode_concepts<'t>(p: &Bound<'t>, fmap: Var<'t>) -> Result<ConceptEncoding<'t>, ModelError> {
    let shape = fmap.shape();
    if shape.len() != 3 {
        return Err(ModelError::Shape { what: "feature map", expected: vec![0, 0, 0], found: shape });
    }
    let (batch, d) = (shape[0], shape[2]);
    let queries = p.get("concept.tokens")?.matmul(&p.get("concept.wq")?)?.expand(batch)?;
    let keys = fmap.matmul(&p.get("concept.wk")?)?;
    let values = fmap.matmul(&p.get("concept.wv")?)?;
    let attention = queries.bmm(&keys, true)?.scale(1.0 / (d as f64).sqrt()).softmax()?;
    let concepts = attention.bmm(&values, false)?.matmul(&p.get("concept.wo")?)?;
    Ok(ConceptEncoding { concepts, attention })
}
