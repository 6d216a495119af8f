use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::embed::{hash_embed_text, HASH_EMBEDDER};
use super::{KnowledgeBase, KnowledgeError};
use crate::autodiff::Tensor;

const MAGIC: &str = "EXPLICD-ANCHORS";
const VERSION: &str = "1";

/// Rows whose norm already lies this close to 1 are kept bit-for-bit on import.
const UNIT_SLACK: f64 = 1e-12;

/// Frozen per-axis anchor embeddings, one unit-norm row per option.
#[derive(Clone, Debug)]
pub struct AnchorSet {
    dim: usize,
    axes: Vec<Tensor>,
    provenance: String,
}

/// Text that is embedded for one option.
pub fn option_prompt(axis: &str, option: &str) -> String {
    format!("{axis}: {option}")
}

impl AnchorSet {
    /// Embeds every option of `kb` with the built-in hash embedder.
    pub fn embed(kb: &KnowledgeBase, dim: usize) -> Result<Self, KnowledgeError> {
        let axes = kb
            .axes()
            .iter()
            .map(|axis| {
                let mut data = Vec::with_capacity(axis.options.len() * dim);
                for option in &axis.options {
                    data.extend(hash_embed_text(&option_prompt(&axis.name, option), dim)?);
                }
                Ok(Tensor::new(vec![axis.options.len(), dim], data).expect("rows × dim values"))
            })
            .collect::<Result<Vec<_>, KnowledgeError>>()?;
        Ok(Self { dim, axes, provenance: HASH_EMBEDDER.to_string() })
    }

    /// Builds an anchor set from raw per-axis matrices, normalizing rows.
    pub fn from_matrices(kb: &KnowledgeBase, axes: Vec<Tensor>, provenance: impl Into<String>) -> Result<Self, KnowledgeError> {
        let dim = axes.first().map(Tensor::last_dim).ok_or(KnowledgeError::AnchorCount {
            what: "axes".into(),
            expected: kb.num_axes(),
            found: 0,
        })?;
        if axes.len() != kb.num_axes() {
            return Err(KnowledgeError::AnchorCount { what: "axes".into(), expected: kb.num_axes(), found: axes.len() });
        }
        let mut normalized = Vec::with_capacity(axes.len());
        for (i, (m, axis)) in axes.into_iter().zip(kb.axes()).enumerate() {
            if m.shape() != [axis.option_count(), dim] {
                return Err(KnowledgeError::AnchorCount {
                    what: format!("shape of axis {i} ({})", axis.name),
                    expected: axis.option_count() * dim,
                    found: m.numel(),
                });
            }
            let mut data = m.into_data();
            for (o, row) in data.chunks_exact_mut(dim).enumerate() {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !norm.is_finite() || norm == 0.0 {
                    return Err(KnowledgeError::DegenerateAnchor { axis: i, option: o });
                }
                if (norm - 1.0).abs() > UNIT_SLACK {
                    row.iter_mut().for_each(|v| *v /= norm);
                }
            }
            normalized.push(Tensor::new(vec![axis.option_count(), dim], data).expect("shape checked"));
        }
        Ok(Self { dim, axes: normalized, provenance: provenance.into() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `n_i × d` matrix for axis `i`.
    pub fn axis(&self, i: usize) -> &Tensor {
        &self.axes[i]
    }

    pub fn axes(&self) -> &[Tensor] {
        &self.axes
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn option_counts(&self) -> Vec<usize> {
        self.axes.iter().map(|m| m.shape()[0]).collect()
    }

    /// Checks that axis and option counts agree with `kb`.
    pub fn check_matches(&self, kb: &KnowledgeBase) -> Result<(), KnowledgeError> {
        if self.axes.len() != kb.num_axes() {
            return Err(KnowledgeError::AnchorCount { what: "axes".into(), expected: kb.num_axes(), found: self.axes.len() });
        }
        for (i, (m, axis)) in self.axes.iter().zip(kb.axes()).enumerate() {
            if m.shape()[0] != axis.option_count() {
                return Err(KnowledgeError::AnchorCount {
                    what: format!("options on axis {i} ({})", axis.name),
                    expected: axis.option_count(),
                    found: m.shape()[0],
                });
            }
        }
        Ok(())
    }

    /// Same dimension and bitwise-identical matrices; provenance is ignored.
    pub fn bit_eq(&self, other: &AnchorSet) -> bool {
        self.dim == other.dim && self.axes.len() == other.axes.len() && self.axes.iter().zip(&other.axes).all(|(a, b)| a.bit_eq(b))
    }

    /// Serializes to the anchor text format.
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION} {}\n", self.dim);
        for (i, m) in self.axes.iter().enumerate() {
            for o in 0..m.shape()[0] {
                let _ = write!(out, "{i} {o}");
                for v in m.row(o) {
                    let _ = write!(out, " {v:.16e}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// SHA-256 of [`AnchorSet::to_text`], hex.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KnowledgeError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| KnowledgeError::Io { path: path.into(), source })
    }

    /// Parses anchor text against `kb`. Every `(axis, option)` row must be
    /// present exactly once; rows are re-normalized to unit length.
    pub fn parse(text: &str, kb: &KnowledgeBase, provenance: impl Into<String>) -> Result<Self, KnowledgeError> {
        let bad = |line: usize, reason: String| KnowledgeError::AnchorFormat { line, reason };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let dim = match fields.as_slice() {
            [MAGIC, VERSION, d] => d.parse::<usize>().map_err(|e| bad(1, format!("dimension: {e}")))?,
            _ => return Err(bad(1, format!("expected header `{MAGIC} {VERSION} <d>`"))),
        };
        if dim == 0 {
            return Err(bad(1, "dimension must be positive".into()));
        }
        let counts = kb.option_counts();
        let mut rows: Vec<Vec<Option<Vec<f64>>>> = counts.iter().map(|&n| vec![None; n]).collect();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut index = |what: &str| -> Result<usize, KnowledgeError> {
                parts
                    .next()
                    .ok_or_else(|| bad(lineno, format!("missing {what} index")))?
                    .parse::<usize>()
                    .map_err(|e| bad(lineno, format!("{what} index: {e}")))
            };
            let axis = index("axis")?;
            let option = index("option")?;
            if axis >= counts.len() {
                return Err(KnowledgeError::AnchorCount { what: format!("axis index on line {lineno}"), expected: counts.len(), found: axis + 1 });
            }
            if option >= counts[axis] {
                return Err(KnowledgeError::AnchorCount {
                    what: format!("option index on line {lineno} (axis {axis})"),
                    expected: counts[axis],
                    found: option + 1,
                });
            }
            let values = parts
                .map(|t| t.parse::<f64>().map_err(|e| bad(lineno, format!("value `{t}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != dim {
                return Err(KnowledgeError::AnchorCount { what: format!("values on line {lineno}"), expected: dim, found: values.len() });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(bad(lineno, "non-finite value".into()));
            }
            if rows[axis][option].replace(values).is_some() {
                return Err(bad(lineno, format!("duplicate row for axis {axis} option {option}")));
            }
        }
        let mut matrices = Vec::with_capacity(rows.len());
        for (axis, axis_rows) in rows.into_iter().enumerate() {
            let present = axis_rows.iter().filter(|r| r.is_some()).count();
            if present != axis_rows.len() {
                return Err(KnowledgeError::AnchorCount {
                    what: format!("option rows for axis {axis} ({})", kb.axes()[axis].name),
                    expected: axis_rows.len(),
                    found: present,
                });
            }
            let n = axis_rows.len();
            let data: Vec<f64> = axis_rows.into_iter().flatten().flatten().collect();
            matrices.push(Tensor::new(vec![n, dim], data).expect("rows × dim values"));
        }
        Self::from_matrices(kb, matrices, provenance)
    }

    /// Loads an anchor file computed elsewhere; provenance records the path.
    pub fn import(path: impl AsRef<Path>, kb: &KnowledgeBase) -> Result<Self, KnowledgeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| KnowledgeError::Io { path: path.into(), source })?;
        Self::parse(&text, kb, format!("import:{}", path.display()))
    }

    /// Class-level anchors: one embedding per class of the joined prompts of
    /// its positive options. Used by the zero-shot baseline.
    pub fn class_anchors(kb: &KnowledgeBase, dim: usize) -> Result<Tensor, KnowledgeError> {
        let mut data = Vec::with_capacity(kb.num_classes() * dim);
        for class in 0..kb.num_classes() {
            let text = kb
                .axes()
                .iter()
                .map(|axis| option_prompt(&axis.name, &axis.options[axis.class_to_option[class]]))
                .collect::<Vec<_>>()
                .join("; ");
            data.extend(hash_embed_text(&text, dim)?);
        }
        Ok(Tensor::new(vec![kb.num_classes(), dim], data).expect("classes × dim values"))
    }
}
