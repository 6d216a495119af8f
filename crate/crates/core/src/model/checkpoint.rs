//! Plain-text checkpoint format.
//!
//! ```text
//! EXPLICD-CKPT 1
//! kind explicd
//! config {"channels":3,...}
//! layout <N> <n_1> ... <n_K>
//! kb-digest <hex>
//! anchor-digest <hex|none>
//! tensors <count>
//! <name>
//! <extent> <extent> ...
//! <row-major values>
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{BlackBoxModel, ExplicdModel, ModelConfig, ModelError, ModelKind, ParamStore};
use crate::autodiff::Tensor;
use crate::knowledge::{AnchorSet, KnowledgeBase};

const MAGIC: &str = "EXPLICD-CKPT 1";

/// A saved model together with the digests of the knowledge it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub meta: CheckpointMeta,
    pub params: ParamStore,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub num_classes: usize,
    /// Options per axis; empty for the black-box model.
    pub option_counts: Vec<usize>,
    pub kb_digest: String,
    pub anchor_digest: Option<String>,
}

impl Checkpoint {
    pub fn from_explicd(model: &ExplicdModel, kb: &KnowledgeBase, anchors: &AnchorSet) -> Self {
        Self {
            kind: ModelKind::Explicd,
            config: model.config.clone(),
            meta: CheckpointMeta {
                num_classes: model.num_classes,
                option_counts: model.option_counts.clone(),
                kb_digest: kb.digest(),
                anchor_digest: Some(anchors.digest()),
            },
            params: model.params.clone(),
        }
    }

    pub fn from_blackbox(model: &BlackBoxModel, kb: &KnowledgeBase) -> Self {
        Self {
            kind: ModelKind::BlackBox,
            config: model.config.clone(),
            meta: CheckpointMeta {
                num_classes: model.num_classes,
                option_counts: Vec::new(),
                kb_digest: kb.digest(),
                anchor_digest: None,
            },
            params: model.params.clone(),
        }
    }

    fn check_kb(&self, kb: &KnowledgeBase) -> Result<(), ModelError> {
        let found = kb.digest();
        if found != self.meta.kb_digest {
            return Err(ModelError::DigestMismatch { what: "knowledge base", expected: self.meta.kb_digest.clone(), found });
        }
        Ok(())
    }

    fn check_params(&self, reference: &ParamStore) -> Result<(), ModelError> {
        for (name, t) in reference.iter() {
            let got = self.params.get(name).ok_or_else(|| ModelError::MissingParam(name.clone()))?;
            if got.shape() != t.shape() {
                return Err(ModelError::Shape { what: "checkpoint tensor", expected: t.shape().to_vec(), found: got.shape().to_vec() });
            }
        }
        if let Some(extra) = self.params.names().find(|n| reference.get(n).is_none()) {
            return Err(ModelError::Incompatible(format!("unexpected tensor `{extra}` in checkpoint")));
        }
        Ok(())
    }

    /// Rebuilds the Explicd model, refusing knowledge or anchors other than
    /// the ones recorded at save time.
    pub fn into_explicd(self, kb: &KnowledgeBase, anchors: &AnchorSet) -> Result<ExplicdModel, ModelError> {
        if self.kind != ModelKind::Explicd {
            return Err(ModelError::Incompatible(format!("checkpoint holds a {} model", self.kind.as_str())));
        }
        self.check_kb(kb)?;
        let found = anchors.digest();
        if self.meta.anchor_digest.as_deref() != Some(found.as_str()) {
            return Err(ModelError::DigestMismatch {
                what: "anchor set",
                expected: self.meta.anchor_digest.clone().unwrap_or_else(|| "none".into()),
                found,
            });
        }
        let mut model = ExplicdModel::new(self.config.clone(), kb, 0)?;
        model.check_compatible(kb, anchors)?;
        self.check_params(&model.params)?;
        model.params = self.params;
        Ok(model)
    }

    pub fn into_blackbox(self, kb: &KnowledgeBase) -> Result<BlackBoxModel, ModelError> {
        if self.kind != ModelKind::BlackBox {
            return Err(ModelError::Incompatible(format!("checkpoint holds a {} model", self.kind.as_str())));
        }
        self.check_kb(kb)?;
        let mut model = BlackBoxModel::new(self.config.clone(), kb.num_classes(), 0)?;
        self.check_params(&model.params)?;
        model.params = self.params;
        Ok(model)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let config = serde_json::to_string(&self.config).expect("config serializes");
        let _ = writeln!(out, "{MAGIC}\nkind {}\nconfig {config}", self.kind.as_str());
        let _ = write!(out, "layout {}", self.meta.num_classes);
        for n in &self.meta.option_counts {
            let _ = write!(out, " {n}");
        }
        let _ = writeln!(out, "\nkb-digest {}", self.meta.kb_digest);
        let _ = writeln!(out, "anchor-digest {}", self.meta.anchor_digest.as_deref().unwrap_or("none"));
        let _ = writeln!(out, "tensors {}", self.params.len());
        for (name, t) in self.params.iter() {
            out.push_str(name);
            out.push('\n');
            let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            out.push_str(&shape.join(" "));
            out.push('\n');
            for (i, v) in t.data().iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(0, format!("unexpected end of file, expected {what}")));
        let (n, magic) = next("header")?;
        if magic != MAGIC {
            return Err(bad(n, format!("expected `{MAGIC}`")));
        }
        let (n, line) = next("kind")?;
        let kind = field(n, line, "kind").and_then(|k| ModelKind::parse(k).ok_or_else(|| bad(n, format!("unknown kind `{k}`"))))?;
        let (n, line) = next("config")?;
        let config: ModelConfig = serde_json::from_str(field(n, line, "config")?).map_err(|e| bad(n, format!("config: {e}")))?;
        config.validate()?;
        let (n, line) = next("layout")?;
        let layout = parse_counts(n, field(n, line, "layout")?)?;
        let (num_classes, option_counts) = layout.split_first().ok_or_else(|| bad(n, "empty layout".into()))?;
        if (kind == ModelKind::Explicd) == option_counts.is_empty() {
            return Err(bad(n, "layout does not match model kind".into()));
        }
        let (n, line) = next("kb-digest")?;
        let kb_digest = field(n, line, "kb-digest")?.to_string();
        let (n, line) = next("anchor-digest")?;
        let anchor_digest = match field(n, line, "anchor-digest")? {
            "none" => None,
            d => Some(d.to_string()),
        };
        if (kind == ModelKind::Explicd) != anchor_digest.is_some() {
            return Err(bad(n, "anchor digest does not match model kind".into()));
        }
        let (n, line) = next("tensor count")?;
        let count: usize = field(n, line, "tensors")?.parse().map_err(|e| bad(n, format!("tensor count: {e}")))?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let (n, name) = next("tensor name")?;
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(bad(n, format!("invalid tensor name `{name}`")));
            }
            if params.get(name).is_some() {
                return Err(bad(n, format!("duplicate tensor `{name}`")));
            }
            let (n, shape_line) = next("tensor shape")?;
            let shape = parse_counts(n, shape_line)?;
            let (n, values_line) = next("tensor values")?;
            let values = values_line
                .split_whitespace()
                .map(|t| match t.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(bad(n, "non-finite value".into())),
                    Err(e) => Err(bad(n, format!("value `{t}`: {e}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let tensor = Tensor::new(shape, values).map_err(|e| bad(n, e.to_string()))?;
            params.insert(name, tensor);
        }
        if let Some((n, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(bad(n, format!("trailing content `{extra}`")));
        }
        Ok(Self {
            kind,
            config,
            meta: CheckpointMeta { num_classes: *num_classes, option_counts: option_counts.to_vec(), kb_digest, anchor_digest },
            params,
        })
    }

    /// SHA-256 of [`Checkpoint::to_text`], hex.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| ModelError::Io { path: path.into(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }
}

fn bad(line: usize, reason: String) -> ModelError {
    ModelError::CheckpointFormat { line, reason }
}

fn field<'a>(line: usize, text: &'a str, key: &str) -> Result<&'a str, ModelError> {
    text.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| bad(line, format!("expected `{key} ...`")))
}

fn parse_counts(line: usize, text: &str) -> Result<Vec<usize>, ModelError> {
    text.split_whitespace()
        .map(|t| match t.parse::<usize>() {
            Ok(0) => Err(bad(line, "zero extent".into())),
            Ok(v) => Ok(v),
            Err(e) => Err(bad(line, format!("`{t}`: {e}"))),
        })
        .collect()
}
