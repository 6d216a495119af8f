use super::concept::encode_concepts;
use super::encoder::{encode_patches, patchify};
use super::head::{classify, concat_profile, similarity_profile};
use super::params::{init_encoder, Initializer};
use super::{Bound, ModelConfig, ModelError, ParamStore};
use crate::autodiff::{Tape, Tensor, Var};
use crate::knowledge::{AnchorSet, KnowledgeBase};

/// Which network a parameter set belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Explicd,
    BlackBox,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Explicd => "explicd",
            ModelKind::BlackBox => "blackbox",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "explicd" => Some(ModelKind::Explicd),
            "blackbox" => Some(ModelKind::BlackBox),
            _ => None,
        }
    }
}

/// Visual encoder, concept module and similarity-profile head.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicdModel {
    pub config: ModelConfig,
    pub num_classes: usize,
    pub option_counts: Vec<usize>,
    pub params: ParamStore,
}

/// Everything one Explicd forward pass produces.
pub struct ExplicdOutput<'t> {
    /// `[B, S, d]`
    pub features: Var<'t>,
    /// `[B, K, S]`
    pub attention: Var<'t>,
    /// `[B, K, d]`
    pub concepts: Var<'t>,
    /// Per axis `[B, n_i]`.
    pub scores: Vec<Var<'t>>,
    /// `[B, Σ n_i]`
    pub profile: Var<'t>,
    /// `[B, N]`
    pub logits: Var<'t>,
}

/// Explicd forward pass on an already patchified batch.
pub fn explicd_forward<'t>(
    p: &Bound<'t>,
    cfg: &ModelConfig,
    anchors: &[Var<'t>],
    patches: Var<'t>,
) -> Result<ExplicdOutput<'t>, ModelError> {
    let features = encode_patches(p, cfg, patches)?;
    let enc = encode_concepts(p, features)?;
    let scores = similarity_profile(enc.concepts, anchors, cfg.similarity)?;
    let profile = concat_profile(&scores)?;
    let logits = classify(p, profile)?;
    Ok(ExplicdOutput { features, attention: enc.attention, concepts: enc.concepts, scores, profile, logits })
}

impl ExplicdModel {
    /// Freshly initialized model for `kb`; `seed` drives every initializer.
    pub fn new(config: ModelConfig, kb: &KnowledgeBase, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.dim;
        let init = Initializer { seed, std: config.init_std };
        let mut params = ParamStore::new();
        init_encoder(&mut params, &config, &init);
        init.normal(&mut params, "concept.tokens", &[kb.num_axes(), d]);
        for w in ["wq", "wk", "wv", "wo"] {
            init.normal(&mut params, &format!("concept.{w}"), &[d, d]);
        }
        init.normal(&mut params, "head.w", &[kb.num_classes(), kb.total_options()]);
        init.zeros(&mut params, "head.b", &[kb.num_classes()]);
        Ok(Self { config, num_classes: kb.num_classes(), option_counts: kb.option_counts(), params })
    }

    /// Checks that the knowledge base and anchors fit this model's layout.
    pub fn check_compatible(&self, kb: &KnowledgeBase, anchors: &AnchorSet) -> Result<(), ModelError> {
        anchors.check_matches(kb)?;
        if kb.num_classes() != self.num_classes || kb.option_counts() != self.option_counts {
            return Err(ModelError::Incompatible(format!(
                "model expects {} classes with options {:?}, knowledge base has {} classes with options {:?}",
                self.num_classes,
                self.option_counts,
                kb.num_classes(),
                kb.option_counts()
            )));
        }
        if anchors.dim() != self.config.dim {
            return Err(ModelError::Incompatible(format!(
                "anchor dimension {} differs from model dimension {}",
                anchors.dim(),
                self.config.dim
            )));
        }
        Ok(())
    }

    /// Binds parameters and anchors to `tape` and runs the forward pass.
    /// Anchors always enter as constants.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        bound: &Bound<'t>,
        anchors: &AnchorSet,
        images: &[&Tensor],
    ) -> Result<ExplicdOutput<'t>, ModelError> {
        let anchor_vars: Vec<Var<'t>> = anchors.axes().iter().map(|m| tape.constant(m.clone())).collect();
        let patches = tape.constant(patchify(images, &self.config)?);
        explicd_forward(bound, &self.config, &anchor_vars, patches)
    }
}

/// Same encoder, mean-pooled features and a direct N-way linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct BlackBoxModel {
    pub config: ModelConfig,
    pub num_classes: usize,
    pub params: ParamStore,
}

/// Mean-pooled encoder features `[B, d]`.
pub fn pooled_features<'t>(p: &Bound<'t>, cfg: &ModelConfig, patches: Var<'t>) -> Result<Var<'t>, ModelError> {
    Ok(encode_patches(p, cfg, patches)?.mean_axis(1)?)
}

pub fn blackbox_forward<'t>(p: &Bound<'t>, cfg: &ModelConfig, patches: Var<'t>) -> Result<Var<'t>, ModelError> {
    let pooled = pooled_features(p, cfg, patches)?;
    Ok(pooled.matmul_t(&p.get("head.w")?)?.add_broadcast(&p.get("head.b")?)?)
}

impl BlackBoxModel {
    pub fn new(config: ModelConfig, num_classes: usize, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if num_classes < 2 {
            return Err(ModelError::Config(format!("need at least 2 classes, got {num_classes}")));
        }
        let init = Initializer { seed, std: config.init_std };
        let mut params = ParamStore::new();
        init_encoder(&mut params, &config, &init);
        init.normal(&mut params, "head.w", &[num_classes, config.dim]);
        init.zeros(&mut params, "head.b", &[num_classes]);
        Ok(Self { config, num_classes, params })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, bound: &Bound<'t>, images: &[&Tensor]) -> Result<Var<'t>, ModelError> {
        let patches = tape.constant(patchify(images, &self.config)?);
        blackbox_forward(bound, &self.config, patches)
    }
}

/// Encoder-only parameters, as used by the zero-shot baseline.
pub fn init_encoder_params(config: &ModelConfig, seed: u64) -> Result<ParamStore, ModelError> {
    config.validate()?;
    let mut params = ParamStore::new();
    init_encoder(&mut params, config, &Initializer { seed, std: config.init_std });
    Ok(params)
}
