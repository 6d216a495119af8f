//! Whole-model gradient check on a deliberately tiny configuration.

use super::{explicd_forward, patchify, total_loss, Bound, ExplicdModel, ModelConfig, ModelError};
use crate::autodiff::{finite_diff_check, GradCheckReport, Tensor};
use crate::knowledge::{AnchorSet, CriteriaAxis, KnowledgeBase};
use crate::rng::{labeled_seed, normal_tensor};

/// Two classes, two axes of two options each.
pub fn micro_knowledge_base() -> KnowledgeBase {
    let axis = |name: &str, a: &str, b: &str| CriteriaAxis {
        name: name.into(),
        options: vec![a.into(), b.into()],
        class_to_option: vec![0, 1],
    };
    KnowledgeBase::new(
        vec!["first".into(), "second".into()],
        vec![axis("color", "pale region", "dark region"), axis("shape", "round outline", "angular outline")],
    )
    .expect("micro knowledge base is valid")
}

/// `d = 8`, one block, two heads, `3×8×8` images in `4×4` patches (`S = 4`).
/// Weights are initialized large enough that every nonlinearity is exercised.
pub fn micro_config() -> ModelConfig {
    ModelConfig {
        channels: 3,
        height: 8,
        width: 8,
        dim: 8,
        patch: 4,
        depth: 1,
        heads: 2,
        mlp_ratio: 2,
        init_std: 0.5,
        ..ModelConfig::default()
    }
}

/// Compares reverse-mode gradients of the full training loss with central
/// finite differences for every parameter tensor of the micro-model.
pub fn micro_model_check(step: f64, tol: f64, seed: u64) -> Result<GradCheckReport, ModelError> {
    let kb = micro_knowledge_base();
    let cfg = micro_config();
    let anchors = AnchorSet::embed(&kb, cfg.dim)?;
    let mut model = ExplicdModel::new(cfg.clone(), &kb, seed)?;
    // Non-zero biases and gains so their gradients are generic too.
    for (name, t) in model.params.iter_mut() {
        if name.ends_with(".b") || name.ends_with(".g") || name.contains(".attn.b") || name.contains(".mlp.b") {
            let noise = normal_tensor(t.shape(), 0.3, labeled_seed(seed ^ 0x5eed, name));
            t.data_mut().iter_mut().zip(noise.data()).for_each(|(v, n)| *v += n);
        }
    }
    let images: Vec<Tensor> = (0..2u64).map(|i| normal_tensor(&cfg.image_shape(), 0.5, labeled_seed(seed, &format!("image{i}")))).collect();
    let patches = patchify(&images.iter().collect::<Vec<_>>(), &cfg)?;
    let labels = vec![0, 1];
    let positives: Vec<Vec<usize>> = kb.axes().iter().map(|a| labels.iter().map(|&c| a.class_to_option[c]).collect()).collect();

    let names: Vec<String> = model.params.names().cloned().collect();
    let params: Vec<(String, Tensor)> = model.params.iter().map(|(n, t)| (n.clone(), t.clone())).collect();
    finite_diff_check(
        |tape, vars| {
            let bound = Bound::from_vars(names.iter().cloned().zip(vars.iter().copied()));
            let anchor_vars: Vec<_> = anchors.axes().iter().map(|m| tape.constant(m.clone())).collect();
            let out = explicd_forward(&bound, &cfg, &anchor_vars, tape.constant(patches.clone()))?;
            Ok(total_loss(out.logits, &labels, &out.scores, &positives, cfg.tau, cfg.lambda_anchor)?.total)
        },
        &params,
        step,
        tol,
    )
}
