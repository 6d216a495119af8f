use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::{Tape, Tensor};
use crate::knowledge::{AnchorSet, KnowledgeBase};
use crate::model::{argmax, patchify, pooled_features, BlackBoxModel, ExplicdModel, ModelConfig, ModelError, ParamStore};
use crate::synthdata::SyntheticSample;

/// Samples per forward pass during evaluation.
const EVAL_BATCH: usize = 64;

/// Test-set measurements. Alignment fields are absent for models without
/// concept tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_alignment: Option<f64>,
}

/// Worker count for evaluation: `EXPLICD_THREADS` if set to a positive
/// integer, otherwise rayon's default.
pub fn eval_threads() -> usize {
    std::env::var("EXPLICD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Runs `f` on every chunk of `samples` in parallel and concatenates the
/// results in input order.
fn map_chunks<T: Send>(
    samples: &[SyntheticSample],
    f: impl Fn(&[SyntheticSample]) -> Result<Vec<T>, ModelError> + Sync,
) -> Result<Vec<T>, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyEval);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(eval_threads())
        .build()
        .map_err(|e| TrainError::Config(format!("evaluation thread pool: {e}")))?;
    let chunks: Vec<Vec<T>> = pool.install(|| samples.par_chunks(EVAL_BATCH).map(&f).collect::<Result<_, _>>())?;
    Ok(chunks.into_iter().flatten().collect())
}

fn images(samples: &[SyntheticSample]) -> Vec<&Tensor> {
    samples.iter().map(|s| &s.image).collect()
}

fn fraction(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

/// Predicted class and per-axis predicted option for each sample.
pub fn predict_explicd(
    model: &ExplicdModel,
    anchors: &AnchorSet,
    samples: &[SyntheticSample],
) -> Result<Vec<(usize, Vec<usize>)>, TrainError> {
    map_chunks(samples, |chunk| {
        let tape = Tape::new();
        let bound = model.params.bind(&tape, false);
        let out = model.forward(&tape, &bound, anchors, &images(chunk))?;
        let logits = out.logits.to_tensor();
        let scores: Vec<Tensor> = out.scores.iter().map(|s| s.to_tensor()).collect();
        Ok((0..chunk.len())
            .map(|b| {
                let options = scores.iter().map(|s| argmax(s.row(b))).collect();
                (argmax(logits.row(b)), options)
            })
            .collect())
    })
}

/// Classification accuracy plus per-axis and macro concept alignment: the
/// fraction of samples whose highest-scoring option is the ground truth.
pub fn evaluate(
    model: &ExplicdModel,
    anchors: &AnchorSet,
    kb: &KnowledgeBase,
    samples: &[SyntheticSample],
) -> Result<EvalMetrics, TrainError> {
    model.check_compatible(kb, anchors)?;
    let predictions = predict_explicd(model, anchors, samples)?;
    let n = samples.len();
    let correct = predictions.iter().zip(samples).filter(|((c, _), s)| *c == s.class).count();
    let alignment: Vec<f64> = (0..kb.num_axes())
        .map(|i| fraction(predictions.iter().zip(samples).filter(|((_, o), s)| o[i] == s.axis_labels[i]).count(), n))
        .collect();
    let macro_alignment = alignment.iter().sum::<f64>() / alignment.len() as f64;
    Ok(EvalMetrics { accuracy: fraction(correct, n), alignment: Some(alignment), macro_alignment: Some(macro_alignment) })
}

pub fn evaluate_blackbox(model: &BlackBoxModel, samples: &[SyntheticSample]) -> Result<EvalMetrics, TrainError> {
    let predictions = map_chunks(samples, |chunk| {
        let tape = Tape::new();
        let bound = model.params.bind(&tape, false);
        let logits = model.forward(&tape, &bound, &images(chunk))?.to_tensor();
        Ok((0..chunk.len()).map(|b| argmax(logits.row(b))).collect())
    })?;
    let correct = predictions.iter().zip(samples).filter(|(p, s)| **p == s.class).count();
    Ok(EvalMetrics { accuracy: fraction(correct, samples.len()), alignment: None, macro_alignment: None })
}

/// Zero-shot classification with an untrained encoder: the mean-pooled,
/// L2-normalized image feature is compared by cosine with one anchor row per
/// class and the best-matching class is predicted.
pub fn zero_shot_predict(
    encoder: &ParamStore,
    config: &ModelConfig,
    class_anchors: &Tensor,
    samples: &[SyntheticSample],
) -> Result<Vec<usize>, TrainError> {
    if class_anchors.shape().len() != 2 || class_anchors.last_dim() != config.dim {
        return Err(ModelError::Shape {
            what: "class anchors",
            expected: vec![class_anchors.shape()[0], config.dim],
            found: class_anchors.shape().to_vec(),
        }
        .into());
    }
    map_chunks(samples, |chunk| {
        let tape = Tape::new();
        let bound = encoder.bind(&tape, false);
        let patches = tape.constant(patchify(&images(chunk), config)?);
        let pooled = pooled_features(&bound, config, patches)?.l2_normalize();
        let anchors = tape.constant(class_anchors.clone()).l2_normalize();
        let sims = pooled.matmul_t(&anchors)?.to_tensor();
        Ok((0..chunk.len()).map(|b| argmax(sims.row(b))).collect())
    })
}

/// Zero-shot accuracy against the class-level anchors of `kb`.
pub fn zero_shot_eval(
    encoder: &ParamStore,
    config: &ModelConfig,
    kb: &KnowledgeBase,
    samples: &[SyntheticSample],
) -> Result<f64, TrainError> {
    let anchors = AnchorSet::class_anchors(kb, config.dim).map_err(ModelError::from)?;
    let predictions = zero_shot_predict(encoder, config, &anchors, samples)?;
    let correct = predictions.iter().zip(samples).filter(|(p, s)| **p == s.class).count();
    Ok(fraction(correct, samples.len()))
}
