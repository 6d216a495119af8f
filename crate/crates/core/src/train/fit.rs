use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_xoshiro::SplitMix64;

use super::eval::{evaluate, evaluate_blackbox, EvalMetrics};
use super::metrics::Metrics;
use super::optim::{adamw_step, OptimizerState, TrainConfig};
use super::TrainError;
use crate::autodiff::{Tape, Tensor};
use crate::knowledge::{AnchorSet, KnowledgeBase};
use crate::model::{blackbox_forward, explicd_forward, patchify, total_loss, BlackBoxModel, Bound, ExplicdModel, ModelError, ParamStore};
use crate::rng::{labeled_seed, stream};
use crate::synthdata::SyntheticSample;

/// Loss of one optimization step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLoss {
    pub total: f64,
    pub ce: f64,
    pub anchor: f64,
}

/// What a training run leaves behind besides the updated model.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub losses: Vec<StepLoss>,
    pub metrics: Vec<Metrics>,
    pub optimizer: OptimizerState,
}

/// Draws batches from per-epoch permutations of the training set. The
/// permutation stream is seeded separately from initialization.
struct Batches {
    rng: SplitMix64,
    order: Vec<usize>,
    pos: usize,
    size: usize,
}

impl Batches {
    fn new(len: usize, size: usize, seed: u64) -> Self {
        let mut rng = stream(labeled_seed(seed, "shuffle"));
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self { rng, order, pos: 0, size: size.min(len) }
    }

    fn next(&mut self) -> &[usize] {
        if self.pos + self.size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += self.size;
        &self.order[self.pos - self.size..self.pos]
    }
}

/// Running means of the step losses between two metric records.
#[derive(Default)]
struct LossWindow {
    sum: [f64; 3],
    count: usize,
}

impl LossWindow {
    fn push(&mut self, l: &StepLoss) {
        self.sum[0] += l.total;
        self.sum[1] += l.ce;
        self.sum[2] += l.anchor;
        self.count += 1;
    }

    fn take(&mut self) -> [f64; 3] {
        let n = self.count.max(1) as f64;
        let means = self.sum.map(|s| s / n);
        *self = Self::default();
        means
    }
}

type Grads = BTreeMap<String, Tensor>;

/// Shared optimization loop. `step_fn` returns the batch loss and, when that
/// loss is finite, the gradient of every parameter; `eval_fn` measures the
/// current parameters on the test set.
fn run<S, E>(params: &mut ParamStore, train: &[SyntheticSample], cfg: &TrainConfig, mut step_fn: S, mut eval_fn: E) -> Result<TrainReport, TrainError>
where
    S: FnMut(&ParamStore, &[&SyntheticSample]) -> Result<(StepLoss, Grads), TrainError>,
    E: FnMut(&ParamStore) -> Result<Option<EvalMetrics>, TrainError>,
{
    cfg.validate()?;
    let mut optimizer = OptimizerState::new(params);
    let mut losses = Vec::with_capacity(cfg.max_steps);
    let mut metrics = Vec::new();
    if cfg.max_steps == 0 {
        return Ok(TrainReport { losses, metrics, optimizer });
    }
    if train.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    let started = Instant::now();
    let mut batches = Batches::new(train.len(), cfg.batch_size, cfg.seed);
    let mut window = LossWindow::default();
    for step in 1..=cfg.max_steps {
        let batch: Vec<&SyntheticSample> = batches.next().iter().map(|&i| &train[i]).collect();
        let (loss, grads) = step_fn(params, &batch)?;
        if ![loss.total, loss.ce, loss.anchor].iter().all(|v| v.is_finite()) {
            return Err(TrainError::NonFiniteLoss { step, total: loss.total, ce: loss.ce, anchor: loss.anchor });
        }
        adamw_step(params, &grads, &mut optimizer, cfg)?;
        losses.push(loss);
        window.push(&loss);
        if step == cfg.max_steps || (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) {
            let [total, ce, anchor] = window.take();
            let m = Metrics::new(step, [total, ce, anchor], eval_fn(params)?, started.elapsed().as_secs_f64());
            log::info!("step {step}: loss {total:.4} (ce {ce:.4}, anchor {anchor:.4})");
            metrics.push(m);
        }
    }
    Ok(TrainReport { losses, metrics, optimizer })
}

fn batch_images<'a>(batch: &[&'a SyntheticSample]) -> Vec<&'a Tensor> {
    batch.iter().map(|s| &s.image).collect()
}

/// Reverse-mode gradients of every bound parameter, or none when the loss
/// is already non-finite (the loop aborts on it).
fn gradients(tape: &Tape, bound: &Bound<'_>, loss: &StepLoss, total: crate::autodiff::Var<'_>) -> Result<Grads, TrainError> {
    if !loss.total.is_finite() {
        return Ok(Grads::new());
    }
    let grads = tape.backward(total).map_err(ModelError::from)?;
    Ok(bound.iter().map(|(name, var)| (name.clone(), grads.wrt(var))).collect())
}

/// Trains the encoder, concept module and head on the joint objective.
/// Anchors enter every forward pass as constants and are never updated.
pub fn train_explicd(
    model: &mut ExplicdModel,
    anchors: &AnchorSet,
    kb: &KnowledgeBase,
    train: &[SyntheticSample],
    test: &[SyntheticSample],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    model.check_compatible(kb, anchors)?;
    let template = model.clone();
    let config = &template.config;
    let step_fn = |params: &ParamStore, batch: &[&SyntheticSample]| {
        let tape = Tape::new();
        let bound = params.bind(&tape, true);
        let anchor_vars: Vec<_> = anchors.axes().iter().map(|m| tape.constant(m.clone())).collect();
        let patches = tape.constant(patchify(&batch_images(batch), config)?);
        let out = explicd_forward(&bound, config, &anchor_vars, patches)?;
        let labels: Vec<usize> = batch.iter().map(|s| s.class).collect();
        let positives: Vec<Vec<usize>> = kb.axes().iter().map(|axis| labels.iter().map(|&c| axis.class_to_option[c]).collect()).collect();
        let parts = total_loss(out.logits, &labels, &out.scores, &positives, config.tau, config.lambda_anchor)?;
        let loss = StepLoss { total: parts.total.item()?, ce: parts.ce.item()?, anchor: parts.anchor_value() };
        Ok((loss, gradients(&tape, &bound, &loss, parts.total)?))
    };
    let eval_fn = |params: &ParamStore| {
        if test.is_empty() {
            return Ok(None);
        }
        let snapshot = ExplicdModel { params: params.clone(), ..template.clone() };
        evaluate(&snapshot, anchors, kb, test).map(Some)
    };
    run(&mut model.params, train, cfg, step_fn, eval_fn)
}

/// Trains the black-box baseline with cross-entropy only.
pub fn train_blackbox(model: &mut BlackBoxModel, train: &[SyntheticSample], test: &[SyntheticSample], cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    let template = model.clone();
    let config = &template.config;
    let step_fn = |params: &ParamStore, batch: &[&SyntheticSample]| {
        let tape = Tape::new();
        let bound = params.bind(&tape, true);
        let patches = tape.constant(patchify(&batch_images(batch), config)?);
        let logits = blackbox_forward(&bound, config, patches)?;
        let labels: Vec<usize> = batch.iter().map(|s| s.class).collect();
        if let Some(&bad) = labels.iter().find(|&&l| l >= template.num_classes) {
            return Err(ModelError::Label { what: "class", index: bad, count: template.num_classes }.into());
        }
        let ce = logits.cross_entropy(&labels).map_err(ModelError::from)?;
        let value = ce.item()?;
        let loss = StepLoss { total: value, ce: value, anchor: 0.0 };
        Ok((loss, gradients(&tape, &bound, &loss, ce)?))
    };
    let eval_fn = |params: &ParamStore| {
        if test.is_empty() {
            return Ok(None);
        }
        let snapshot = BlackBoxModel { params: params.clone(), ..template.clone() };
        evaluate_blackbox(&snapshot, test).map(Some)
    };
    run(&mut model.params, train, cfg, step_fn, eval_fn)
}
