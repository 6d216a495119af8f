use std::collections::BTreeMap;

use super::*;
use crate::autodiff::Tensor;
use crate::knowledge::{AnchorSet, KnowledgeBase};
use crate::model::{init_encoder_params, BlackBoxModel, ExplicdModel, ModelConfig, ParamStore};
use crate::synthdata::{gen_dataset, kb_from_spec, Dataset, SynthSpec};

fn small_config() -> ModelConfig {
    ModelConfig { dim: 16, heads: 2, depth: 1, ..ModelConfig::default() }
}

fn setup(n_per_class: usize) -> (KnowledgeBase, AnchorSet, Dataset) {
    let spec = SynthSpec::with_seed(1);
    let kb = kb_from_spec(&spec).unwrap();
    let anchors = AnchorSet::embed(&kb, small_config().dim).unwrap();
    (kb, anchors, gen_dataset(&spec, n_per_class, 1).unwrap())
}

fn single(name: &str, value: f64) -> ParamStore {
    let mut p = ParamStore::new();
    p.insert(name, Tensor::scalar(value));
    p
}

fn grad(name: &str, value: f64) -> BTreeMap<String, Tensor> {
    BTreeMap::from([(name.to_string(), Tensor::scalar(value))])
}

#[test]
fn zero_gradient_without_decay_leaves_parameters() {
    let mut p = single("w", 1.5);
    let mut state = OptimizerState::new(&p);
    let cfg = TrainConfig { weight_decay: 0.0, lr: 0.1, ..TrainConfig::default() };
    for _ in 0..3 {
        adamw_step(&mut p, &grad("w", 0.0), &mut state, &cfg).unwrap();
    }
    assert_eq!(val(&p), 1.5);
}

#[test]
fn zero_gradient_applies_decoupled_decay() {
    let mut p = single("w", 2.0);
    let mut state = OptimizerState::new(&p);
    let cfg = TrainConfig { weight_decay: 0.01, lr: 0.1, ..TrainConfig::default() };
    adamw_step(&mut p, &grad("w", 0.0), &mut state, &cfg).unwrap();
    assert!((val(&p) - 2.0 * (1.0 - 0.001)).abs() < 1e-15);
}

#[test]
fn two_steps_follow_moment_recursion() {
    let (lr, b1, b2, eps, wd) = (0.05, 0.9, 0.999, 1e-8, 0.01);
    let cfg = TrainConfig { lr, beta1: b1, beta2: b2, eps, weight_decay: wd, ..TrainConfig::default() };
    let mut p = single("w", 0.7);
    let mut state = OptimizerState::new(&p);
    let (mut theta, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
    for t in 1..=2 {
        adamw_step(&mut p, &grad("w", 1.0), &mut state, &cfg).unwrap();
        theta *= 1.0 - lr * wd;
        m = b1 * m + (1.0 - b1);
        v = b2 * v + (1.0 - b2);
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        theta -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    assert!((val(&p) - theta).abs() < 1e-15);
    assert_eq!(state.step, 2);
    // With a constant gradient both bias-corrected moments equal 1.
    assert!((0.7 * (1.0 - lr * wd) * (1.0 - lr * wd) - 2.0 * lr / (1.0 + eps) - theta).abs() < 1e-3);
}

#[test]
fn nan_gradient_aborts() {
    let mut p = single("w", 1.0);
    let mut state = OptimizerState::new(&p);
    let err = adamw_step(&mut p, &grad("w", f64::NAN), &mut state, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteGradient { .. }));
    assert_eq!(val(&p), 1.0);
}

#[test]
fn config_validation() {
    assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
}

#[test]
fn zero_steps_leave_model_untouched() {
    let (kb, anchors, data) = setup(5);
    let mut model = ExplicdModel::new(small_config(), &kb, 3).unwrap();
    let before = model.clone();
    let cfg = TrainConfig { max_steps: 0, ..TrainConfig::default() };
    let report = train_explicd(&mut model, &anchors, &kb, &data.train, &data.test, &cfg).unwrap();
    assert!(model.params.bit_eq(&before.params));
    assert!(report.losses.is_empty() && report.metrics.is_empty());

    let mut bb = BlackBoxModel::new(small_config(), 8, 3).unwrap();
    let before = bb.clone();
    train_blackbox(&mut bb, &data.train, &data.test, &cfg).unwrap();
    assert!(bb.params.bit_eq(&before.params));
}

#[test]
fn training_reduces_loss_and_keeps_anchors_frozen() {
    let (kb, anchors, data) = setup(20);
    let frozen = anchors.to_text();
    let mut model = ExplicdModel::new(small_config(), &kb, 4).unwrap();
    let cfg = TrainConfig { max_steps: 200, eval_interval: 100, lr: 1e-3, seed: 4, ..TrainConfig::default() };
    let report = train_explicd(&mut model, &anchors, &kb, &data.train, &data.test, &cfg).unwrap();
    let mean = |s: &[StepLoss]| s.iter().map(|l| l.total).sum::<f64>() / s.len() as f64;
    assert!(mean(&report.losses[180..]) < mean(&report.losses[..20]));
    assert_eq!(anchors.to_text(), frozen);
    // Buffers exist for exactly the model's own tensors.
    assert!(report.optimizer.buffer_names().eq(model.params.names()));
    assert_eq!(report.metrics.len(), 2);
    assert_eq!(report.metrics[1].step, 200);
}

#[test]
fn training_is_reproducible() {
    let (kb, anchors, data) = setup(5);
    let cfg = TrainConfig { max_steps: 15, eval_interval: 5, batch_size: 8, seed: 9, ..TrainConfig::default() };
    let run = || {
        let mut model = ExplicdModel::new(small_config(), &kb, 9).unwrap();
        let report = train_explicd(&mut model, &anchors, &kb, &data.train, &data.test, &cfg).unwrap();
        (model, metrics_jsonl(&report.metrics))
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert!(a.params.bit_eq(&b.params));
    assert_eq!(ma, mb);
    assert!(!ma.contains("wall_time"));
}

#[test]
fn zero_lambda_logs_exactly_zero_anchor_loss() {
    let (kb, anchors, data) = setup(5);
    let cfg_model = ModelConfig { lambda_anchor: 0.0, ..small_config() };
    let mut model = ExplicdModel::new(cfg_model, &kb, 2).unwrap();
    let cfg = TrainConfig { max_steps: 10, eval_interval: 5, batch_size: 8, ..TrainConfig::default() };
    let report = train_explicd(&mut model, &anchors, &kb, &data.train, &data.test, &cfg).unwrap();
    assert!(report.losses.iter().all(|l| l.anchor == 0.0 && l.total == l.ce));
    assert!(report.metrics.iter().all(|m| m.train_anchor == 0.0));
}

#[test]
fn non_finite_loss_aborts_with_diagnostic() {
    let (kb, anchors, data) = setup(5);
    let mut model = ExplicdModel::new(ModelConfig { tau: 1e-320, ..small_config() }, &kb, 2).unwrap();
    let cfg = TrainConfig { max_steps: 5, batch_size: 8, ..TrainConfig::default() };
    let err = train_explicd(&mut model, &anchors, &kb, &data.train, &data.test, &cfg).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteLoss { step: 1, .. }), "{err}");
}

#[test]
fn constant_class_model_scores_chance() {
    let (kb, anchors, data) = setup(10);
    let mut model = ExplicdModel::new(small_config(), &kb, 5).unwrap();
    *model.params.get_mut("head.w").unwrap() = Tensor::zeros(&[8, 10]);
    let mut bias = Tensor::zeros(&[8]);
    bias.data_mut()[0] = 1.0;
    *model.params.get_mut("head.b").unwrap() = bias;
    let m = evaluate(&model, &anchors, &kb, &data.test).unwrap();
    assert_eq!(m.accuracy, 0.125);
    assert_eq!(m.alignment.as_ref().unwrap().len(), 4);
    let again = evaluate(&model, &anchors, &kb, &data.test).unwrap();
    assert_eq!(m, again);
}

#[test]
fn untrained_alignment_is_near_chance() {
    let (kb, anchors, data) = setup(10);
    let samples: Vec<_> = data.train.iter().chain(&data.test).cloned().collect();
    let seeds = 12;
    let mean: f64 = (0..seeds)
        .map(|s| {
            let model = ExplicdModel::new(small_config(), &kb, 100 + s).unwrap();
            evaluate(&model, &anchors, &kb, &samples).unwrap().alignment.unwrap()[1]
        })
        .sum::<f64>()
        / seeds as f64;
    assert!((mean - 1.0 / 3.0).abs() < 0.12, "mean shape alignment {mean}");
}

#[test]
fn evaluation_rejects_empty_input() {
    let (kb, anchors, _) = setup(2);
    let model = ExplicdModel::new(small_config(), &kb, 5).unwrap();
    assert!(matches!(evaluate(&model, &anchors, &kb, &[]), Err(TrainError::EmptyEval)));
}

#[test]
fn blackbox_reports_no_alignment() {
    let (_, _, data) = setup(3);
    let model = BlackBoxModel::new(small_config(), 8, 1).unwrap();
    let m = evaluate_blackbox(&model, &data.test).unwrap();
    assert!(m.alignment.is_none() && m.macro_alignment.is_none());
    assert!(!serde_json::to_string(&m).unwrap().contains("alignment"));
}

#[test]
fn zero_shot_is_deterministic() {
    let (kb, _, data) = setup(10);
    let cfg = small_config();
    let encoder = init_encoder_params(&cfg, 8).unwrap();
    let a = zero_shot_eval(&encoder, &cfg, &kb, &data.test).unwrap();
    let b = zero_shot_eval(&encoder, &cfg, &kb, &data.test).unwrap();
    assert_eq!(a, b);
    let one_hot = Tensor::from_fn(&[8, cfg.dim], |i| if i % cfg.dim == i / cfg.dim { 1.0 } else { 0.0 });
    let p = zero_shot_predict(&encoder, &cfg, &one_hot, &data.test).unwrap();
    assert!(p.iter().all(|&c| c < 8));
    assert!(zero_shot_predict(&encoder, &cfg, &Tensor::zeros(&[8, 3]), &data.test).is_err());
}

fn val(p: &ParamStore) -> f64 {
    p.get("w").unwrap().item().unwrap()
}
