use clap::Args;
use explicd_core::autodiff::set_corrupt_gelu_backward;
use explicd_core::model::micro_model_check;
use serde_json::json;

use crate::error::{invalid, GradCheckFailed};
use crate::to_json;

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Largest allowed relative error per parameter group.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Test hook: deliberately break the GELU backward rule.
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

struct ResetHook;

impl Drop for ResetHook {
    fn drop(&mut self) {
        set_corrupt_gelu_backward(false);
    }
}

/// Prints the per-group report; fails with the worst offender when any
/// group is over tolerance.
pub fn gradcheck(a: GradCheckArgs) -> anyhow::Result<String> {
    if !(a.tol > 0.0) || !(a.step > 0.0) {
        return Err(invalid(format!("--tol and --step must be positive, got {} and {}", a.tol, a.step)));
    }
    let _reset = ResetHook;
    set_corrupt_gelu_backward(a.corrupt_backward);
    let report = micro_model_check(a.step, a.tol, a.seed)?;
    let params: Vec<_> = report
        .params
        .iter()
        .map(|p| json!({ "name": p.name, "rel_error": p.rel_error, "max_abs_error": p.max_abs_error, "passed": p.rel_error <= a.tol }))
        .collect();
    let text = to_json(&json!({ "passed": report.passed(), "tol": a.tol, "step": a.step, "params": params }));
    if report.passed() {
        return Ok(text);
    }
    let worst = report.worst().expect("a failing report has parameters");
    Err(GradCheckFailed { report: text, param: worst.name.clone(), rel_error: worst.rel_error, tol: a.tol }.into())
}
