use explicd_core::knowledge::KnowledgeError;
use explicd_core::model::ModelError;
use explicd_core::synthdata::SynthError;
use explicd_core::train::TrainError;

/// Bad flags, bad input files, or inputs that do not belong together.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

/// Gradient check with at least one parameter group over tolerance.
#[derive(Debug, thiserror::Error)]
#[error("gradient check failed: worst parameter `{param}` has relative error {rel_error:.3e} > {tol:.1e}")]
pub struct GradCheckFailed {
    /// The full per-group report, as printed on success.
    pub report: String,
    pub param: String,
    pub rel_error: f64,
    pub tol: f64,
}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_INVALID: u8 = 2;

/// Exit code for a failed command: 2 for validation and usage errors, 1 for
/// I/O and numeric failures.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<clap::Error>() {
            return EXIT_INVALID;
        }
        if let Some(e) = cause.downcast_ref::<KnowledgeError>() {
            return knowledge_code(e);
        }
        if let Some(e) = cause.downcast_ref::<SynthError>() {
            return synth_code(e);
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return model_code(e);
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return train_code(e);
        }
    }
    EXIT_RUNTIME
}

fn knowledge_code(e: &KnowledgeError) -> u8 {
    match e {
        KnowledgeError::Io { .. } => EXIT_RUNTIME,
        _ => EXIT_INVALID,
    }
}

fn synth_code(e: &SynthError) -> u8 {
    match e {
        SynthError::Io { .. } => EXIT_RUNTIME,
        SynthError::Knowledge(k) => knowledge_code(k),
        SynthError::InvalidSpec(_) | SynthError::Image { .. } | SynthError::Manifest { .. } => EXIT_INVALID,
    }
}

fn model_code(e: &ModelError) -> u8 {
    match e {
        ModelError::Io { .. } | ModelError::Autodiff(_) => EXIT_RUNTIME,
        ModelError::Knowledge(k) => knowledge_code(k),
        _ => EXIT_INVALID,
    }
}

fn train_code(e: &TrainError) -> u8 {
    match e {
        TrainError::Config(_) | TrainError::EmptyEval => EXIT_INVALID,
        TrainError::Model(m) => model_code(m),
        TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient { .. } | TrainError::Io { .. } => EXIT_RUNTIME,
    }
}
