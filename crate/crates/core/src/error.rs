//! Error type shared by the core modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("system is not dynamically defined: {0}")]
    InvalidSystem(String),

    #[error("degenerate gap between cylinders {left:?} and {right:?} (length {length:e})")]
    DegenerateGap {
        left: String,
        right: String,
        length: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient precision: {what} at h={h} needs a significand of at least {needed_bits} bits (working width {working_bits})")]
    PrecisionRefusal {
        what: String,
        h: f64,
        needed_bits: u32,
        working_bits: u32,
    },

    #[error("pipeline stage '{stage}' failed: {message}")]
    Stage { stage: String, message: String },

    #[error("Newton iteration failed: {0}")]
    NewtonFailure(String),

    #[error("no homoclinic intersections found in the working window ({0})")]
    NoIntersections(String),

    #[error("scan budget exhausted: {undecided} of {total} intervals undecided")]
    ScanBudget { undecided: usize, total: usize },
}

impl CoreError {
    pub fn stage(stage: &str, message: impl Into<String>) -> Self {
        CoreError::Stage {
            stage: stage.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
