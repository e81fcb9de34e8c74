use std::fmt;

use thiserror::Error;

/// One violated invariant of a parameter set, tagged with the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self { field, message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join(vs: &[Violation]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join(.0))]
    InvalidParams(Vec<Violation>),

    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    #[error("norm drift {drift:.3e} exceeds {limit:.1e} at step {step}")]
    NormDrift { step: usize, drift: f64, limit: f64 },

    #[error("degenerate mode at phi = {phi}: mixing factor undefined (rabi = 0 and (t_a - t_b) cos(phi) = 0)")]
    DegenerateMode { phi: f64 },

    #[error("travelling-wave constants violate |c1|^2 + |c2|^2 = 1/(1 + lambda^2): got {got}, want {want}")]
    Normalization { got: f64, want: f64 },

    #[error("monodromy not unitary: |M^dag M - I| = {residual:.3e}; increase steps per period")]
    Accuracy { residual: f64 },

    #[error("spectrum: {0}")]
    Spectrum(String),

    #[error("observable: {0}")]
    Observable(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } | Error::NormDrift { .. } | Error::Accuracy { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
