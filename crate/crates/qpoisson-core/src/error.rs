use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or unreadable configuration document.
    #[error("config error: {0}")]
    Config(String),
    /// Model data violates a structural invariant.
    #[error("model error: {0}")]
    Model(String),
    /// Invalid argument passed to an operation.
    #[error("argument error: {0}")]
    Argument(String),
    /// A scattering matrix could not be inverted reliably.
    #[error("scattering error in bin {bin}: {reason}")]
    Scattering { bin: usize, reason: String },
    /// The Lippmann-Schwinger reference solve failed.
    #[error("oracle error: {0}")]
    Oracle(String),
    /// A configured work budget would be exceeded.
    #[error("resource budget exceeded: {what} needs {required}, budget is {budget}")]
    Resource {
        what: String,
        required: u128,
        budget: u128,
    },
    /// Collision-rate calibration did not reproduce the generator.
    #[error("calibration residual {residual:e} exceeds threshold {threshold:e}")]
    Calibration { residual: f64, threshold: f64 },
    /// Generic numerical failure.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    /// Stable machine-readable tag for structured reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Model(_) => "model",
            Error::Argument(_) => "argument",
            Error::Scattering { .. } => "scattering",
            Error::Oracle(_) => "oracle",
            Error::Resource { .. } => "resource",
            Error::Calibration { .. } => "calibration",
            Error::Numerical(_) => "numerical",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
