use thiserror::Error;

/// Errors raised by estimation, selection and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not converge on [{lower}, {upper}]: error estimate {error:e} > {tolerance:e}")]
    NonConvergence {
        lower: f64,
        upper: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("the kernel pre-estimator needs an auxiliary sample")]
    MissingAuxSample,

    #[error("marginal stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure(_) | Error::NonConvergence { .. } => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
