use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite input value: {0}")]
    NumericInput(String),
    #[error("weight function outside [0, 1]: {value} at {location}")]
    InvalidWeight { value: f64, location: String },
    #[error("linear solver failed (relative residual {residual:e}): {reason}")]
    SolverFailure { residual: f64, reason: String },
    #[error("time step {step} failed: {source}")]
    StepFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("sample {sample} failed: {source}")]
    SampleFailure {
        sample: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors raised by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SolverFailure { .. } | Error::NumericInput(_) => true,
            Error::StepFailure { source, .. } | Error::SampleFailure { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}
