use thiserror::Error;

/// Errors raised by spaces, solvers and the barycenter engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("marginal mismatch: {0}")]
    MarginalMismatch(String),

    #[error("graph is disconnected: node {from} cannot reach node {to}")]
    Disconnected { from: usize, to: usize },

    #[error("gauge is identically zero, cannot normalize")]
    DegenerateGauge,

    #[error("solver did not converge after {iterations} iterations (marginal violation {violation:.3e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::Solver {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping solver context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Solver { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
