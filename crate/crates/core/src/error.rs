use thiserror::Error;

use crate::field::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse `{key}`: {source}")]
    Parse {
        key: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid input `{key}`: {message}")]
    Input { key: String, message: String },
    #[error("precondition `{condition}` violated: {message}")]
    Precondition {
        condition: &'static str,
        message: String,
    },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("defective pencil: {0}")]
    Defective(String),
    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },
    #[error("characteristic through ({x}, {y}) leaves the region before reaching the reference line")]
    Escape { x: f64, y: f64 },
    #[error("map residual too large: {0}")]
    BadMap(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn input(key: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Input {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_precondition(&self) -> bool {
        matches!(self.root(), Error::Precondition { .. })
    }
}
