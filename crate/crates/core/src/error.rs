use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("generation failed: {0}")]
    Generation(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("parse error at line {line}, field `{field}`: {msg}")]
    Parse {
        line: usize,
        field: String,
        msg: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value produced by {0}")]
    Numeric(String),

    #[error("simplex iteration limit of {0} exceeded")]
    IterationLimit(usize),

    #[error("brute force refused: p = {p} exceeds the limit of {limit}")]
    TooLarge { p: usize, limit: usize },

    #[error("pool collection failed for `{0}`: no feasible solution found")]
    EmptyPool(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),

    #[error("backward already ran on this tape; reset before calling again")]
    BackwardTwice,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing pool files for: {}", .0.join(", "))]
    MissingPools(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// Short stable identifier used in single-line CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Generation(_) => "generation",
            Error::InvalidInstance(_) => "invalid_instance",
            Error::Parse { .. } => "parse",
            Error::Argument(_) => "argument",
            Error::Shape { .. } => "shape",
            Error::Numeric(_) => "numeric",
            Error::IterationLimit(_) => "iteration_limit",
            Error::TooLarge { .. } => "too_large",
            Error::EmptyPool(_) => "empty_pool",
            Error::Infeasible(_) => "infeasible",
            Error::OracleMismatch(_) => "oracle_mismatch",
            Error::BackwardTwice => "backward_twice",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::MissingPools(_) => "missing_pools",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
