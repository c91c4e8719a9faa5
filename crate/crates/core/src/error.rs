use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What went wrong while talking to an external evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluatorFailure {
    Spawn,
    Timeout,
    MalformedResponse,
    InvalidProbabilities,
    DuplicateId,
    UnknownId,
    ReportedError,
    ChildExited,
    Io,
}

impl std::fmt::Display for EvaluatorFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Spawn => "spawn failed",
            Self::Timeout => "timeout",
            Self::MalformedResponse => "malformed response",
            Self::InvalidProbabilities => "invalid probability vector",
            Self::DuplicateId => "duplicate id",
            Self::UnknownId => "unknown id",
            Self::ReportedError => "evaluator reported an error",
            Self::ChildExited => "child exited before completion",
            Self::Io => "pipe i/o error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("value {value} of `{name}` is outside [{lower}, {upper}]")]
    OutOfLimits {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("{0} is outside the polynomial domain [-1, 1]")]
    Domain(f64),

    #[error("at least one truncation rule (total order or per-dimension orders) is required")]
    EmptyTruncation,

    #[error("design matrix is identically zero")]
    ZeroDesign,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("inverse Beta CDF did not converge for u={u}, p={p}, q={q}")]
    NonConvergence { u: f64, p: f64, q: f64 },

    #[error("surrogate has zero variance; Sobol indices are undefined")]
    DegenerateVariance,

    #[error("relative error undefined: all reference values are zero")]
    ZeroReference,

    #[error("evaluator error ({kind}){}: {message}", at_index(.index))]
    Evaluator {
        index: Option<usize>,
        kind: EvaluatorFailure,
        message: String,
    },

    #[error("missing value for parameter `{0}`")]
    MissingParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Index of the offending request for evaluator failures.
    pub fn evaluator_index(&self) -> Option<usize> {
        match self {
            Self::Evaluator { index, .. } => *index,
            _ => None,
        }
    }
}

fn at_index(index: &Option<usize>) -> String {
    index.map(|i| format!(" at index {i}")).unwrap_or_default()
}
