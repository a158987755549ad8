use thiserror::Error;

use crate::blockforest::BlockId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("2:1 balance violated between {0} and {1}")]
    BalanceViolation(BlockId, BlockId),

    #[error("block {0} is not a leaf of the forest")]
    UnknownBlock(BlockId),

    #[error("blocks need at least 3 cells per dimension, got {0}")]
    TooFewCells(usize),

    #[error("domain is empty: {0}")]
    EmptyDomain(String),

    #[error("malformed refinement region: {0}")]
    MalformedRegion(String),

    #[error("invalid forest: {0}")]
    InvalidForest(String),

    #[error("rank count must be at least 1")]
    InvalidRankCount,

    #[error("extent {extent} is not divisible by the refinement ratio {ratio}")]
    NotDivisible { extent: usize, ratio: usize },

    #[error("segment index {index} out of range for {count} segments")]
    InvalidSegment { index: usize, count: usize },

    #[error("interpolation positions must be pairwise distinct and non-empty")]
    DegeneratePositions,

    #[error("expected {expected} values, got {got}")]
    WrongValueCount { expected: usize, got: usize },

    #[error("unsupported refinement ratio {0}, only 2 is supported")]
    UnsupportedRatio(usize),

    #[error("no field supplied for leaf {0}")]
    MissingField(BlockId),

    #[error("multigrid level {0} is not allocated")]
    LevelNotAllocated(usize),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("solver diverged at cycle {cycle}: residual {residual:e} exceeds 10x the initial {initial:e}")]
    Divergence {
        cycle: usize,
        residual: f64,
        initial: f64,
    },

    #[error("reference error norm is zero")]
    ZeroReferenceError,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 2,
            Error::Protocol(_) | Error::BalanceViolation(..) | Error::MissingField(_) => 3,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
