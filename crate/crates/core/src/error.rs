use thiserror::Error;

use crate::backend::BackendId;
use crate::shape::{DType, Shape};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown backend: {0}")]
    UnknownBackend(String),

    #[error("operands live on different backends: {expected} vs {found}")]
    MixedBackends { expected: BackendId, found: BackendId },

    #[error("dtype mismatch: {lhs} vs {rhs}")]
    DTypeMismatch { lhs: DType, rhs: DType },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid axis {axis} for tensor of rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },

    #[error("reduction over zero elements")]
    EmptyReduction,

    #[error("backward requires a rank-0 loss, got shape {0}")]
    NotScalarLoss(Shape),

    #[error("differentiated function must return a rank-0 tensor, got shape {0}")]
    NonScalarOutput(Shape),

    #[error("backend {0} has no automatic differentiation")]
    NoAutodiffCapability(BackendId),

    #[error("non-persistent gradient tape was already used")]
    TapeConsumed,

    #[error("gradient requested for a tensor that is not watched by the tape")]
    NotWatched,

    #[error("gradient target was not recorded on the tape")]
    NotRecorded,

    #[error("no gradient rule for op `{0}`")]
    NonDifferentiableOp(&'static str),

    #[error("cannot trace: {0}")]
    UntraceableOp(String),

    #[error("op `{kind}` is not supported here: {reason}")]
    UnsupportedOp { kind: &'static str, reason: String },

    #[error("invalid op parameters for `{kind}`: {reason}")]
    InvalidParams { kind: &'static str, reason: String },

    #[error("tensor literal parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable taxonomy name, used by conformance records and the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownBackend(_) => "UnknownBackend",
            Error::MixedBackends { .. } => "MixedBackends",
            Error::DTypeMismatch { .. } => "DTypeMismatch",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidAxis { .. } => "InvalidAxis",
            Error::EmptyReduction => "EmptyReduction",
            Error::NotScalarLoss(_) => "NotScalarLoss",
            Error::NonScalarOutput(_) => "NonScalarOutput",
            Error::NoAutodiffCapability(_) => "NoAutodiffCapability",
            Error::TapeConsumed => "TapeConsumed",
            Error::NotWatched => "NotWatched",
            Error::NotRecorded => "NotRecorded",
            Error::NonDifferentiableOp(_) => "NonDifferentiableOp",
            Error::UntraceableOp(_) => "UntraceableOp",
            Error::UnsupportedOp { .. } => "UnsupportedOp",
            Error::InvalidParams { .. } => "InvalidParams",
            Error::Parse(_) => "Parse",
        }
    }
}
