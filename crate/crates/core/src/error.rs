use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("record {id}: non-finite embedding component at index {index}")]
    NonFinite { id: String, index: usize },

    #[error("pair ids without exactly one partner: {0:?}")]
    OrphanedPairs(Vec<String>),

    #[error("record {id}: {reason}")]
    ConceptViolation { id: String, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (parameter norms: {param_norms:?})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_norms: Vec<(String, f64)>,
    },

    #[error("tradeoff rate undefined: utility drop {0} is not positive")]
    UndefinedRate(f64),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
