use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid tree: operator `{op}` expects {expected} children, found {found}")]
    InvalidTree {
        op: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid tree: {0}")]
    MalformedTree(&'static str),
    #[error("feature index {feature} out of range for {dim} features")]
    FeatureOutOfRange { feature: usize, dim: usize },
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("duplicate operator name `{0}`")]
    DuplicateOperator(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(&'static str),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("no node at site {0}")]
    InvalidSite(usize),
    #[error("design column {0} contains non-finite values")]
    NonFiniteColumn(usize),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("price at index {index} is not positive ({value})")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
    #[error("could not initialise a chain with a finite design matrix")]
    InitFailure,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
