use thiserror::Error;

/// Errors raised by the normal-form library.
///
/// Everything except [`Error::CertificateViolation`] is a caller-side
/// precondition problem. A certificate violation means one of the
/// integrality estimates failed on an input that satisfied the driver's
/// preconditions, which is always a bug.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{0} is not a prime")]
    NotPrime(u64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("variable count mismatch: {left} vs {right}")]
    VarCountMismatch { left: usize, right: usize },

    #[error("truncation mismatch: {left} vs {right}")]
    TruncationMismatch { left: u32, right: u32 },

    #[error("inner series has a nonzero constant term")]
    NonZeroConstant,

    #[error("zero eigenvalue: map is not locally invertible")]
    ZeroEigenvalue,

    #[error("scaling factor must be nonzero")]
    ZeroScale,

    #[error("series is already linear (no nonlinear leading term)")]
    AlreadyLinear,

    #[error("series is not tangent to the identity")]
    NotTangentToIdentity,

    #[error("insufficient truncation: need degree {needed}, have {have}")]
    InsufficientTruncation { needed: u32, have: u32 },

    #[error("ratio {0} is rational but not +-1, so no root of unity matches it")]
    NonUnitRatio(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("certificate violation: {0}")]
    CertificateViolation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
