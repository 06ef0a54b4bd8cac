use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter set violates one of its invariants. The message names the
    /// first violated invariant.
    #[error("invalid parameters: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A rate was requested whose denominator is zero.
    #[error("undefined rate: {0} has a zero denominator")]
    UndefinedRate(&'static str),

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(&'static str),

    #[error("degenerate intensities: mu1 and mu2 must differ")]
    DegenerateIntensity,

    #[error("seed length mismatch: expected {expected} bits, got {actual}")]
    SeedLength { expected: usize, actual: usize },

    #[error("resource limit: {0}")]
    Resource(String),

    /// The reconciliation message port failed or delivered an unexpected message.
    #[error("channel failure: {0}")]
    Channel(String),

    #[error("key verification failed")]
    VerificationFailed,

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
