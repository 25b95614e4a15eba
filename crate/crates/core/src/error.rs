use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A physical or numerical parameter lies outside its admissible domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("operation requires the full 2^N Hilbert space, got a fixed-excitation sector")]
    FullSpaceRequired,

    #[error("operands live in different bases")]
    BasisMismatch,

    #[error("state pattern {0:#b} is not part of the basis")]
    StateNotInBasis(u32),

    #[error("operator is not Hermitian (residual {0:e})")]
    NotHermitian(f64),

    #[error("system too large for dense treatment: {0}")]
    TooLarge(String),

    #[error("empty time window")]
    EmptyWindow,

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    /// Spectrum has a vanishing gap, so no odd-integer Kay assignment exists.
    #[error("degenerate spectrum: gap {index} is {gap:e}")]
    DegenerateSpectrum { index: usize, gap: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than a numerical breakdown.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::NotHermitian(_))
    }
}
