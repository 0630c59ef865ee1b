use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed or out-of-range input.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A bandwidth rule that cannot satisfy the bandwidth conditions
    /// (h -> 0, n h^3 -> 0, n h -> infinity).
    #[error("bandwidth rule violates `{condition}`: {detail}")]
    Bandwidth {
        condition: &'static str,
        detail: String,
    },

    #[error("kernel moment k_{i}{j} is outside the supported range (i <= 4, 1 <= j <= 2)")]
    MomentRange { i: u32, j: u32 },

    /// A density (or its square norm) is identically zero, so a ratio is undefined.
    #[error("degenerate density: {0}")]
    Degenerate(String),

    /// The plug-in variance formula produced a negative value.
    #[error("plug-in variance is negative ({0:e}); the plug-in approximation broke down for this sample")]
    NegativeVariance(f64),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for numerical degeneracies, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::NegativeVariance(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
