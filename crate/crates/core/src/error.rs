use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Inequality *failures* are never errors: they are data carried inside the
/// various report structs. Errors are reserved for invalid inputs, violated
/// preconditions and numerical breakdowns.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported dimension {0} (only d = 1 and d = 2 are supported)")]
    UnsupportedDimension(usize),

    #[error("domain violation for `{field}`: {reason}")]
    Domain { field: &'static str, reason: String },

    #[error("quadrature did not converge for {what}: relative change {rel_change:.3e} under refinement")]
    QuadratureNotConverged { what: &'static str, rel_change: f64 },

    #[error("numerical failure in {what}: {detail}")]
    Numerical { what: &'static str, detail: String },

    #[error("premise violated at step `{step}`: {detail}")]
    Premise { step: &'static str, detail: String },
}

impl Error {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            what,
            detail: detail.into(),
        }
    }

    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNotConverged { .. } | Error::Numerical { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
