use thiserror::Error;

/// Library-wide error type.
///
/// Each variant carries a stable machine-readable code (see [`Error::code`])
/// so that callers such as the CLI can map failures onto exit statuses
/// without string-matching messages.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent arguments (lengths, empty inputs, bad flags).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A state or parameter outside the model's domain (e.g. x <= 0 for CIR).
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// The requested operation is not defined for this model family.
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// A numerical procedure failed (quadrature, overflow, degenerate design).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iterative solver or optimizer did not converge.
    #[error("non-convergence: {0}")]
    NonConvergence(String),

    /// An option quote violates a no-arbitrage bound.
    #[error("arbitrage violation: {0}")]
    ArbitrageViolation(String),
}

impl Error {
    /// Stable short code identifying the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DomainViolation(_) => "domain_violation",
            Error::UnsupportedModel(_) => "unsupported_model",
            Error::Numerical(_) => "numerical_failure",
            Error::NonConvergence(_) => "non_convergence",
            Error::ArbitrageViolation(_) => "arbitrage_violation",
        }
    }

    /// Whether this error reflects bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DomainViolation(_)
                | Error::UnsupportedModel(_)
                | Error::ArbitrageViolation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
