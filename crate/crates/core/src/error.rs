use thiserror::Error;

/// Errors produced by the key-rate engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller broke a structural contract (e.g. a non-symmetric covariance matrix).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Channel parameters violate the uncertainty-principle constraint on the unmodulated quadrature.
    #[error("nonphysical channel parameters: {0}")]
    Nonphysical(String),

    /// A literal-form evaluation hit a singular input.
    #[error("singular input: {0}")]
    Singular(String),

    /// A numerical expression left its valid range (e.g. log of a non-positive argument).
    #[error("numerical domain error: {0}")]
    Numerical(String),

    /// Parameter estimation produced an unusable worst-case channel.
    #[error("parameter estimation failed: {0}")]
    Estimation(String),

    /// No positive key rate exists at zero distance.
    #[error("no positive key rate at zero distance (rate {0:.6e})")]
    NoRange(f64),

    /// A sweep row exceeded the repeaterless bound.
    #[error("key rate {rate:.6e} exceeds the PLOB bound {bound:.6e} at {at}")]
    PlobViolation { rate: f64, bound: f64, at: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
