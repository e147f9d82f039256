use thiserror::Error;

/// Errors raised by the simulator and the analytic layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A size measure or experiment is configured inconsistently.
    #[error("configuration error: {0}")]
    Config(String),

    /// A file could not be stored before the right edge of the simulated span.
    #[error(
        "saturation overflow: file at {location} of size {size} does not fit before {right_edge}"
    )]
    Overflow {
        location: f64,
        size: f64,
        right_edge: f64,
    },

    /// The requested quantity has no implementation for this size measure.
    #[error("not implemented: {0}")]
    NotImplemented(String),

    /// An iterative numerical routine failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
