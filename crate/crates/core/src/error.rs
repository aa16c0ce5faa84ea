use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented constraint.
    #[error("domain error: {0}")]
    Domain(String),

    /// Gamma evaluated at a non-positive integer.
    #[error("gamma has a pole at {0}")]
    Pole(f64),

    /// The (xi, rho) pair sits on the boundary rho = -(1 ^ xi); use the boundary path.
    #[error("boundary regime (rho = -(1 ^ xi)): xi = {xi}, rho = {rho}")]
    Boundary { xi: f64, rho: f64 },

    /// A numerical routine could not reach its tolerance.
    #[error("precision error: {0}")]
    Precision(String),

    /// Requested probability lies outside the range a table covers.
    #[error("range error: {0}")]
    Range(String),

    #[error("resource error: {0}")]
    Resource(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
