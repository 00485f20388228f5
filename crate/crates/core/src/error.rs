use thiserror::Error;

/// Errors raised by estimation, simulation and inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    Input(String),
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A tuning or model parameter is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Binary regression at a threshold where every indicator takes the same value.
    #[error("degenerate threshold {threshold}: all indicators equal {value}")]
    DegenerateThreshold { threshold: f64, value: bool },
    /// Conditional CDF requested at a threshold that has not been fitted.
    #[error("threshold {0} has not been fitted")]
    UnfittedThreshold(f64),
    /// The estimator could not produce a value.
    #[error("estimation failed: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
