use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A catalog or enumeration would exceed its configured memory bound.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Internal bookkeeping is inconsistent (for example a collision was
    /// applied to an unoccupied state).
    #[error("logic error: {0}")]
    Logic(String),

    /// A state with the requested particle number and energy cannot be built.
    #[error("cannot construct state: {0}")]
    Construction(String),

    #[error("solver did not converge: {message} (last iterate mu = {mu}, T = {temperature})")]
    NonConvergence {
        message: String,
        mu: f64,
        temperature: f64,
    },

    /// Exact enumeration would exceed its work budget.
    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    /// Invalid configuration; the message names the offending key.
    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
