use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition (shape, Hermiticity,
    /// trace, parameter domain, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The requested computation exceeds a fixed resource ceiling.
    #[error("resource cap exceeded: {what} = {got} (max {max})")]
    ResourceCap {
        what: &'static str,
        got: usize,
        max: usize,
    },

    #[error("invalid factor graph: {0}")]
    Graph(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
