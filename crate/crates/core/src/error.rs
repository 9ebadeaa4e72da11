use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, dimensions or hyper-parameters that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or non-finite input data.
    #[error("input error: {0}")]
    Input(String),

    /// An API called out of order (e.g. backward on a node that was never recorded).
    #[error("usage error: {0}")]
    Usage(String),

    /// The data cannot satisfy the request (degenerate metric, too few triplets, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A loss or gradient became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("model file error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
