use thiserror::Error;

/// Errors produced by the planning library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented contract (dimension mismatch,
    /// parameter out of range, inconsistent boundary data).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A chain description failed validation.
    #[error("invalid chain spec: {0}")]
    InvalidChain(String),

    /// A collision mesh or scene description failed validation.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// A matrix that must be a rotation is not orientation-preserving
    /// orthonormal within tolerance.
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    /// The passive mass-matrix block is numerically singular at the
    /// queried configuration (condition number above 1e12).
    #[error("singular configuration: {0}")]
    SingularConfiguration(String),

    /// A batch evaluation failed for one element.
    #[error("batch element {index}: {source}")]
    BatchElement {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Configuration file or pipeline setup problem.
    #[error("config error: {0}")]
    Config(String),

    /// A report with no rows was handed to a consumer that needs data.
    #[error("empty report: {0}")]
    EmptyReport(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
