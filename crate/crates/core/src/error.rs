use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Things that can go wrong while setting up or running a problem.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, tiling or thread configuration
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Array allocation failed
    #[error("failed to allocate {bytes} bytes for the problem state")]
    Allocation { bytes: u64 },

    /// A coefficient denominator vanished at some cell
    #[error("singular update coefficients at cell ({x},{y},{z}) for {component}: {detail}")]
    SingularCoefficient { x: usize, y: usize, z: usize, component: String, detail: String },

    /// The tiling plan could not be built
    #[error("tiling plan error: {0}")]
    Plan(String),

    /// The tile scheduler stalled with work remaining
    #[error("scheduler deadlock: {} tiles never became ready (first: {:?})", stuck.len(), stuck.first())]
    Deadlock { stuck: Vec<usize> },

    /// Two states cannot be compared
    #[error("state mismatch: {0}")]
    Mismatch(String),

    /// A schedule trace is missing tiles
    #[error("truncated trace: {} tiles missing (first: {:?})", missing.len(), missing.first())]
    TruncatedTrace { missing: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialisation failed: {0}")]
    Serialize(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}
