use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The orientation chart degenerates where a² + b² = 1.
    #[error("pose lies on the chart boundary (a² + b² = {radius_sq})")]
    ChartBoundary { radius_sq: f64 },

    #[error("parallel singularity: det(A) = {det_a:e}")]
    Singular { det_a: f64 },

    /// A straight chart segment left the open unit disk at parameter `t`.
    #[error("segment leaves the orientation chart at t = {t}")]
    ChartExit { t: f64 },

    #[error("no singularity-free detour found: {0}")]
    NoPath(String),

    #[error("not an assembly-mode change: {0}")]
    NotAnAmc(String),

    #[error("direct kinematics returned {count} solutions; at most 8 exist per operation mode")]
    TooManySolutions { count: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
