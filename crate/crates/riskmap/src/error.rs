//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building graphs, loading data,
/// fitting models, or writing outputs.
///
/// `Config` is reserved for problems a user can fix by editing a
/// configuration value or command line; frontends map it to a distinct
/// exit status.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied configuration (unknown key, bad value,
    /// inconsistent options).
    #[error("config error: {0}")]
    Config(String),

    /// Structurally invalid adjacency graph input.
    #[error("graph error: {0}")]
    Graph(String),

    /// Invalid polygon geometry or contiguity input.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Dataset rows that cannot be reconciled with the graph or schema.
    #[error("data error: {0}")]
    Data(String),

    /// Model/data dimension mismatch.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Sampler failure (non-finite posterior, impossible configuration).
    #[error("mcmc error: {0}")]
    Mcmc(String),

    /// Diagnostic preconditions not met (series too short, empty chain set).
    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    /// Archive layout problems (incomplete run directory, refusal to
    /// overwrite a completed one).
    #[error("archive error: {0}")]
    Archive(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
