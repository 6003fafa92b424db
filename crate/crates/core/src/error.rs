//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible scenario: UE {ue} sees no cell above the visibility floor after {retries} retries")]
    InfeasibleScenario { ue: usize, retries: usize },

    #[error("episode finished: no unconnected UEs remain")]
    EpisodeFinished,

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty feature suite")]
    EmptySuite,

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty input")]
    EmptyInput,

    #[error("no candidate actions")]
    NoCandidates,

    #[error("empty patch mask")]
    EmptyPatchMask,

    #[error("unsupported norm order {0}; only the max norm is implemented")]
    UnsupportedNorm(f64),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("malformed file {path}: {msg}")]
    Malformed { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps a parse/validation failure with the offending path.
    pub fn malformed(path: impl AsRef<std::path::Path>, msg: impl ToString) -> Self {
        Error::Malformed {
            path: path.as_ref().display().to_string(),
            msg: msg.to_string(),
        }
    }
}
