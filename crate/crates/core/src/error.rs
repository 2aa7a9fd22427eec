use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed maze: {0}")]
    MalformedMaze(String),
    #[error("invalid maze layout: {0}")]
    InvalidLayout(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("non-finite loss encountered at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("data pool is empty")]
    EmptyPool,
    #[error("reward `{0}` is not differentiable; use inpainting constraints instead")]
    NonDifferentiableReward(&'static str),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid score reference: expert {expert} must exceed random {random}")]
    InvalidReference { expert: f64, random: f64 },
    #[error("no path between cells {from:?} and {to:?}")]
    InfeasibleTask { from: (usize, usize), to: (usize, usize) },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("digest mismatch: file is corrupted")]
    DigestMismatch,
    #[error("unsupported format version {found} (this build reads up to {supported})")]
    VersionUnsupported { found: u32, supported: u32 },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error channel.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedMaze(_) => "malformed_maze",
            Error::InvalidLayout(_) => "invalid_layout",
            Error::InvalidConfig(_) => "invalid_config",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::EmptyPool => "empty_pool",
            Error::NonDifferentiableReward(_) => "non_differentiable_reward",
            Error::InvalidTask(_) => "invalid_task",
            Error::InvalidReference { .. } => "invalid_reference",
            Error::InfeasibleTask { .. } => "infeasible_task",
            Error::Io { .. } => "io",
            Error::DigestMismatch => "digest_mismatch",
            Error::VersionUnsupported { .. } => "version_unsupported",
            Error::SchemaMismatch(_) => "schema_mismatch",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
