use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid {spec}: {reason}")]
    Validation { spec: String, reason: String },

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("{kind} file has kind {found:?}, expected {expected:?}")]
    WrongKind {
        kind: &'static str,
        found: String,
        expected: &'static str,
    },

    #[error("unsupported schema_version {found} (this build reads {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("accelerator {accelerator} has no peak FLOP/s entry for {bits}-bit arithmetic")]
    MissingPrecision { accelerator: String, bits: u32 },

    #[error("{0} requires a dense model (one expert)")]
    NotDense(&'static str),

    #[error("{0} requires standard (non-latent) attention")]
    LatentAttention(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parallelism plan: {0}")]
    InvalidPlan(String),

    #[error("no feasible configuration in the search grid")]
    EmptyFeasibleSet,

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn validation(spec: &str, reason: impl Into<String>) -> Self {
        Error::Validation {
            spec: spec.to_string(),
            reason: reason.into(),
        }
    }
}
