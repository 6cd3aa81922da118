use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its type invariant.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// An index lies outside the bin range of a parameter.
    #[error("index {index} out of range for parameter `{parameter}` ({len} bins)")]
    Bounds {
        parameter: String,
        index: usize,
        len: usize,
    },

    /// An argument lies outside the domain of a function.
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    /// The simulation produced a non-finite state.
    #[error("simulation fault at step {step}: {reason}")]
    Simulation { step: usize, reason: String },

    /// A scenario, checkpoint or run artifact does not match the expected space.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("missing run artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("failed to parse config: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            op,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for configuration/validation problems, 2 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::Bounds { .. }
            | Error::Validation(_)
            | Error::Usage(_)
            | Error::Toml(_) => 1,
            Error::Domain { .. }
            | Error::Simulation { .. }
            | Error::MissingArtifact(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => 2,
        }
    }
}
