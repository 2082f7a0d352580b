use std::path::{Path, PathBuf};

use serde_json::json;

/// Errors reported by the command line.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Missing, conflicting or malformed flags.
    #[error("{0}")]
    Usage(String),

    /// A file could not be read or written.
    #[error("{}: {source}", path.display())]
    Io {
        /// File involved.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },

    /// A file was readable but its contents were not understood.
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(" line {}", l)).unwrap_or_default())]
    Format {
        /// File involved.
        path: PathBuf,
        /// 1-based line number, when the problem is tied to one line.
        line: Option<u64>,
        /// What was wrong.
        message: String,
    },

    /// An algorithm rejected its input or failed.
    #[error(transparent)]
    Compute(#[from] postensor_core::Error),
}

/// Result alias for the command line.
pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, line: Option<u64>, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Io { .. } => "io",
            Self::Format { .. } => "format",
            Self::Compute(_) => "compute",
        }
    }

    /// Process exit code: 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }

    /// JSON error record printed on stderr.
    pub fn record(&self) -> serde_json::Value {
        let mut rec = json!({
            "kind": self.kind(),
            "message": self.to_string(),
        });
        match self {
            Self::Io { path, .. } => rec["path"] = json!(path),
            Self::Format { path, line, .. } => {
                rec["path"] = json!(path);
                if let Some(l) = line {
                    rec["line"] = json!(l);
                }
            }
            _ => {}
        }
        json!({ "error": rec })
    }
}
