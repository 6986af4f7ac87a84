//! Errors shared by the pluggable mask, flow and feature sources.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed provider data in {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("no data for frame {0}")]
    MissingFrame(usize),
    #[error("{0}")]
    Other(String),
}

impl ProviderError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

/// `frame_000042.<ext>`, the per-frame naming used by every file-backed provider.
pub fn frame_file_name(t: usize, ext: &str) -> String {
    format!("frame_{t:06}.{ext}")
}
