use std::path::PathBuf;

use crate::audio::AudioError;
use crate::patch_file::PatchFileError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] freetalk_core::Error),
    #[error("{path}: {source}")]
    Audio {
        path: PathBuf,
        #[source]
        source: AudioError,
    },
    #[error("{path}: {source}")]
    Patch {
        path: PathBuf,
        #[source]
        source: PatchFileError,
    },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable category for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(e) => match e {
                freetalk_core::Error::TooShort { .. } => "too_short",
                freetalk_core::Error::SampleRate(_) => "sample_rate",
                freetalk_core::Error::NonFiniteSample(_) => "non_finite_sample",
                freetalk_core::Error::Config(_) => "validation",
                freetalk_core::Error::Shape(_) => "shape",
                freetalk_core::Error::NotUnitNorm(_) => "not_unit_norm",
                freetalk_core::Error::NonFiniteGradient { .. }
                | freetalk_core::Error::NonFiniteLoss { .. }
                | freetalk_core::Error::NonFiniteTrainingGradient { .. } => "non_finite",
                freetalk_core::Error::Empty(_) => "empty_input",
            },
            Error::Audio { source, .. } => source.kind(),
            Error::Patch { source, .. } => source.kind(),
            Error::Config { .. } => "config",
            Error::Usage(_) => "usage",
            Error::Io { .. } => "io",
        }
    }
}
