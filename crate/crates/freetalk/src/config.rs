//! Run configuration files (TOML). Every key is optional and every key can
//! be overridden by the matching command-line flag.
//!
//! ```toml
//! seed = 7
//! embedder_seed = 0
//!
//! [protect]
//! input = "speech.wav"
//! output = "protected.wav"
//! alpha = 0.6
//! noise_level = 0.05
//! steps = 100
//!
//! [train]
//! inputs = ["speaker/"]
//! output = "speaker.ftpk"
//! frame_len = 30
//! noise_level = 0.3
//! mask_ratio = 0.5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub embedder_seed: Option<u64>,
    pub protect: ProtectSection,
    pub train: TrainSection,
    pub apply: ApplySection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtectSection {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub encoding: Option<String>,
    pub alpha: Option<f64>,
    pub noise_level: Option<f64>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub kernel: Option<usize>,
    pub augment: Option<bool>,
    pub smooth: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub inputs: Option<Vec<PathBuf>>,
    pub output: Option<PathBuf>,
    pub frame_len: Option<usize>,
    pub noise_level: Option<f64>,
    pub mask_ratio: Option<f64>,
    pub steps: Option<usize>,
    pub k: Option<usize>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub inner_lr: Option<f64>,
    pub lr: Option<f64>,
    pub augment: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApplySection {
    pub input: Option<PathBuf>,
    pub patch: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub encoding: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub original: Option<PathBuf>,
    pub protected: Option<PathBuf>,
    pub threshold: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }
}
