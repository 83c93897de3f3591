//! Identity patch files.
//!
//! A patch is stored as one JSON document:
//!
//! ```json
//! {"format":"ftpk","version":1,"f_bins":513,"frame_len":30,"lambda":0.3,
//!  "mask_ratio":0.5,"stft":{"n_fft":1024,"hop":512,"win_len":1024,"window":"hann"},
//!  "embedder_seed":0,"delta_real":[...],"delta_imag":[...]}
//! ```
//!
//! `delta_real` and `delta_imag` are row-major `f_bins x frame_len`. Numbers
//! are written in shortest round-trip form, so loading is bit-exact.

use std::fs;
use std::path::Path;

use freetalk_core::dsp::{ComplexNoise, StftConfig, WindowKind};
use freetalk_core::identity::IdentityPatch;
use freetalk_core::matrix::RealMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FORMAT: &str = "ftpk";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PatchFileError {
    #[error("corrupt patch file: {0}")]
    Corrupt(String),
    #[error("unsupported patch version {found}, expected {VERSION}")]
    Version { found: u64 },
    #[error("patch shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PatchFileError {
    pub fn kind(&self) -> &'static str {
        match self {
            PatchFileError::Corrupt(_) => "corrupt_patch",
            PatchFileError::Version { .. } => "patch_version",
            PatchFileError::Shape(_) => "patch_shape",
            PatchFileError::Io(_) => "io",
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StftDoc {
    n_fft: usize,
    hop: usize,
    win_len: usize,
    window: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchDoc {
    format: String,
    version: u32,
    f_bins: usize,
    frame_len: usize,
    lambda: f64,
    mask_ratio: f64,
    stft: StftDoc,
    embedder_seed: u64,
    delta_real: Vec<f64>,
    delta_imag: Vec<f64>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u64,
}

pub fn encode_patch(patch: &IdentityPatch) -> String {
    let (rows, cols) = patch.noise.shape();
    let doc = PatchDoc {
        format: FORMAT.into(),
        version: VERSION,
        f_bins: rows,
        frame_len: cols,
        lambda: patch.lambda,
        mask_ratio: patch.mask_ratio,
        stft: StftDoc {
            n_fft: patch.stft.n_fft,
            hop: patch.stft.hop,
            win_len: patch.stft.win_len,
            window: patch.stft.window.name().into(),
        },
        embedder_seed: patch.embedder_seed,
        delta_real: patch.noise.real.as_slice().to_vec(),
        delta_imag: patch.noise.imag.as_slice().to_vec(),
    };
    let mut out = serde_json::to_string(&doc).expect("patch documents always serialize");
    out.push('\n');
    out
}

pub fn decode_patch(text: &str) -> Result<IdentityPatch, PatchFileError> {
    let corrupt = |e: serde_json::Error| PatchFileError::Corrupt(e.to_string());
    let header: Header = serde_json::from_str(text).map_err(corrupt)?;
    if header.format != FORMAT {
        return Err(PatchFileError::Corrupt(format!(
            "format tag {:?}, expected {FORMAT:?}",
            header.format
        )));
    }
    if header.version != u64::from(VERSION) {
        return Err(PatchFileError::Version {
            found: header.version,
        });
    }
    let doc: PatchDoc = serde_json::from_str(text).map_err(corrupt)?;

    let window = match doc.stft.window.as_str() {
        "hann" => WindowKind::Hann,
        other => return Err(PatchFileError::Corrupt(format!("unknown window {other:?}"))),
    };
    let stft = StftConfig {
        n_fft: doc.stft.n_fft,
        hop: doc.stft.hop,
        win_len: doc.stft.win_len,
        window,
    };
    stft.validate()
        .map_err(|e| PatchFileError::Corrupt(e.to_string()))?;
    if doc.f_bins != stft.bins() {
        return Err(PatchFileError::Shape(format!(
            "f_bins {} does not match n_fft {} ({} bins)",
            doc.f_bins,
            stft.n_fft,
            stft.bins()
        )));
    }
    let cells = doc.f_bins.saturating_mul(doc.frame_len);
    if doc.frame_len == 0 {
        return Err(PatchFileError::Shape("frame_len is zero".into()));
    }
    for (name, data) in [
        ("delta_real", &doc.delta_real),
        ("delta_imag", &doc.delta_imag),
    ] {
        if data.len() != cells {
            return Err(PatchFileError::Shape(format!(
                "{name} has {} values, header declares {} x {} = {cells}",
                data.len(),
                doc.f_bins,
                doc.frame_len
            )));
        }
    }
    let real = RealMatrix::from_vec(doc.f_bins, doc.frame_len, doc.delta_real)
        .expect("length checked above");
    let imag = RealMatrix::from_vec(doc.f_bins, doc.frame_len, doc.delta_imag)
        .expect("length checked above");
    let noise = ComplexNoise::new(real, imag).map_err(|e| PatchFileError::Shape(e.to_string()))?;
    IdentityPatch::new(noise, doc.lambda, doc.mask_ratio, stft, doc.embedder_seed)
        .map_err(|e| PatchFileError::Corrupt(e.to_string()))
}

pub fn save_patch(patch: &IdentityPatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_patch(patch)).map_err(|e| Error::Patch {
        path: path.to_path_buf(),
        source: PatchFileError::Io(e),
    })
}

pub fn load_patch(path: impl AsRef<Path>) -> Result<IdentityPatch> {
    let path = path.as_ref();
    let patch_err = |source| Error::Patch {
        path: path.to_path_buf(),
        source,
    };
    let text = fs::read_to_string(path).map_err(|e| patch_err(PatchFileError::Io(e)))?;
    decode_patch(&text).map_err(patch_err)
}
