//! Protection-strength metrics over (original, protected) pairs.
//!
//! `stcmr` is the fraction of pairs a verifier at a fixed cosine threshold
//! judges to be different speakers; `stcs` is the mean similarity clamped
//! into `[0, 1]`.

use crate::embedder::{cosine_loss, SpeakerEmbedder};
use crate::{Error, Result, Waveform};

/// Conventional cosine verification operating point.
pub const DEFAULT_THRESHOLD: f64 = 0.25;

/// Signal-to-perturbation ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Db(f64),
    /// The protected signal equals the original over the compared span.
    NoPerturbation,
}

impl Snr {
    pub fn db(self) -> Option<f64> {
        match self {
            Snr::Db(v) => Some(v),
            Snr::NoPerturbation => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub similarity: f64,
    pub is_match: bool,
    pub snr: Snr,
}

/// `10 log10(|x|^2 / |x_hat - x|^2)` over the overlapping length, with the
/// original as reference.
pub fn snr_db(original: &[f64], protected: &[f64]) -> Snr {
    let (mut signal, mut error) = (0.0, 0.0);
    for (x, y) in original.iter().zip(protected) {
        signal += x * x;
        error += (y - x) * (y - x);
    }
    if error == 0.0 {
        Snr::NoPerturbation
    } else {
        Snr::Db(10.0 * libm::log10(signal / error))
    }
}

pub fn evaluate_pair<E: SpeakerEmbedder + ?Sized>(
    original: &Waveform,
    protected: &Waveform,
    embedder: &E,
    threshold: f64,
) -> Result<EvalResult> {
    let a = embedder.embed(original.samples())?;
    let b = embedder.embed(protected.samples())?;
    let similarity = cosine_loss(&a, &b);
    Ok(EvalResult {
        similarity,
        is_match: similarity >= threshold,
        snr: snr_db(original.samples(), protected.samples()),
    })
}

/// Fraction of pairs judged non-matching.
pub fn stcmr(results: &[EvalResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("evaluation results"));
    }
    let misses = results.iter().filter(|r| !r.is_match).count();
    Ok(misses as f64 / results.len() as f64)
}

/// Mean similarity with negative values counted as zero.
pub fn stcs(results: &[EvalResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("evaluation results"));
    }
    let sum: f64 = results.iter().map(|r| r.similarity.max(0.0)).sum();
    Ok(sum / results.len() as f64)
}
