//! Speaker embeddings and the built-in differentiable surrogate encoder.
//!
//! The surrogate computes
//!
//! ```text
//! |STFT|^2 -> mel filterbank -> ln(. + 1e-8) -> per-band mean and std over frames
//!          -> frozen Gaussian projection -> L2 normalization
//! ```
//!
//! and backpropagates the cosine loss analytically through every stage,
//! including the STFT, so optimizers get exact input-space gradients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{Spectrogram, Stft, StftConfig};
use crate::matrix::RealMatrix;
use crate::{Error, Result, SAMPLE_RATE};

/// Shortest input any embedder in this crate accepts.
pub const MIN_EMBED_LEN: usize = 2048;

const UNIT_NORM_TOL: f64 = 1e-9;

/// Unit-norm speaker feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wraps `vector`, rejecting anything whose norm is not 1 within 1e-9.
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        let norm = libm::sqrt(vector.iter().map(|v| v * v).sum::<f64>());
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotUnitNorm(norm));
        }
        Ok(Self(vector))
    }

    /// Normalizes `vector` to unit length. `None` for a zero vector.
    pub fn normalized(mut vector: Vec<f64>) -> Option<Self> {
        let norm = libm::sqrt(vector.iter().map(|v| v * v).sum::<f64>());
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        for v in &mut vector {
            *v /= norm;
        }
        Some(Self(vector))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Cosine similarity of two unit embeddings. This is the quantity the
/// protection optimizers minimize.
pub fn cosine_loss(reference: &Embedding, other: &Embedding) -> f64 {
    reference
        .as_slice()
        .iter()
        .zip(other.as_slice())
        .map(|(a, b)| a * b)
        .sum()
}

/// Anything that maps a waveform to an embedding and can differentiate the
/// cosine loss with respect to the waveform samples.
pub trait SpeakerEmbedder {
    fn embed(&self, samples: &[f64]) -> Result<Embedding>;

    /// Returns `cos(reference, embed(samples))` and its gradient with respect
    /// to every input sample.
    fn loss_input_grad(&self, samples: &[f64], reference: &Embedding) -> Result<(f64, Vec<f64>)>;

    /// Seed that identifies the model weights, recorded in trained patches.
    fn seed(&self) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedderSpec {
    pub n_mels: usize,
    pub f_max: f64,
    pub dim: usize,
    pub seed: u64,
    pub log_floor: f64,
    pub std_floor: f64,
    pub stft: StftConfig,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self {
            n_mels: 40,
            f_max: 8000.0,
            dim: 64,
            seed: 0,
            log_floor: 1e-8,
            std_floor: 1e-8,
            stft: StftConfig::default(),
        }
    }
}

impl EmbedderSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// One triangular filter, stored as its nonzero span.
#[derive(Debug, Clone)]
struct MelFilter {
    start: usize,
    weights: Vec<f64>,
}

/// HTK-scale triangular filters with unit peak, spanning `0..f_max`.
fn mel_filterbank(n_mels: usize, n_fft: usize, f_max: f64) -> Vec<MelFilter> {
    let bins = n_fft / 2 + 1;
    let mel_max = hz_to_mel(f_max);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(SAMPLE_RATE) / n_fft as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let weight = |k: usize| {
                let f = k as f64 * bin_hz;
                let up = (f - lo) / (mid - lo);
                let down = (hi - f) / (hi - mid);
                up.min(down).max(0.0)
            };
            let start = (0..bins).find(|&k| weight(k) > 0.0).unwrap_or(0);
            let end = (start..bins).find(|&k| weight(k) == 0.0).unwrap_or(bins);
            MelFilter {
                start,
                weights: (start..end).map(weight).collect(),
            }
        })
        .collect()
}

/// Log-mel statistics encoder with a frozen random projection.
#[derive(Debug, Clone)]
pub struct SurrogateEmbedder {
    spec: EmbedderSpec,
    stft: Stft,
    filters: Vec<MelFilter>,
    projection: RealMatrix,
}

struct Forward {
    spectrum: Spectrogram,
    mel: RealMatrix,
    log_mel: RealMatrix,
    mean: Vec<f64>,
    std: Vec<f64>,
    norm: f64,
    embedding: Embedding,
}

impl SurrogateEmbedder {
    pub fn new(spec: EmbedderSpec) -> Result<Self> {
        if spec.n_mels == 0 || spec.dim == 0 {
            return Err(Error::Config(
                "embedder needs n_mels > 0 and dim > 0".into(),
            ));
        }
        if !(spec.f_max > 0.0 && spec.f_max <= f64::from(SAMPLE_RATE) / 2.0) {
            return Err(Error::Config(format!(
                "f_max {} outside (0, 8000]",
                spec.f_max
            )));
        }
        if !(spec.log_floor > 0.0 && spec.std_floor > 0.0) {
            return Err(Error::Config("log and std floors must be positive".into()));
        }
        let stft = Stft::new(spec.stft)?;
        let filters = mel_filterbank(spec.n_mels, spec.stft.n_fft, spec.f_max);
        if let Some(m) = filters
            .iter()
            .position(|f| f.weights.iter().sum::<f64>() <= 0.0)
        {
            return Err(Error::Config(format!(
                "mel filter {m} covers no FFT bin; use fewer mel bands"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let projection = RealMatrix::from_fn(spec.dim, 2 * spec.n_mels, |_, _| {
            StandardNormal.sample(&mut rng)
        });
        Ok(Self {
            spec,
            stft,
            filters,
            projection,
        })
    }

    pub fn with_seed(seed: u64) -> Result<Self> {
        Self::new(EmbedderSpec::with_seed(seed))
    }

    pub fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    pub fn projection(&self) -> &RealMatrix {
        &self.projection
    }

    /// Dense `n_mels x F` filterbank, mostly for inspection.
    pub fn filterbank(&self) -> RealMatrix {
        let mut fb = RealMatrix::zeros(self.spec.n_mels, self.spec.stft.bins());
        for (m, f) in self.filters.iter().enumerate() {
            for (i, w) in f.weights.iter().enumerate() {
                fb.set(m, f.start + i, *w);
            }
        }
        fb
    }

    fn forward(&self, samples: &[f64]) -> Result<Forward> {
        if samples.len() < MIN_EMBED_LEN {
            return Err(Error::TooShort {
                len: samples.len(),
                min: MIN_EMBED_LEN,
            });
        }
        let spectrum = self.stft.forward(samples)?;
        let frames = spectrum.frames();
        let n_mels = self.spec.n_mels;
        let mut mel = RealMatrix::zeros(n_mels, frames);
        for (m, filter) in self.filters.iter().enumerate() {
            let row = mel.row_mut(m);
            for (i, w) in filter.weights.iter().enumerate() {
                for (r, c) in row.iter_mut().zip(spectrum.row(filter.start + i)) {
                    *r += w * c.norm_sqr();
                }
            }
        }
        let mut log_mel = mel.clone();
        for v in log_mel.as_mut_slice() {
            *v = libm::log(*v + self.spec.log_floor);
        }
        let inv_t = 1.0 / frames as f64;
        let mut mean = vec![0.0; n_mels];
        let mut std = vec![0.0; n_mels];
        for m in 0..n_mels {
            let row = log_mel.row(m);
            let mu = row.iter().sum::<f64>() * inv_t;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() * inv_t;
            mean[m] = mu;
            std[m] = libm::sqrt(var + self.spec.std_floor);
        }
        let features: Vec<f64> = mean.iter().chain(&std).copied().collect();
        let projected: Vec<f64> = (0..self.spec.dim)
            .map(|d| {
                self.projection
                    .row(d)
                    .iter()
                    .zip(&features)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        let norm = libm::sqrt(projected.iter().map(|v| v * v).sum::<f64>());
        let embedding = Embedding::normalized(projected)
            .ok_or_else(|| Error::Config("embedding projection collapsed to zero".into()))?;
        Ok(Forward {
            spectrum,
            mel,
            log_mel,
            mean,
            std,
            norm,
            embedding,
        })
    }
}

impl SpeakerEmbedder for SurrogateEmbedder {
    fn embed(&self, samples: &[f64]) -> Result<Embedding> {
        Ok(self.forward(samples)?.embedding)
    }

    fn loss_input_grad(&self, samples: &[f64], reference: &Embedding) -> Result<(f64, Vec<f64>)> {
        if reference.dim() != self.spec.dim {
            return Err(Error::Shape(format!(
                "reference embedding has {} dims, embedder produces {}",
                reference.dim(),
                self.spec.dim
            )));
        }
        let fw = self.forward(samples)?;
        let e = fw.embedding.as_slice();
        let r = reference.as_slice();
        let loss = cosine_loss(reference, &fw.embedding);

        // Through the normalization: d(r.e)/dy = (r - e (e.r)) / |y|.
        let grad_y: Vec<f64> = r
            .iter()
            .zip(e)
            .map(|(ri, ei)| (ri - ei * loss) / fw.norm)
            .collect();
        let n_mels = self.spec.n_mels;
        let mut grad_feat = vec![0.0; 2 * n_mels];
        for (d, gy) in grad_y.iter().enumerate() {
            for (gf, p) in grad_feat.iter_mut().zip(self.projection.row(d)) {
                *gf += gy * p;
            }
        }

        let frames = fw.spectrum.frames();
        let inv_t = 1.0 / frames as f64;
        let mut grad_mel = RealMatrix::zeros(n_mels, frames);
        for m in 0..n_mels {
            let g_mean = grad_feat[m] * inv_t;
            let g_std = grad_feat[n_mels + m] * inv_t / fw.std[m];
            let mu = fw.mean[m];
            for ((g, lm), mel) in grad_mel
                .row_mut(m)
                .iter_mut()
                .zip(fw.log_mel.row(m))
                .zip(fw.mel.row(m))
            {
                let g_log = g_mean + g_std * (lm - mu);
                *g = g_log / (mel + self.spec.log_floor);
            }
        }

        // Power spectrum -> complex cells: dP/dRe = 2 Re, dP/dIm = 2 Im.
        let mut grad_spec = Spectrogram::zeros(self.spec.stft, frames, samples.len());
        for (m, filter) in self.filters.iter().enumerate() {
            let gm = grad_mel.row(m);
            for (i, w) in filter.weights.iter().enumerate() {
                let k = filter.start + i;
                for (t, g) in gm.iter().enumerate() {
                    let x = fw.spectrum.get(k, t);
                    grad_spec.add(k, t, x * (2.0 * w * g));
                }
            }
        }
        Ok((loss, self.stft.forward_adjoint(&grad_spec)))
    }

    fn seed(&self) -> u64 {
        self.spec.seed
    }
}
