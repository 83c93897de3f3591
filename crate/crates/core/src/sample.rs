//! Sample-wise protection: optimize a complex perturbation for a single
//! utterance, confined to a central frequency band.
//!
//! The protected signal is `istft(s + lambda * smooth(delta) * mask)`, where
//! `s` is the clean spectrogram and `mask` selects in-band cells whose
//! magnitude exceeds the band minimum. Adam minimizes the cosine similarity
//! between the clean embedding and the embedding of the (augmented)
//! protected signal.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::augment::AugmentDraw;
use crate::dsp::{smooth_rows, smooth_rows_adjoint, ComplexNoise, Spectrogram, Stft, StftConfig};
use crate::embedder::{cosine_loss, Embedding, SpeakerEmbedder, MIN_EMBED_LEN};
use crate::matrix::RealMatrix;
use crate::optim::AdamState;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result, Waveform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    /// Fraction of the spectrum, centered, that may be perturbed.
    pub alpha: f64,
    /// Perturbation scale applied to the smoothed noise.
    pub lambda: f64,
    pub steps: usize,
    pub lr: f64,
    /// Odd smoothing width along time.
    pub kernel: usize,
    pub augment: bool,
    pub smooth: bool,
    pub seed: u64,
    pub stft: StftConfig,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            lambda: 0.05,
            steps: 100,
            lr: 0.1,
            kernel: 5,
            augment: true,
            smooth: true,
            seed: 0,
            stft: StftConfig::default(),
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        // lambda = 0 is accepted: it reproduces the clean round trip.
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "noise level must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "smoothing kernel must be odd and >= 1, got {}",
                self.kernel
            )));
        }
        self.stft.validate()
    }
}

/// Half-open range of frequency rows `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrequencyBand {
    pub start: usize,
    pub end: usize,
}

impl FrequencyBand {
    pub fn contains(&self, row: usize) -> bool {
        (self.start..self.end).contains(&row)
    }

    pub fn width(&self) -> usize {
        self.end - self.start
    }
}

/// `start = floor(F (1 - alpha) / 2)`, `end = ceil(F (1 + alpha) / 2)`.
pub fn compute_freq_band(bins: usize, alpha: f64) -> Result<FrequencyBand> {
    if bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!(
            "alpha must be in (0, 1], got {alpha}"
        )));
    }
    let f = bins as f64;
    let start = (libm::floor(f * (1.0 - alpha) / 2.0) as usize).min(bins);
    let end = (libm::ceil(f * (1.0 + alpha) / 2.0) as usize).min(bins);
    Ok(FrequencyBand { start, end })
}

/// Binary mask: 1 on in-band cells whose magnitude is strictly above the
/// in-band minimum. If that leaves the band empty (all magnitudes equal),
/// the whole band is enabled.
pub fn compute_mask(spec: &Spectrogram, band: FrequencyBand) -> Result<RealMatrix> {
    if band.start >= band.end || band.end > spec.rows() {
        return Err(Error::Shape(format!(
            "band [{}, {}) invalid for {} rows",
            band.start,
            band.end,
            spec.rows()
        )));
    }
    let frames = spec.frames();
    let threshold = (band.start..band.end)
        .flat_map(|f| spec.row(f).iter().map(|c| c.norm()))
        .fold(f64::INFINITY, f64::min);
    let mut mask = RealMatrix::zeros(spec.rows(), frames);
    let mut active = 0usize;
    for f in band.start..band.end {
        for (m, c) in mask.row_mut(f).iter_mut().zip(spec.row(f)) {
            if c.norm() > threshold {
                *m = 1.0;
                active += 1;
            }
        }
    }
    if active == 0 {
        for f in band.start..band.end {
            mask.row_mut(f).fill(1.0);
        }
    }
    Ok(mask)
}

/// The differentiable map from noise variables to the protection loss for
/// one utterance. Mask and band are frozen from the clean spectrogram.
pub struct SampleObjective<'a, E: SpeakerEmbedder + ?Sized> {
    embedder: &'a E,
    stft: Stft,
    clean: Spectrogram,
    reference: Embedding,
    band: FrequencyBand,
    mask: RealMatrix,
    lambda: f64,
    kernel: Option<usize>,
    len: usize,
}

impl<'a, E: SpeakerEmbedder + ?Sized> SampleObjective<'a, E> {
    pub fn new(embedder: &'a E, waveform: &Waveform, cfg: &SampleConfig) -> Result<Self> {
        cfg.validate()?;
        let x = waveform.samples();
        if x.len() < MIN_EMBED_LEN {
            return Err(Error::TooShort {
                len: x.len(),
                min: MIN_EMBED_LEN,
            });
        }
        let stft = Stft::new(cfg.stft)?;
        let reference = embedder.embed(x)?;
        let clean = stft.forward(x)?;
        let band = compute_freq_band(clean.rows(), cfg.alpha)?;
        let mask = compute_mask(&clean, band)?;
        Ok(Self {
            embedder,
            stft,
            clean,
            reference,
            band,
            mask,
            lambda: cfg.lambda,
            kernel: cfg.smooth.then_some(cfg.kernel),
            len: x.len(),
        })
    }

    pub fn reference(&self) -> &Embedding {
        &self.reference
    }

    pub fn band(&self) -> FrequencyBand {
        self.band
    }

    pub fn mask(&self) -> &RealMatrix {
        &self.mask
    }

    pub fn clean(&self) -> &Spectrogram {
        &self.clean
    }

    /// Shape of the noise variables, `F x T`.
    pub fn noise_shape(&self) -> (usize, usize) {
        (self.clean.rows(), self.clean.frames())
    }

    /// Fraction of in-band cells the mask enables.
    pub fn mask_density(&self) -> f64 {
        let total = (self.band.width() * self.clean.frames()) as f64;
        self.mask.as_slice().iter().sum::<f64>() / total
    }

    fn check_shape(&self, noise: &ComplexNoise) -> Result<()> {
        if noise.shape() != self.noise_shape() {
            return Err(Error::Shape(format!(
                "noise {:?} vs spectrogram {:?}",
                noise.shape(),
                self.noise_shape()
            )));
        }
        Ok(())
    }

    /// Protected waveform for `noise`, before clamping.
    pub fn synthesize(&self, noise: &ComplexNoise) -> Result<Vec<f64>> {
        self.check_shape(noise)?;
        let (real, imag) = match self.kernel {
            Some(k) => (smooth_rows(&noise.real, k), smooth_rows(&noise.imag, k)),
            None => (noise.real.clone(), noise.imag.clone()),
        };
        let mut spec = self.clean.clone();
        let frames = spec.frames();
        for f in self.band.start..self.band.end {
            for t in 0..frames {
                let m = self.mask.get(f, t);
                if m != 0.0 {
                    let scale = self.lambda * m;
                    spec.add(
                        f,
                        t,
                        num_complex::Complex64::new(scale * real.get(f, t), scale * imag.get(f, t)),
                    );
                }
            }
        }
        self.stft.inverse(&spec, self.len)
    }

    pub fn loss(&self, noise: &ComplexNoise, augment: Option<&AugmentDraw>) -> Result<f64> {
        let x = self.synthesize(noise)?;
        let x = match augment {
            Some(d) => d.apply(&x),
            None => x,
        };
        Ok(cosine_loss(&self.reference, &self.embedder.embed(&x)?))
    }

    /// Loss and its exact gradient with respect to both noise matrices.
    pub fn loss_and_grad(
        &self,
        noise: &ComplexNoise,
        augment: Option<&AugmentDraw>,
    ) -> Result<(f64, ComplexNoise)> {
        let x = self.synthesize(noise)?;
        let x = match augment {
            Some(d) => d.apply(&x),
            None => x,
        };
        let (loss, grad_x) = self.embedder.loss_input_grad(&x, &self.reference)?;
        let grad_x = match augment {
            Some(d) => d.pull_back(&grad_x),
            None => grad_x,
        };
        let grad_spec = self
            .stft
            .inverse_adjoint(&grad_x, self.clean.frames(), self.len)?;
        let (rows, frames) = self.noise_shape();
        let mut g_real = RealMatrix::zeros(rows, frames);
        let mut g_imag = RealMatrix::zeros(rows, frames);
        for f in self.band.start..self.band.end {
            for t in 0..frames {
                let scale = self.lambda * self.mask.get(f, t);
                if scale != 0.0 {
                    let g = grad_spec.get(f, t);
                    g_real.set(f, t, scale * g.re);
                    g_imag.set(f, t, scale * g.im);
                }
            }
        }
        if let Some(k) = self.kernel {
            g_real = smooth_rows_adjoint(&g_real, k);
            g_imag = smooth_rows_adjoint(&g_imag, k);
        }
        Ok((loss, ComplexNoise::new(g_real, g_imag)?))
    }
}

/// Standard-normal `rows x cols` noise pair.
pub fn gaussian_noise<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexNoise {
    let real = RealMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    let imag = RealMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    ComplexNoise { real, imag }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtectionReport {
    /// Loss at every optimization step, evaluated before that step's update.
    pub losses: Vec<f64>,
    /// Similarity of the un-augmented output at the initial noise.
    pub initial_similarity: f64,
    /// Similarity of the returned (clamped) output.
    pub final_similarity: f64,
    pub band: FrequencyBand,
    pub mask_density: f64,
}

impl ProtectionReport {
    /// Running minimum of the loss trajectory.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.losses
            .iter()
            .map(|l| {
                best = best.min(*l);
                best
            })
            .collect()
    }
}

/// Optimizes a perturbation for `waveform` and returns the protected signal
/// (clamped to `[-1, 1]`) from the final noise iterate.
pub fn protect<E: SpeakerEmbedder + ?Sized>(
    waveform: &Waveform,
    cfg: &SampleConfig,
    embedder: &E,
) -> Result<(Waveform, ProtectionReport)> {
    let objective = SampleObjective::new(embedder, waveform, cfg)?;
    let (rows, frames) = objective.noise_shape();
    let len = waveform.len();
    let mut noise = gaussian_noise(&mut stream_rng(cfg.seed, Stream::NoiseInit), rows, frames);
    let mut aug_rng = stream_rng(cfg.seed, Stream::Augment);
    let mut adam_real = AdamState::new(rows * frames, cfg.lr);
    let mut adam_imag = AdamState::new(rows * frames, cfg.lr);

    let initial_similarity = objective.loss(&noise, None)?;
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let draw = cfg.augment.then(|| AugmentDraw::draw(&mut aug_rng, len));
        let (loss, grad) = objective.loss_and_grad(&noise, draw.as_ref())?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        adam_real.step(noise.real.as_mut_slice(), grad.real.as_slice())?;
        adam_imag.step(noise.imag.as_mut_slice(), grad.imag.as_slice())?;
        losses.push(loss);
    }

    let protected = Waveform::new(objective.synthesize(&noise)?, waveform.sample_rate())?.clamped();
    let final_similarity =
        cosine_loss(objective.reference(), &embedder.embed(protected.samples())?);
    let report = ProtectionReport {
        losses,
        initial_similarity,
        final_similarity,
        band: objective.band(),
        mask_density: objective.mask_density(),
    };
    Ok((protected, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft;
    use crate::embedder::SurrogateEmbedder;
    use crate::synth::SyntheticSpeaker;
    use num_complex::Complex64;

    #[test]
    fn band_formula() {
        assert_eq!(
            compute_freq_band(513, 0.6).unwrap(),
            FrequencyBand {
                start: 102,
                end: 411
            }
        );
        assert_eq!(
            compute_freq_band(513, 1.0).unwrap(),
            FrequencyBand { start: 0, end: 513 }
        );
        assert_eq!(StftConfig::default().bins(), 513);
        assert!(compute_freq_band(513, 0.0).is_err());
        assert!(compute_freq_band(513, 1.5).is_err());
        assert!(compute_freq_band(1, 0.5).is_err());
    }

    fn constant_spec(frames: usize) -> Spectrogram {
        let mut s = Spectrogram::zeros(StftConfig::default(), frames, 512 * (frames - 1));
        for c in s.as_mut_slice() {
            *c = Complex64::new(0.6, 0.8);
        }
        s
    }

    #[test]
    fn mask_excludes_unique_minimum() {
        let mut s = constant_spec(4);
        s.set(200, 2, Complex64::new(0.1, 0.0));
        let band = FrequencyBand {
            start: 102,
            end: 411,
        };
        let mask = compute_mask(&s, band).unwrap();
        assert_eq!(mask.get(200, 2), 0.0);
        let active: f64 = mask.as_slice().iter().sum();
        assert_eq!(active as usize, band.width() * 4 - 1);
        // Rows outside the band stay off regardless of magnitude.
        assert!(mask.row(0).iter().chain(mask.row(411)).all(|m| *m == 0.0));
    }

    #[test]
    fn mask_falls_back_to_full_band() {
        let s = constant_spec(3);
        let band = FrequencyBand { start: 10, end: 20 };
        let mask = compute_mask(&s, band).unwrap();
        for f in 0..s.rows() {
            let want = if band.contains(f) { 1.0 } else { 0.0 };
            assert!(mask.row(f).iter().all(|m| *m == want));
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SampleConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        let cfg = SampleConfig {
            kernel: 4,
            ..SampleConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SampleConfig {
            steps: 0,
            ..SampleConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    fn utterance(seed: u64, secs: f64) -> Waveform {
        let mut rng = stream_rng(seed, Stream::Synth);
        SyntheticSpeaker::random(&mut rng).utterance(&mut rng, secs)
    }

    #[test]
    fn zero_lambda_is_round_trip() {
        let emb = SurrogateEmbedder::with_seed(1).unwrap();
        let w = utterance(1, 1.0);
        let cfg = SampleConfig {
            lambda: 0.0,
            steps: 2,
            ..SampleConfig::default()
        };
        let (out, report) = protect(&w, &cfg, &emb).unwrap();
        let spec = stft(w.samples(), cfg.stft).unwrap();
        let rt = crate::dsp::istft(&spec, w.len()).unwrap();
        for (a, b) in out.samples().iter().zip(&rt) {
            assert!((a - b.clamp(-1.0, 1.0)).abs() < 1e-12);
        }
        assert!((report.final_similarity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn same_seed_same_output() {
        let emb = SurrogateEmbedder::with_seed(1).unwrap();
        let w = utterance(2, 0.5);
        let cfg = SampleConfig {
            steps: 3,
            seed: 9,
            ..SampleConfig::default()
        };
        let (a, ra) = protect(&w, &cfg, &emb).unwrap();
        let (b, rb) = protect(&w, &cfg, &emb).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ra.losses.len(), 3);
        assert_eq!(a.len(), w.len());
    }

    #[test]
    fn gradient_is_zero_outside_mask() {
        let emb = SurrogateEmbedder::with_seed(1).unwrap();
        let w = utterance(3, 0.5);
        let cfg = SampleConfig {
            smooth: false,
            ..SampleConfig::default()
        };
        let obj = SampleObjective::new(&emb, &w, &cfg).unwrap();
        let (rows, frames) = obj.noise_shape();
        let noise = gaussian_noise(&mut stream_rng(0, Stream::NoiseInit), rows, frames);
        let (_, g) = obj.loss_and_grad(&noise, None).unwrap();
        for f in 0..rows {
            for t in 0..frames {
                if obj.mask().get(f, t) == 0.0 {
                    assert_eq!(g.real.get(f, t), 0.0);
                    assert_eq!(g.imag.get(f, t), 0.0);
                }
            }
        }
    }

    #[test]
    fn best_so_far_is_non_increasing() {
        let r = ProtectionReport {
            losses: alloc::vec![0.9, 0.95, 0.7, 0.8, 0.6],
            initial_similarity: 1.0,
            final_similarity: 0.6,
            band: FrequencyBand { start: 0, end: 1 },
            mask_density: 1.0,
        };
        assert_eq!(r.best_so_far(), [0.9, 0.9, 0.7, 0.7, 0.6]);
    }
}
