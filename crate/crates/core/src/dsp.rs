//! STFT analysis and overlap-add synthesis, time-axis noise smoothing and a
//! quantile-noise Wiener filter.
//!
//! Frames are centered: the signal is reflect-padded by `win_len / 2` on both
//! ends, so a signal of `L` samples yields `1 + L / hop` frames. Synthesis
//! divides the overlap-added frames by the summed squared window, which makes
//! `istft(stft(x)) == x` up to rounding.
//!
//! Every linear map here also has its adjoint, used to pull gradients back
//! from the waveform domain onto spectrogram cells.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::fft::RealFft;
use crate::matrix::RealMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
}

impl WindowKind {
    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Hann => "hann",
        }
    }

    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win_len: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 512,
            win_len: 1024,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 4 || !self.n_fft.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_fft must be a power of two >= 4, got {}",
                self.n_fft
            )));
        }
        if self.win_len != self.n_fft {
            return Err(Error::Config(format!(
                "win_len ({}) must equal n_fft ({})",
                self.win_len, self.n_fft
            )));
        }
        if self.hop * 2 != self.n_fft {
            return Err(Error::Config(format!(
                "hop ({}) must be n_fft / 2 ({})",
                self.hop,
                self.n_fft / 2
            )));
        }
        Ok(())
    }

    /// Frequency bin count `F = n_fft / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count `T` for a signal of `len` samples.
    pub fn frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    fn pad(&self) -> usize {
        self.win_len / 2
    }
}

/// Complex `F x T` matrix, frequency along rows and time along columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: Vec<Complex64>,
    rows: usize,
    frames: usize,
    config: StftConfig,
    source_len: usize,
}

impl Spectrogram {
    pub fn zeros(config: StftConfig, frames: usize, source_len: usize) -> Self {
        let rows = config.bins();
        Self {
            bins: vec![Complex64::new(0.0, 0.0); rows * frames],
            rows,
            frames,
            config,
            source_len,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    #[inline]
    pub fn get(&self, f: usize, t: usize) -> Complex64 {
        self.bins[f * self.frames + t]
    }

    #[inline]
    pub fn set(&mut self, f: usize, t: usize, v: Complex64) {
        self.bins[f * self.frames + t] = v;
    }

    #[inline]
    pub fn add(&mut self, f: usize, t: usize, v: Complex64) {
        self.bins[f * self.frames + t] += v;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.bins
    }

    pub fn row(&self, f: usize) -> &[Complex64] {
        &self.bins[f * self.frames..(f + 1) * self.frames]
    }

    pub fn magnitudes(&self) -> RealMatrix {
        RealMatrix::from_vec(
            self.rows,
            self.frames,
            self.bins.iter().map(|c| c.norm()).collect(),
        )
        .expect("shape")
    }

    pub fn is_finite(&self) -> bool {
        self.bins
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Real and imaginary perturbation matrices of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexNoise {
    pub real: RealMatrix,
    pub imag: RealMatrix,
}

impl ComplexNoise {
    pub fn new(real: RealMatrix, imag: RealMatrix) -> Result<Self> {
        if real.shape() != imag.shape() {
            return Err(Error::Shape(format!(
                "real part {:?} vs imaginary part {:?}",
                real.shape(),
                imag.shape()
            )));
        }
        Ok(Self { real, imag })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            real: RealMatrix::zeros(rows, cols),
            imag: RealMatrix::zeros(rows, cols),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.real.shape()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        Complex64::new(self.real.get(r, c), self.imag.get(r, c))
    }

    pub fn is_finite(&self) -> bool {
        self.real.is_finite() && self.imag.is_finite()
    }
}

/// Reusable analysis/synthesis engine for one [`StftConfig`].
#[derive(Debug, Clone)]
pub struct Stft {
    config: StftConfig,
    rfft: RealFft,
    window: Vec<f64>,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            rfft: RealFft::new(config.n_fft)?,
            window: config.window.coefficients(config.win_len),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len < self.config.win_len {
            return Err(Error::TooShort {
                len,
                min: self.config.win_len,
            });
        }
        Ok(())
    }

    fn reflect_pad(&self, x: &[f64]) -> Vec<f64> {
        let pad = self.config.pad();
        let len = x.len();
        let mut out = Vec::with_capacity(len + 2 * pad);
        out.extend((0..pad).map(|j| x[pad - j]));
        out.extend_from_slice(x);
        out.extend((0..pad).map(|j| x[len - 2 - j]));
        out
    }

    pub fn forward(&self, samples: &[f64]) -> Result<Spectrogram> {
        self.check_len(samples.len())?;
        let n = self.config.n_fft;
        let hop = self.config.hop;
        let padded = self.reflect_pad(samples);
        let frames = self.config.frames(samples.len());
        let mut spec = Spectrogram::zeros(self.config, frames, samples.len());
        let mut frame = vec![0.0; n];
        let mut out = vec![Complex64::new(0.0, 0.0); self.config.bins()];
        let mut scratch = self.rfft.scratch();
        for t in 0..frames {
            let seg = &padded[t * hop..t * hop + n];
            for ((f, s), w) in frame.iter_mut().zip(seg).zip(&self.window) {
                *f = s * w;
            }
            self.rfft.forward(&frame, &mut out, &mut scratch);
            for (k, v) in out.iter().enumerate() {
                spec.set(k, t, *v);
            }
        }
        Ok(spec)
    }

    /// Adjoint of [`Stft::forward`] with respect to the input samples.
    ///
    /// `grad` holds `dL/dRe` in the real part and `dL/dIm` in the imaginary
    /// part of each cell.
    pub fn forward_adjoint(&self, grad: &Spectrogram) -> Vec<f64> {
        let n = self.config.n_fft;
        let hop = self.config.hop;
        let pad = self.config.pad();
        let m = n / 2;
        let len = grad.source_len();
        let mut padded = vec![0.0; len + 2 * pad];
        let mut bins = vec![Complex64::new(0.0, 0.0); self.config.bins()];
        let mut frame = vec![0.0; n];
        let mut scratch = self.rfft.scratch();
        // d/dx[j] of sum_k (gRe_k Re X_k + gIm_k Im X_k)
        //   = w[j] sum_k Re(G_k e^{+2 pi i jk/n}),
        // which is n / c_k times the normalized inverse transform.
        for t in 0..grad.frames() {
            for (k, b) in bins.iter_mut().enumerate() {
                let c = if k == 0 || k == m { 1.0 } else { 2.0 };
                *b = grad.get(k, t) * (n as f64 / c);
            }
            self.rfft.inverse(&bins, &mut frame, &mut scratch);
            let seg = &mut padded[t * hop..t * hop + n];
            for ((p, f), w) in seg.iter_mut().zip(&frame).zip(&self.window) {
                *p += f * w;
            }
        }
        let mut out = padded[pad..pad + len].to_vec();
        for j in 0..pad {
            out[pad - j] += padded[j];
            out[len - 2 - j] += padded[pad + len + j];
        }
        out
    }

    fn window_norm(&self, frames: usize) -> Vec<f64> {
        let n = self.config.n_fft;
        let hop = self.config.hop;
        let mut norm = vec![0.0; n + hop * (frames.max(1) - 1)];
        for t in 0..frames {
            for (j, w) in self.window.iter().enumerate() {
                norm[t * hop + j] += w * w;
            }
        }
        norm
    }

    /// Number of output samples that carry synthesized content.
    fn live_len(&self, spec_frames: usize, source_len: usize, target_len: usize) -> usize {
        let buffer = self.config.n_fft + self.config.hop * (spec_frames.max(1) - 1);
        target_len
            .min(source_len)
            .min(buffer.saturating_sub(self.config.pad()))
    }

    pub fn inverse(&self, spec: &Spectrogram, target_len: usize) -> Result<Vec<f64>> {
        if target_len == 0 {
            return Err(Error::Config("istft target length must be positive".into()));
        }
        if spec.config() != &self.config {
            return Err(Error::Shape(
                "spectrogram built with another STFT config".into(),
            ));
        }
        let n = self.config.n_fft;
        let hop = self.config.hop;
        let pad = self.config.pad();
        let frames = spec.frames();
        let norm = self.window_norm(frames);
        let mut acc = vec![0.0; norm.len()];
        let mut bins = vec![Complex64::new(0.0, 0.0); self.config.bins()];
        let mut frame = vec![0.0; n];
        let mut scratch = self.rfft.scratch();
        for t in 0..frames {
            for (k, b) in bins.iter_mut().enumerate() {
                *b = spec.get(k, t);
            }
            self.rfft.inverse(&bins, &mut frame, &mut scratch);
            for (j, (f, w)) in frame.iter().zip(&self.window).enumerate() {
                acc[t * hop + j] += f * w;
            }
        }
        let live = self.live_len(frames, spec.source_len(), target_len);
        let mut out = vec![0.0; target_len];
        for (i, o) in out.iter_mut().enumerate().take(live) {
            let w = norm[i + pad];
            if w < 1e-11 {
                return Err(Error::Config(format!(
                    "degenerate window normalization at sample {i}"
                )));
            }
            *o = acc[i + pad] / w;
        }
        Ok(out)
    }

    /// Adjoint of [`Stft::inverse`]: maps `dL/dx` onto `dL/dRe` and `dL/dIm`
    /// of every cell of a spectrogram with `frames` columns whose source
    /// length is `source_len`.
    pub fn inverse_adjoint(
        &self,
        grad: &[f64],
        frames: usize,
        source_len: usize,
    ) -> Result<Spectrogram> {
        let n = self.config.n_fft;
        let hop = self.config.hop;
        let pad = self.config.pad();
        let m = n / 2;
        let norm = self.window_norm(frames);
        let live = self.live_len(frames, source_len, grad.len());
        let mut acc = vec![0.0; norm.len()];
        for i in 0..live {
            let w = norm[i + pad];
            if w < 1e-11 {
                return Err(Error::Config(format!(
                    "degenerate window normalization at sample {i}"
                )));
            }
            acc[i + pad] = grad[i] / w;
        }
        let mut out = Spectrogram::zeros(self.config, frames, source_len);
        let mut frame = vec![0.0; n];
        let mut bins = vec![Complex64::new(0.0, 0.0); self.config.bins()];
        let mut scratch = self.rfft.scratch();
        let inv_n = 1.0 / n as f64;
        for t in 0..frames {
            for (j, (f, w)) in frame.iter_mut().zip(&self.window).enumerate() {
                *f = acc[t * hop + j] * w;
            }
            self.rfft.forward(&frame, &mut bins, &mut scratch);
            for (k, b) in bins.iter().enumerate() {
                let c = if k == 0 || k == m { 1.0 } else { 2.0 };
                out.set(k, t, b * (c * inv_n));
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper: one-shot STFT.
pub fn stft(samples: &[f64], config: StftConfig) -> Result<Spectrogram> {
    Stft::new(config)?.forward(samples)
}

/// Convenience wrapper: one-shot inverse STFT.
pub fn istft(spec: &Spectrogram, target_len: usize) -> Result<Vec<f64>> {
    Stft::new(*spec.config())?.inverse(spec, target_len)
}

fn check_kernel(kernel: usize) {
    assert!(
        kernel % 2 == 1,
        "smoothing kernel must be odd, got {kernel}"
    );
}

/// Moving average of width `kernel` along each row, replicate-padded so the
/// shape is preserved.
pub fn smooth_rows(m: &RealMatrix, kernel: usize) -> RealMatrix {
    check_kernel(kernel);
    let (rows, cols) = m.shape();
    if kernel == 1 || cols == 0 {
        return m.clone();
    }
    let half = (kernel / 2) as isize;
    let last = cols as isize - 1;
    let scale = 1.0 / kernel as f64;
    let mut out = RealMatrix::zeros(rows, cols);
    for r in 0..rows {
        let src = m.row(r);
        let dst = out.row_mut(r);
        for (t, d) in dst.iter_mut().enumerate() {
            // Averaging offsets from the center keeps constants exact.
            let center = src[t];
            let mut acc = 0.0;
            for j in -half..=half {
                acc += src[(t as isize + j).clamp(0, last) as usize] - center;
            }
            *d = center + acc * scale;
        }
    }
    out
}

/// Adjoint of [`smooth_rows`]: correlation with the same kernel, with the
/// replicated edge taps folded back onto the boundary columns.
pub fn smooth_rows_adjoint(grad: &RealMatrix, kernel: usize) -> RealMatrix {
    check_kernel(kernel);
    let (rows, cols) = grad.shape();
    if kernel == 1 || cols == 0 {
        return grad.clone();
    }
    let half = (kernel / 2) as isize;
    let last = cols as isize - 1;
    let scale = 1.0 / kernel as f64;
    let mut out = RealMatrix::zeros(rows, cols);
    for r in 0..rows {
        let src = grad.row(r);
        let dst = out.row_mut(r);
        for (t, g) in src.iter().enumerate() {
            let g = g * scale;
            for j in -half..=half {
                dst[(t as isize + j).clamp(0, last) as usize] += g;
            }
        }
    }
    out
}

/// Smooths the real and imaginary parts independently.
pub fn smooth_noise(noise: &ComplexNoise, kernel: usize) -> ComplexNoise {
    ComplexNoise {
        real: smooth_rows(&noise.real, kernel),
        imag: smooth_rows(&noise.imag, kernel),
    }
}

/// Minimum frame count for the Wiener filter to estimate a noise floor.
pub const WIENER_MIN_FRAMES: usize = 10;

/// Per-cell Wiener gains `P_s / (P_s + P_n)`.
///
/// `P_n` for a frequency row is the mean power of its quietest 10% of
/// frames; `P_s = max(|s|^2 - P_n, 0)`. Rows without a noise floor get unit
/// gain, and spectrograms shorter than [`WIENER_MIN_FRAMES`] pass through.
pub fn wiener_gains(spec: &Spectrogram) -> RealMatrix {
    let rows = spec.rows();
    let frames = spec.frames();
    let mut gains = RealMatrix::from_vec(rows, frames, vec![1.0; rows * frames]).expect("shape");
    if frames < WIENER_MIN_FRAMES {
        return gains;
    }
    let quiet = frames / 10;
    let mut power = vec![0.0; frames];
    for f in 0..rows {
        for (p, c) in power.iter_mut().zip(spec.row(f)) {
            *p = c.norm_sqr();
        }
        let mut sorted = power.clone();
        sorted.select_nth_unstable_by(quiet - 1, f64::total_cmp);
        let noise = sorted[..quiet].iter().sum::<f64>() / quiet as f64;
        if noise <= 0.0 {
            continue;
        }
        for (g, p) in gains.row_mut(f).iter_mut().zip(&power) {
            let signal = (p - noise).max(0.0);
            *g = signal / (signal + noise);
        }
    }
    gains
}

/// Scales every cell by its gain; phase is preserved.
pub fn apply_gains(spec: &mut Spectrogram, gains: &RealMatrix) {
    debug_assert_eq!(gains.shape(), (spec.rows(), spec.frames()));
    for (c, g) in spec.as_mut_slice().iter_mut().zip(gains.as_slice()) {
        *c *= *g;
    }
}

pub fn wiener_filter(spec: &Spectrogram) -> Spectrogram {
    let gains = wiener_gains(spec);
    let mut out = spec.clone();
    apply_gains(&mut out, &gains);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        libm::sqrt(num / den)
    }

    #[test]
    fn frame_count_is_centered() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.bins(), 513);
        assert_eq!(cfg.frames(16_000), 32);
        let spec = stft(&random_signal(16_000, 1), cfg).unwrap();
        assert_eq!((spec.rows(), spec.frames()), (513, 32));
        assert_eq!(spec.source_len(), 16_000);
    }

    #[test]
    fn too_short_is_rejected() {
        let err = stft(&[0.0; 1023], StftConfig::default()).unwrap_err();
        assert_eq!(
            err,
            Error::TooShort {
                len: 1023,
                min: 1024
            }
        );
    }

    #[test]
    fn config_validation() {
        let cfg = StftConfig {
            hop: 256,
            ..StftConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = StftConfig {
            n_fft: 1000,
            win_len: 1000,
            hop: 500,
            ..StftConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn one_frame_matches_direct_dft() {
        let x = random_signal(4096, 2);
        let cfg = StftConfig::default();
        let spec = stft(&x, cfg).unwrap();
        // Frame 3 starts at padded index 3 * 512, i.e. source index 1024.
        let w = WindowKind::Hann.coefficients(1024);
        for k in [0usize, 1, 17, 300, 512] {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..1024 {
                let ang = -2.0 * PI * (j * k) as f64 / 1024.0;
                acc += Complex64::from_polar(x[1024 + j] * w[j], ang);
            }
            assert!((spec.get(k, 3) - acc).norm() < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let x: Vec<f64> = (0..16_000)
            .map(|i| libm::sin(2.0 * PI * 1000.0 * i as f64 / 16_000.0))
            .collect();
        let spec = stft(&x, StftConfig::default()).unwrap();
        let mags = spec.magnitudes();
        let t = 10;
        let peak = (0..spec.rows())
            .max_by(|&a, &b| mags.get(a, t).total_cmp(&mags.get(b, t)))
            .unwrap();
        assert_eq!(peak, 64);
    }

    #[test]
    fn zero_in_zero_out() {
        let spec = stft(&[0.0; 5000], StftConfig::default()).unwrap();
        assert!(spec.as_slice().iter().all(|c| c.norm() == 0.0));
        let back = istft(&spec, 5000).unwrap();
        assert!(back.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn round_trip_preserves_signal_and_length() {
        for (len, seed) in [(2048, 1), (2049, 2), (16_000, 3), (33_333, 4)] {
            let x = random_signal(len, seed);
            let spec = stft(&x, StftConfig::default()).unwrap();
            let y = istft(&spec, len).unwrap();
            assert_eq!(y.len(), len);
            assert!(rel_l2(&y, &x) <= 1e-6, "len {len}: {}", rel_l2(&y, &x));
        }
    }

    #[test]
    fn target_len_truncates_and_zero_pads() {
        let x = random_signal(5000, 9);
        let spec = stft(&x, StftConfig::default()).unwrap();
        let short = istft(&spec, 3000).unwrap();
        assert!(rel_l2(&short, &x[..3000]) < 1e-9);
        let long = istft(&spec, 6000).unwrap();
        assert!(rel_l2(&long[..5000], &x) < 1e-9);
        assert!(long[5000..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn inverse_is_linear() {
        let cfg = StftConfig::default();
        let s1 = stft(&random_signal(6000, 11), cfg).unwrap();
        let s2 = stft(&random_signal(6000, 12), cfg).unwrap();
        let (a, b) = (0.7, -1.9);
        let mut mix = s1.clone();
        for (m, v) in mix.as_mut_slice().iter_mut().zip(s2.as_slice()) {
            *m = *m * a + v * b;
        }
        let y1 = istft(&s1, 6000).unwrap();
        let y2 = istft(&s2, 6000).unwrap();
        let y = istft(&mix, 6000).unwrap();
        for i in 0..6000 {
            assert!((y[i] - (a * y1[i] + b * y2[i])).abs() < 1e-9);
        }
    }

    fn random_spec(cfg: StftConfig, frames: usize, len: usize, seed: u64) -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Spectrogram::zeros(cfg, frames, len);
        for c in s.as_mut_slice() {
            *c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        s
    }

    fn spec_dot(a: &Spectrogram, b: &Spectrogram) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x.re * y.re + x.im * y.im)
            .sum()
    }

    #[test]
    fn inverse_adjoint_identity() {
        let cfg = StftConfig::default();
        let stft = Stft::new(cfg).unwrap();
        let len = 5000;
        let frames = cfg.frames(len);
        for (target, seed) in [(len, 1u64), (4000, 2), (5600, 3)] {
            let s = random_spec(cfg, frames, len, seed);
            let g = random_signal(target, seed + 100);
            let y = stft.inverse(&s, target).unwrap();
            let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
            let adj = stft.inverse_adjoint(&g, frames, len).unwrap();
            let rhs = spec_dot(&s, &adj);
            assert!(
                (lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn forward_adjoint_identity() {
        let cfg = StftConfig::default();
        let stft = Stft::new(cfg).unwrap();
        let len = 4321;
        let x = random_signal(len, 21);
        let g = random_spec(cfg, cfg.frames(len), len, 22);
        let s = stft.forward(&x).unwrap();
        let lhs = spec_dot(&s, &g);
        let adj = stft.forward_adjoint(&g);
        let rhs: f64 = adj.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!(
            (lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn smoothing_hand_convolution() {
        let m = RealMatrix::from_vec(1, 7, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let s = smooth_rows(&m, 5);
        let want = [0.0, 0.2, 0.2, 0.2, 0.2, 0.2, 0.0];
        for (a, b) in s.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        // Replicate padding at the left edge: y0 = (3 x0 + x1 + x2) / 5.
        let m = RealMatrix::from_vec(1, 4, vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        let s = smooth_rows(&m, 3);
        let want = [4.0 / 3.0, 7.0 / 3.0, 14.0 / 3.0, 20.0 / 3.0];
        for (a, b) in s.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_constants_and_identity_kernel() {
        let c = RealMatrix::from_vec(2, 6, vec![0.3; 12]).unwrap();
        assert_eq!(smooth_rows(&c, 5), c);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = RealMatrix::from_fn(3, 9, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(smooth_rows(&r, 1), r);
    }

    #[test]
    fn smoothing_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for cols in [1, 2, 3, 7, 40] {
            let x = RealMatrix::from_fn(4, cols, |_, _| rng.random_range(-1.0..1.0));
            let g = RealMatrix::from_fn(4, cols, |_, _| rng.random_range(-1.0..1.0));
            let lhs = smooth_rows(&x, 5).dot(&g);
            let rhs = x.dot(&smooth_rows_adjoint(&g, 5));
            assert!((lhs - rhs).abs() < 1e-12, "cols {cols}");
        }
    }

    #[test]
    #[should_panic(expected = "odd")]
    fn even_kernel_panics() {
        smooth_rows(&RealMatrix::zeros(1, 4), 4);
    }

    #[test]
    fn wiener_gain_formula() {
        // One row, 10 frames: quietest 10% is a single frame of power 1.
        let mut s = Spectrogram::zeros(StftConfig::default(), 10, 4608);
        for f in 0..s.rows() {
            for t in 0..10 {
                s.set(f, t, Complex64::new(2.0, 0.0));
            }
            s.set(f, 0, Complex64::new(1.0, 0.0));
            s.set(f, 5, Complex64::new(0.0, libm::sqrt(3.0)));
        }
        let g = wiener_gains(&s);
        assert_eq!(g.get(0, 0), 0.0);
        assert!((g.get(0, 5) - 2.0 / 3.0).abs() < 1e-12);
        assert!((g.get(0, 3) - 0.75).abs() < 1e-12);
        let out = wiener_filter(&s);
        // Phase preserved: purely imaginary stays purely imaginary.
        assert_eq!(out.get(7, 5).re, 0.0);
        assert!((out.get(7, 5).im - libm::sqrt(3.0) * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn wiener_identity_without_noise_floor() {
        let mut s = random_spec(StftConfig::default(), 20, 9728, 3);
        for f in 0..s.rows() {
            for t in 0..2 {
                s.set(f, t, Complex64::new(0.0, 0.0));
            }
        }
        assert_eq!(wiener_filter(&s), s);
        let z = Spectrogram::zeros(StftConfig::default(), 20, 9728);
        assert_eq!(wiener_filter(&z), z);
    }

    #[test]
    fn wiener_passthrough_for_short_input() {
        let s = random_spec(StftConfig::default(), 9, 4096, 5);
        assert_eq!(wiener_filter(&s), s);
    }

    #[test]
    fn wiener_gains_bounded() {
        let s = random_spec(StftConfig::default(), 37, 18_432, 6);
        let g = wiener_gains(&s);
        assert!(g.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let out = wiener_filter(&s);
        for (a, b) in out.as_slice().iter().zip(s.as_slice()) {
            assert!(a.norm() <= b.norm() + 1e-15);
        }
    }
}
