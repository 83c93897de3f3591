//! Seeded harmonic-plus-noise "speech" for tests, demos and self-checks.
//!
//! A [`SyntheticSpeaker`] fixes a pitch range and three formant resonances.
//! Each utterance strings together syllables whose pitch contour and vowel
//! formants wander around the speaker's values, over a low noise floor.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Waveform, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeaker {
    /// Mean fundamental frequency in Hz.
    pub f0: f64,
    /// `(center Hz, bandwidth Hz)` for three formants.
    pub formants: [(f64, f64); 3],
    /// Per-octave spectral roll-off of the glottal source.
    pub tilt: f64,
    /// Standard deviation of the background noise floor.
    pub noise_floor: f64,
}

impl SyntheticSpeaker {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            f0: rng.random_range(90.0..240.0),
            formants: [
                (
                    rng.random_range(350.0..850.0),
                    rng.random_range(80.0..160.0),
                ),
                (
                    rng.random_range(1000.0..2300.0),
                    rng.random_range(100.0..220.0),
                ),
                (
                    rng.random_range(2400.0..3400.0),
                    rng.random_range(150.0..300.0),
                ),
            ],
            tilt: rng.random_range(0.5..0.9),
            noise_floor: rng.random_range(0.002..0.006),
        }
    }

    fn envelope(&self, freq: f64, formants: &[(f64, f64); 3]) -> f64 {
        let resonance: f64 = formants
            .iter()
            .map(|(c, bw)| {
                let d = (freq - c) / bw;
                1.0 / (1.0 + d * d)
            })
            .sum();
        let octaves = libm::log2(1.0 + freq / 100.0);
        (resonance + 0.02) * libm::pow(self.tilt, octaves)
    }

    /// An utterance of `seconds` seconds, peak-normalized to 0.6.
    pub fn utterance<R: Rng + ?Sized>(&self, rng: &mut R, seconds: f64) -> Waveform {
        let sr = f64::from(SAMPLE_RATE);
        let len = libm::round(seconds * sr) as usize;
        let mut out = vec![0.0; len];
        let nyquist = sr / 2.0 - 200.0;

        let mut pos = libm::round(rng.random_range(0.02..0.08) * sr) as usize;
        while pos < len {
            let syl_len = (libm::round(rng.random_range(0.12..0.3) * sr) as usize).min(len - pos);
            let pitch = self.f0 * rng.random_range(0.85..1.15);
            let glide = rng.random_range(-0.15..0.15);
            let mut vowel = self.formants;
            for (c, _) in &mut vowel {
                *c *= rng.random_range(0.85..1.15);
            }
            let harmonics = libm::floor(nyquist / (pitch * 1.2)) as usize;
            let amps: Vec<f64> = (1..=harmonics)
                .map(|h| self.envelope(h as f64 * pitch, &vowel))
                .collect();
            let mut phase = rng.random_range(0.0..2.0 * PI);
            for i in 0..syl_len {
                let u = i as f64 / syl_len as f64;
                let f = pitch * (1.0 + glide * u);
                phase += 2.0 * PI * f / sr;
                let s = libm::sin(PI * u);
                let gain = s * s;
                let mut v = 0.0;
                for (h, a) in amps.iter().enumerate() {
                    if (h + 1) as f64 * f < nyquist {
                        v += a * libm::sin((h + 1) as f64 * phase);
                    }
                }
                out[pos + i] += gain * v;
            }
            pos += syl_len + libm::round(rng.random_range(0.03..0.1) * sr) as usize;
        }

        let peak = out.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        if peak > 0.0 {
            for v in &mut out {
                *v *= 0.6 / peak;
            }
        }
        let floor = Normal::new(0.0, self.noise_floor).expect("valid std");
        for v in &mut out {
            *v += floor.sample(rng);
        }
        Waveform::new(out, SAMPLE_RATE).expect("synthetic samples are finite")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn deterministic_and_bounded() {
        let mut a = stream_rng(4, Stream::Synth);
        let mut b = stream_rng(4, Stream::Synth);
        let sa = SyntheticSpeaker::random(&mut a);
        let sb = SyntheticSpeaker::random(&mut b);
        assert_eq!(sa, sb);
        let wa = sa.utterance(&mut a, 0.75);
        let wb = sb.utterance(&mut b, 0.75);
        assert_eq!(wa, wb);
        assert_eq!(wa.len(), 12_000);
        assert!(wa.samples().iter().all(|v| v.abs() < 0.7));
        let energy: f64 = wa.samples().iter().map(|v| v * v).sum();
        assert!(energy > 1.0);
    }
}
