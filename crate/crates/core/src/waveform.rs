use alloc::vec::Vec;

use crate::{Error, Result};

/// The only sample rate the pipeline accepts.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio at [`SAMPLE_RATE`] with finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate(sample_rate));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Clamp every sample into `[-1, 1]`.
    pub fn clamped(mut self) -> Self {
        for s in &mut self.samples {
            *s = s.clamp(-1.0, 1.0);
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_other_rates_and_nan() {
        assert_eq!(
            Waveform::new(vec![0.0], 44_100),
            Err(Error::SampleRate(44_100))
        );
        assert_eq!(
            Waveform::new(vec![0.0, f64::NAN], SAMPLE_RATE),
            Err(Error::NonFiniteSample(1))
        );
    }

    #[test]
    fn clamp() {
        let w = Waveform::new(vec![1.5, -2.0, 0.25], SAMPLE_RATE).unwrap();
        assert_eq!(w.clamped().samples(), &[1.0, -1.0, 0.25]);
    }
}
