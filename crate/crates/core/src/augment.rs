//! Random waveform augmentation applied before embedding during
//! optimization: additive Gaussian noise, a zero-filled time shift, then a
//! volume scale. For a fixed draw the chain is affine in the input, and
//! [`AugmentDraw::pull_back`] is the exact adjoint of its linear part.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const NOISE_STD: f64 = 0.01;
pub const SHIFT_FRACTION: f64 = 0.1;
pub const SCALE_RANGE: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentDraw {
    pub noise: Vec<f64>,
    /// Positive moves content later in time.
    pub shift: isize,
    pub scale: f64,
}

/// Largest admissible `|shift|` for a signal of `len` samples.
pub fn max_shift(len: usize) -> isize {
    libm::floor(SHIFT_FRACTION * len as f64) as isize
}

impl AugmentDraw {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        assert!(len > 0, "augmentation needs a non-empty signal");
        let normal = Normal::new(0.0, NOISE_STD).expect("valid std");
        let noise = (0..len).map(|_| normal.sample(rng)).collect();
        let bound = SHIFT_FRACTION * len as f64;
        let limit = max_shift(len);
        let shift = if bound > 0.0 {
            (libm::floor(rng.random_range(-bound..bound)) as isize).clamp(-limit, limit)
        } else {
            0
        };
        let scale = rng.random_range(SCALE_RANGE.0..SCALE_RANGE.1);
        Self {
            noise,
            shift,
            scale,
        }
    }

    /// The draw that leaves every signal unchanged.
    pub fn identity(len: usize) -> Self {
        Self {
            noise: vec![0.0; len],
            shift: 0,
            scale: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    /// `scale * shift(x + noise)`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.noise.len(), "draw length mismatch");
        let len = x.len();
        let mut out = vec![0.0; len];
        for (i, o) in out.iter_mut().enumerate() {
            let src = i as isize - self.shift;
            if (0..len as isize).contains(&src) {
                let s = src as usize;
                *o = self.scale * (x[s] + self.noise[s]);
            }
        }
        out
    }

    /// Adjoint of the linear part of [`AugmentDraw::apply`]: scale, then
    /// shift back. Gradient at positions that were zero-filled is dropped.
    pub fn pull_back(&self, grad_out: &[f64]) -> Vec<f64> {
        assert_eq!(grad_out.len(), self.noise.len(), "draw length mismatch");
        let len = grad_out.len();
        let mut out = vec![0.0; len];
        for (s, o) in out.iter_mut().enumerate() {
            let dst = s as isize + self.shift;
            if (0..len as isize).contains(&dst) {
                *o = self.scale * grad_out[dst as usize];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn draw(shift: isize, scale: f64, len: usize) -> AugmentDraw {
        AugmentDraw {
            noise: vec![0.0; len],
            shift,
            scale,
        }
    }

    #[test]
    fn hand_evaluated_shifts() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(draw(0, 1.0, 4).apply(&x), x);
        assert_eq!(draw(2, 1.0, 4).apply(&x), [0.0, 0.0, 1.0, 2.0]);
        assert_eq!(draw(-1, 2.0, 4).apply(&x), [4.0, 6.0, 8.0, 0.0]);
    }

    #[test]
    fn pull_back_simple_cases() {
        let g = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(draw(0, 1.0, 4).pull_back(&g), g);
        assert_eq!(draw(0, 2.0, 4).pull_back(&g), [2.0, -4.0, 1.0, 6.0]);
        assert_eq!(draw(2, 1.0, 4).pull_back(&g), [0.5, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_draw() {
        let x = [0.3, -0.1, 0.9];
        let d = AugmentDraw::identity(3);
        assert_eq!(d.apply(&x), x);
        assert_eq!(d.pull_back(&x), x);
    }

    #[test]
    fn draws_respect_support() {
        let mut rng = stream_rng(1, Stream::Augment);
        for len in [1usize, 9, 15, 100, 16_001] {
            for _ in 0..200 {
                let d = AugmentDraw::draw(&mut rng, len);
                assert_eq!(d.len(), len);
                assert!((d.shift.unsigned_abs() as f64) <= 0.1 * len as f64);
                assert!((0.8..=1.2).contains(&d.scale));
            }
        }
    }
}
