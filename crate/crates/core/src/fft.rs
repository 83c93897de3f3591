//! Radix-2 FFT and the real-input transforms built on it.
//!
//! Real transforms of length `n` run as a complex transform of length `n/2`
//! over the even/odd interleaved samples, then split the result.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// Complex FFT of a fixed power-of-two length.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex64>,
    bit_reverse: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Config(alloc::format!(
                "FFT length {n} is not a power of two"
            )));
        }
        let bits = n.trailing_zeros();
        let bit_reverse = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Ok(Self {
            n,
            twiddles,
            bit_reverse,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X[k] = sum x[j] e^{-2 pi i jk/n}`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    /// In-place unnormalized inverse transform.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.n, "buffer length must equal FFT length");
        for i in 0..self.n {
            let j = self.bit_reverse[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

/// Real-input FFT of even power-of-two length `n`, producing `n/2 + 1` bins.
#[derive(Debug, Clone)]
pub struct RealFft {
    n: usize,
    half: Fft,
    // e^{-2 pi i k / n} for k in 0..=n/2
    split: Vec<Complex64>,
}

impl RealFft {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Config(alloc::format!(
                "real FFT length {n} must be a power of two >= 2"
            )));
        }
        let half = Fft::new(n / 2)?;
        let split = (0..=n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Ok(Self { n, half, split })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// Scratch buffer of the size [`RealFft::forward`] and
    /// [`RealFft::inverse`] expect.
    pub fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.n / 2]
    }

    /// `out[k] = sum_j input[j] e^{-2 pi i jk/n}` for `k in 0..=n/2`.
    pub fn forward(&self, input: &[f64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        let m = self.n / 2;
        assert_eq!(input.len(), self.n);
        assert_eq!(out.len(), m + 1);
        for (j, z) in scratch.iter_mut().enumerate() {
            *z = Complex64::new(input[2 * j], input[2 * j + 1]);
        }
        self.half.forward(scratch);
        for k in 0..=m {
            let zk = scratch[k % m];
            let zc = scratch[(m - k) % m].conj();
            let even = (zk + zc) * 0.5;
            let odd = (zk - zc) * Complex64::new(0.0, -0.5);
            out[k] = even + self.split[k] * odd;
        }
        // Exactly real by symmetry; remove rounding residue.
        out[0].im = 0.0;
        out[m].im = 0.0;
    }

    /// Normalized inverse: `out[j] = (1/n) sum_k c_k Re(X[k] e^{2 pi i jk/n})`
    /// with the Hermitian extension implied. The imaginary parts of the DC
    /// and Nyquist bins are ignored.
    pub fn inverse(&self, bins: &[Complex64], out: &mut [f64], scratch: &mut [Complex64]) {
        let m = self.n / 2;
        assert_eq!(bins.len(), m + 1);
        assert_eq!(out.len(), self.n);
        let at = |k: usize| -> Complex64 {
            if k == 0 || k == m {
                Complex64::new(bins[k].re, 0.0)
            } else {
                bins[k]
            }
        };
        for (k, z) in scratch.iter_mut().enumerate() {
            let xk = at(k);
            let xc = at(m - k).conj();
            let even = (xk + xc) * 0.5;
            let odd = (xk - xc) * self.split[k].conj() * 0.5;
            *z = even + Complex64::new(0.0, 1.0) * odd;
        }
        self.half.inverse(scratch);
        let norm = 1.0 / m as f64;
        for (j, z) in scratch.iter().enumerate() {
            out[2 * j] = z.re * norm;
            out[2 * j + 1] = z.im * norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v * Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn complex_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 4, 8, 64, 256] {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let want = naive_dft(&x);
            let mut got = x.clone();
            Fft::new(n).unwrap().forward(&mut got);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).norm() < 1e-9 * n as f64, "n={n}");
            }
            Fft::new(n).unwrap().inverse(&mut got);
            for (a, b) in got.iter().zip(&x) {
                assert!((a / n as f64 - b).norm() < 1e-12 * n as f64);
            }
        }
    }

    #[test]
    fn real_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 4, 16, 1024] {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let want = naive_dft(&xc);
            let rfft = RealFft::new(n).unwrap();
            let mut scratch = rfft.scratch();
            let mut out = vec![Complex64::new(0.0, 0.0); rfft.bins()];
            rfft.forward(&x, &mut out, &mut scratch);
            for k in 0..rfft.bins() {
                assert!((out[k] - want[k]).norm() < 1e-9 * n as f64, "n={n} k={k}");
            }
            let mut back = vec![0.0; n];
            rfft.inverse(&out, &mut back, &mut scratch);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12 * n as f64);
            }
        }
    }

    #[test]
    fn inverse_ignores_imaginary_dc_and_nyquist() {
        let rfft = RealFft::new(8).unwrap();
        let mut scratch = rfft.scratch();
        let mut bins = vec![Complex64::new(0.0, 0.0); 5];
        bins[0] = Complex64::new(1.0, 3.0);
        bins[4] = Complex64::new(0.0, -2.0);
        let mut out = vec![0.0; 8];
        rfft.inverse(&bins, &mut out, &mut scratch);
        for v in out {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Fft::new(12).is_err());
        assert!(RealFft::new(1).is_err());
    }
}
