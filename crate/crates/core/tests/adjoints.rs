use freetalk_core::augment::AugmentDraw;
use freetalk_core::dsp::{smooth_rows, smooth_rows_adjoint, Spectrogram, Stft, StftConfig};
use freetalk_core::matrix::RealMatrix;
use freetalk_core::rng::{stream_rng, Stream};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn signal(seed: u64, len: usize) -> Vec<f64> {
    let mut r = stream_rng(seed, Stream::SelfTest);
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn spectrogram(seed: u64, frames: usize, len: usize) -> Spectrogram {
    let cfg = StftConfig::default();
    let mut r = stream_rng(seed, Stream::SelfTest);
    let mut s = Spectrogram::zeros(cfg, frames, len);
    for v in s.as_mut_slice() {
        *v = Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cdot(a: &Spectrogram, b: &Spectrogram) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

fn close(lhs: f64, rhs: f64) -> bool {
    (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stft_adjoint_any_length(len in 1024usize..9000, seed in any::<u64>()) {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let x = signal(seed, len);
        let sx = stft.forward(&x).unwrap();
        let g = spectrogram(seed ^ 1, sx.frames(), len);
        let back = stft.forward_adjoint(&g);
        prop_assert_eq!(back.len(), len);
        prop_assert!(close(cdot(&sx, &g), dot(&x, &back)));
    }

    #[test]
    fn istft_adjoint_any_length(len in 1024usize..9000, seed in any::<u64>()) {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let frames = StftConfig::default().frames(len);
        let s = spectrogram(seed, frames, len);
        let y = stft.inverse(&s, len).unwrap();
        let g = signal(seed ^ 2, len);
        let back = stft.inverse_adjoint(&g, frames, len).unwrap();
        prop_assert!(close(dot(&y, &g), cdot(&s, &back)));
    }

    #[test]
    fn smoothing_adjoint(cols in 1usize..40, k in prop::sample::select(vec![1usize, 3, 5, 7]), seed in any::<u64>()) {
        let a = RealMatrix::from_vec(7, cols, signal(seed, 7 * cols)).unwrap();
        let b = RealMatrix::from_vec(7, cols, signal(seed ^ 3, 7 * cols)).unwrap();
        prop_assert!(close(smooth_rows(&a, k).dot(&b), a.dot(&smooth_rows_adjoint(&b, k))));
    }

    #[test]
    fn augmentation_adjoint(len in 1usize..5000, seed in any::<u64>()) {
        let draw = AugmentDraw::draw(&mut stream_rng(seed, Stream::Augment), len);
        let x = signal(seed ^ 4, len);
        let g = signal(seed ^ 5, len);
        // The additive noise is a constant offset, so the linear part is apply(x) - apply(0).
        let offset = draw.apply(&vec![0.0; len]);
        let lin: Vec<f64> = draw.apply(&x).iter().zip(&offset).map(|(a, b)| a - b).collect();
        prop_assert!(close(dot(&lin, &g), dot(&x, &draw.pull_back(&g))));
    }
}
