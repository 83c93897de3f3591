//! Finite-difference self-checks of the analytic gradients.

use freetalk_core::augment::AugmentDraw;
use freetalk_core::dsp::ComplexNoise;
use freetalk_core::embedder::{cosine_loss, SpeakerEmbedder, SurrogateEmbedder, MIN_EMBED_LEN};
use freetalk_core::matrix::RealMatrix;
use freetalk_core::rng::{stream_rng, Stream};
use freetalk_core::sample::{gaussian_noise, SampleConfig, SampleObjective};
use freetalk_core::synth::SyntheticSpeaker;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-3;
/// Coordinates with an analytic gradient below this are not compared.
pub const GRAD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteResult {
    fn new(suite: &'static str, errors: &[f64]) -> Self {
        let max_rel_error = errors.iter().copied().fold(0.0, f64::max);
        Self {
            suite,
            checked: errors.len(),
            max_rel_error,
            tolerance: TOLERANCE,
            passed: !errors.is_empty() && max_rel_error <= TOLERANCE,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Random broadband waveform: Gaussian samples at a random level.
fn random_waveform<R: Rng + ?Sized>(rng: &mut R, min_len: usize, max_len: usize) -> Vec<f64> {
    let len = rng.random_range(min_len..=max_len);
    let level = rng.random_range(0.05..0.5);
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            level * z
        })
        .collect()
}

/// Embedder input gradient against central differences on `coords` random
/// coordinates of each of `inputs` random waveforms, each compared with
/// the embedding of an unrelated waveform so the gradient does not vanish.
pub fn embedder_suite(
    seed: u64,
    inputs: usize,
    coords: usize,
) -> freetalk_core::Result<SuiteResult> {
    let mut rng = stream_rng(seed, Stream::SelfTest);
    let mut errors = Vec::new();
    for _ in 0..inputs {
        let embedder = SurrogateEmbedder::with_seed(rng.random())?;
        let x = random_waveform(&mut rng, MIN_EMBED_LEN, 16_000);
        let other = random_waveform(&mut rng, MIN_EMBED_LEN, 16_000);
        let reference = embedder.embed(&other)?;
        let (_, grad) = embedder.loss_input_grad(&x, &reference)?;

        let mut probe = x;
        for _ in 0..coords {
            let i = rng.random_range(0..probe.len());
            if grad[i].abs() <= GRAD_FLOOR {
                continue;
            }
            let orig = probe[i];
            probe[i] = orig + STEP;
            let up = cosine_loss(&reference, &embedder.embed(&probe)?);
            probe[i] = orig - STEP;
            let down = cosine_loss(&reference, &embedder.embed(&probe)?);
            probe[i] = orig;
            errors.push(relative_error(grad[i], (up - down) / (2.0 * STEP)));
        }
    }
    Ok(SuiteResult::new("embedder", &errors))
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexNoise {
    let real = RealMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    let imag = RealMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    ComplexNoise { real, imag }
}

fn shifted(noise: &ComplexNoise, dir: &ComplexNoise, t: f64) -> ComplexNoise {
    let mut out = noise.clone();
    out.real.add_scaled(t, &dir.real);
    out.imag.add_scaled(t, &dir.imag);
    out
}

/// Directional derivatives of the sample-wise loss with respect to the
/// noise, augmentation frozen to one draw, against central differences.
pub fn chain_suite(seed: u64, directions: usize) -> freetalk_core::Result<SuiteResult> {
    let mut rng = stream_rng(seed, Stream::SelfTest);
    let embedder = SurrogateEmbedder::with_seed(rng.random())?;
    let speaker = SyntheticSpeaker::random(&mut rng);
    let x = speaker.utterance(&mut rng, 1.0);
    let cfg = SampleConfig {
        seed,
        ..SampleConfig::default()
    };
    let objective = SampleObjective::new(&embedder, &x, &cfg)?;
    let (rows, cols) = objective.noise_shape();
    let noise = gaussian_noise(&mut stream_rng(seed, Stream::NoiseInit), rows, cols);
    let draw = AugmentDraw::draw(&mut stream_rng(seed, Stream::Augment), x.len());
    let (_, grad) = objective.loss_and_grad(&noise, Some(&draw))?;

    let mut errors = Vec::with_capacity(directions);
    for _ in 0..directions {
        let dir = random_direction(&mut rng, rows, cols);
        let analytic = grad.real.dot(&dir.real) + grad.imag.dot(&dir.imag);
        let up = objective.loss(&shifted(&noise, &dir, STEP), Some(&draw))?;
        let down = objective.loss(&shifted(&noise, &dir, -STEP), Some(&draw))?;
        errors.push(relative_error(analytic, (up - down) / (2.0 * STEP)));
    }
    Ok(SuiteResult::new("full_chain", &errors))
}
