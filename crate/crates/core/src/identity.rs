//! Identity-wise protection: one universal `F x l` noise patch per speaker.
//!
//! Application splits the spectrogram into `P = floor(T / l)` blocks of `l`
//! frames, selects each block with probability `1 - r` (at least one block
//! is always selected), adds `lambda * patch` to the selected blocks, runs a
//! Wiener filter and resynthesizes. Frames past `P * l` are never touched;
//! inputs shorter than one block receive the patch cropped to their length.
//!
//! Training follows a two-stage interpolated gradient: for each utterance
//! and each of `K` neighborhood draws `delta' = delta + N(0, eps^2)`, take
//! the gradient `g1` at `delta'`, an inner Adam step to `delta*`, the
//! gradient `g2` at `delta*`, and accumulate `(1 - gamma) g1 + gamma g2`,
//! averaged over the draws. The sum over utterances drives an outer Adam
//! update. Frame masks are redrawn for every evaluation and treated as
//! constants; the Wiener gains are frozen in the backward pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::AugmentDraw;
use crate::dsp::{apply_gains, wiener_gains, ComplexNoise, Spectrogram, Stft, StftConfig};
use crate::embedder::{Embedding, SpeakerEmbedder, MIN_EMBED_LEN};
use crate::matrix::RealMatrix;
use crate::optim::AdamState;
use crate::rng::{stream_rng, Stream};
use crate::sample::gaussian_noise;
use crate::{Error, Result, Waveform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityTrainConfig {
    /// Patch width `l` in STFT frames.
    pub frame_len: usize,
    pub lambda: f64,
    /// Probability `r` that a block is left clean.
    pub mask_ratio: f64,
    pub steps: usize,
    /// Neighborhood draws `K` per utterance and step.
    pub neighborhood_samples: usize,
    /// Standard deviation of the neighborhood draws.
    pub neighborhood_sd: f64,
    /// Interpolation weight `gamma` between the two gradient stages.
    pub interp_weight: f64,
    pub inner_lr: f64,
    pub lr: f64,
    /// Apply random augmentation before embedding during training.
    pub augment: bool,
    pub seed: u64,
    pub stft: StftConfig,
}

impl Default for IdentityTrainConfig {
    fn default() -> Self {
        Self {
            frame_len: 30,
            lambda: 0.3,
            mask_ratio: 0.5,
            steps: 100,
            neighborhood_samples: 4,
            neighborhood_sd: 0.01,
            interp_weight: 0.5,
            inner_lr: 0.1,
            lr: 0.1,
            augment: false,
            seed: 0,
            stft: StftConfig::default(),
        }
    }
}

fn check_mask_ratio(r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Config(format!(
            "mask ratio must be in [0, 1), got {r}"
        )));
    }
    Ok(())
}

impl IdentityTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 {
            return Err(Error::Config("frame length must be >= 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "noise level must be positive, got {}",
                self.lambda
            )));
        }
        check_mask_ratio(self.mask_ratio)?;
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.neighborhood_samples == 0 {
            return Err(Error::Config("neighborhood samples must be >= 1".into()));
        }
        if !(self.neighborhood_sd >= 0.0 && self.neighborhood_sd.is_finite()) {
            return Err(Error::Config(format!(
                "neighborhood sd must be >= 0, got {}",
                self.neighborhood_sd
            )));
        }
        if !(0.0..=1.0).contains(&self.interp_weight) {
            return Err(Error::Config(format!(
                "interpolation weight must be in [0, 1], got {}",
                self.interp_weight
            )));
        }
        for (name, lr) in [("inner lr", self.inner_lr), ("lr", self.lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        self.stft.validate()
    }
}

/// A trained universal perturbation and everything needed to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityPatch {
    pub noise: ComplexNoise,
    pub lambda: f64,
    pub mask_ratio: f64,
    pub frame_len: usize,
    pub stft: StftConfig,
    pub embedder_seed: u64,
}

impl IdentityPatch {
    pub fn new(
        noise: ComplexNoise,
        lambda: f64,
        mask_ratio: f64,
        stft: StftConfig,
        embedder_seed: u64,
    ) -> Result<Self> {
        stft.validate()?;
        let (rows, cols) = noise.shape();
        if rows != stft.bins() {
            return Err(Error::Shape(format!(
                "patch has {rows} rows, STFT config needs {}",
                stft.bins()
            )));
        }
        if cols == 0 {
            return Err(Error::Shape("patch has no columns".into()));
        }
        if !noise.is_finite() {
            return Err(Error::Shape("patch contains non-finite values".into()));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Config(format!("invalid noise level {lambda}")));
        }
        check_mask_ratio(mask_ratio)?;
        Ok(Self {
            noise,
            lambda,
            mask_ratio,
            frame_len: cols,
            stft,
            embedder_seed,
        })
    }
}

/// Which columns of a spectrogram receive the patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FramePlan {
    /// One flag per full block of `frame_len` frames.
    Blocks(Vec<bool>),
    /// Fewer frames than one block: the patch is cropped to this many frames.
    Cropped(usize),
}

impl FramePlan {
    /// Draws a plan for a spectrogram with `frames` columns.
    pub fn draw<R: Rng + ?Sized>(
        frames: usize,
        frame_len: usize,
        mask_ratio: f64,
        rng: &mut R,
    ) -> Self {
        let blocks = frames / frame_len;
        if blocks == 0 {
            return FramePlan::Cropped(frames);
        }
        let mut mask: Vec<bool> = (0..blocks)
            .map(|_| rng.random::<f64>() >= mask_ratio)
            .collect();
        if mask.iter().all(|m| !m) {
            mask[rng.random_range(0..blocks)] = true;
        }
        FramePlan::Blocks(mask)
    }

    /// Disjoint `(first frame, patch column count)` spans that get the patch.
    pub fn spans(&self, frame_len: usize) -> Vec<(usize, usize)> {
        match self {
            FramePlan::Blocks(mask) => mask
                .iter()
                .enumerate()
                .filter(|(_, on)| **on)
                .map(|(i, _)| (i * frame_len, frame_len))
                .collect(),
            FramePlan::Cropped(frames) => vec![(0, *frames)],
        }
    }
}

fn add_patch(spec: &mut Spectrogram, noise: &ComplexNoise, lambda: f64, spans: &[(usize, usize)]) {
    for &(first, width) in spans {
        for f in 0..spec.rows() {
            for c in 0..width {
                spec.add(f, first + c, noise.get(f, c) * lambda);
            }
        }
    }
}

/// Applies `patch` to `waveform` with frame selection drawn from `rng`.
pub fn add_freq_noise<R: Rng + ?Sized>(
    waveform: &Waveform,
    patch: &IdentityPatch,
    rng: &mut R,
) -> Result<Waveform> {
    let stft = Stft::new(patch.stft)?;
    let clean = stft.forward(waveform.samples())?;
    let plan = FramePlan::draw(clean.frames(), patch.frame_len, patch.mask_ratio, rng);
    let mut spec = clean;
    add_patch(
        &mut spec,
        &patch.noise,
        patch.lambda,
        &plan.spans(patch.frame_len),
    );
    let gains = wiener_gains(&spec);
    apply_gains(&mut spec, &gains);
    let out = stft.inverse(&spec, waveform.len())?;
    Ok(Waveform::new(out, waveform.sample_rate())?.clamped())
}

/// The per-utterance training objective with its clean spectrogram cached.
pub struct PatchObjective<'a, E: SpeakerEmbedder + ?Sized> {
    embedder: &'a E,
    stft: &'a Stft,
    clean: Spectrogram,
    reference: Embedding,
    lambda: f64,
    len: usize,
}

impl<'a, E: SpeakerEmbedder + ?Sized> PatchObjective<'a, E> {
    pub fn new(embedder: &'a E, stft: &'a Stft, waveform: &Waveform, lambda: f64) -> Result<Self> {
        let x = waveform.samples();
        if x.len() < MIN_EMBED_LEN {
            return Err(Error::TooShort {
                len: x.len(),
                min: MIN_EMBED_LEN,
            });
        }
        Ok(Self {
            embedder,
            stft,
            clean: stft.forward(x)?,
            reference: embedder.embed(x)?,
            lambda,
            len: x.len(),
        })
    }

    pub fn frames(&self) -> usize {
        self.clean.frames()
    }

    pub fn reference(&self) -> &Embedding {
        &self.reference
    }

    /// Cosine loss of the protected utterance under `plan` and its gradient
    /// with respect to the patch.
    pub fn loss_and_grad(
        &self,
        noise: &ComplexNoise,
        plan: &FramePlan,
        augment: Option<&AugmentDraw>,
    ) -> Result<(f64, ComplexNoise)> {
        let (rows, cols) = noise.shape();
        let spans = plan.spans(cols);
        let mut spec = self.clean.clone();
        add_patch(&mut spec, noise, self.lambda, &spans);
        let gains = wiener_gains(&spec);
        apply_gains(&mut spec, &gains);
        let raw = self.stft.inverse(&spec, self.len)?;
        let clamped: Vec<f64> = raw.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let input = match augment {
            Some(d) => d.apply(&clamped),
            None => clamped,
        };
        let (loss, grad) = self.embedder.loss_input_grad(&input, &self.reference)?;
        let mut grad = match augment {
            Some(d) => d.pull_back(&grad),
            None => grad,
        };
        for (g, v) in grad.iter_mut().zip(&raw) {
            if v.abs() > 1.0 {
                *g = 0.0;
            }
        }
        let mut grad_spec = self.stft.inverse_adjoint(&grad, spec.frames(), self.len)?;
        apply_gains(&mut grad_spec, &gains);

        let mut out = ComplexNoise::zeros(rows, cols);
        for &(first, width) in &spans {
            for f in 0..rows {
                for c in 0..width {
                    let g = grad_spec.get(f, first + c) * self.lambda;
                    let (r, i) = (out.real.get(f, c), out.imag.get(f, c));
                    out.real.set(f, c, r + g.re);
                    out.imag.set(f, c, i + g.im);
                }
            }
        }
        Ok((loss, out))
    }
}

/// Accumulated gradient for one outer step, with the two stages kept
/// separately alongside their interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientParts {
    pub combined: ComplexNoise,
    pub first_stage: ComplexNoise,
    pub second_stage: ComplexNoise,
    /// Mean first-stage loss over utterances and draws.
    pub mean_loss: f64,
}

fn mix_stages(
    mix: &mut RealMatrix,
    first: &mut RealMatrix,
    second: &mut RealMatrix,
    g1: &RealMatrix,
    g2: &RealMatrix,
    gamma: f64,
) {
    let (g1, g2) = (g1.as_slice(), g2.as_slice());
    let first = first.as_mut_slice();
    let second = second.as_mut_slice();
    for (i, m) in mix.as_mut_slice().iter_mut().enumerate() {
        *m += (1.0 - gamma) * g1[i] + gamma * g2[i];
        first[i] += g1[i];
        second[i] += g2[i];
    }
}

fn accumulate(acc: &mut ComplexNoise, scale: f64, g: &ComplexNoise) {
    acc.real.add_scaled(scale, &g.real);
    acc.imag.add_scaled(scale, &g.imag);
}

/// Stateful patch trainer; one call to [`PatchTrainer::step`] is one outer
/// iteration over the whole training set.
pub struct PatchTrainer<'a, E: SpeakerEmbedder + ?Sized> {
    cfg: IdentityTrainConfig,
    embedder_seed: u64,
    samples: Vec<PatchObjective<'a, E>>,
    noise: ComplexNoise,
    adam_real: AdamState,
    adam_imag: AdamState,
    neighborhood_rng: ChaCha8Rng,
    mask_rng: ChaCha8Rng,
    augment_rng: ChaCha8Rng,
    step: usize,
}

impl<'a, E: SpeakerEmbedder + ?Sized> PatchTrainer<'a, E> {
    pub fn new(
        train_set: &[Waveform],
        cfg: IdentityTrainConfig,
        embedder: &'a E,
        stft: &'a Stft,
    ) -> Result<Self> {
        cfg.validate()?;
        if train_set.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if stft.config() != &cfg.stft {
            return Err(Error::Config("STFT engine does not match config".into()));
        }
        let samples = train_set
            .iter()
            .map(|w| PatchObjective::new(embedder, stft, w, cfg.lambda))
            .collect::<Result<Vec<_>>>()?;
        let rows = cfg.stft.bins();
        let noise = gaussian_noise(
            &mut stream_rng(cfg.seed, Stream::NoiseInit),
            rows,
            cfg.frame_len,
        );
        let n = rows * cfg.frame_len;
        Ok(Self {
            cfg,
            embedder_seed: embedder.seed(),
            samples,
            noise,
            adam_real: AdamState::new(n, cfg.lr),
            adam_imag: AdamState::new(n, cfg.lr),
            neighborhood_rng: stream_rng(cfg.seed, Stream::Neighborhood),
            mask_rng: stream_rng(cfg.seed, Stream::TrainMask),
            augment_rng: stream_rng(cfg.seed, Stream::Augment),
            step: 0,
        })
    }

    pub fn noise(&self) -> &ComplexNoise {
        &self.noise
    }

    pub fn set_noise(&mut self, noise: ComplexNoise) -> Result<()> {
        if noise.shape() != self.noise.shape() {
            return Err(Error::Shape(format!(
                "noise {:?} vs patch {:?}",
                noise.shape(),
                self.noise.shape()
            )));
        }
        self.noise = noise;
        Ok(())
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn samples(&self) -> &[PatchObjective<'a, E>] {
        &self.samples
    }

    fn evaluate(&mut self, index: usize, noise: &ComplexNoise) -> Result<(f64, ComplexNoise)> {
        let sample = &self.samples[index];
        let plan = FramePlan::draw(
            sample.frames(),
            self.cfg.frame_len,
            self.cfg.mask_ratio,
            &mut self.mask_rng,
        );
        let draw = self
            .cfg
            .augment
            .then(|| AugmentDraw::draw(&mut self.augment_rng, sample.len));
        let (loss, grad) = sample.loss_and_grad(noise, &plan, draw.as_ref())?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::NonFiniteTrainingGradient {
                sample: index,
                step: self.step,
            });
        }
        Ok((loss, grad))
    }

    /// Gradient for the next outer update at the current patch. Consumes
    /// randomness but does not change the patch.
    pub fn interpolated_gradient(&mut self) -> Result<GradientParts> {
        let (rows, cols) = self.noise.shape();
        let gamma = self.cfg.interp_weight;
        let k = self.cfg.neighborhood_samples;
        let inv_k = 1.0 / k as f64;
        let neighborhood = Normal::new(0.0, self.cfg.neighborhood_sd).expect("validated sd");
        let mut combined = ComplexNoise::zeros(rows, cols);
        let mut first_stage = ComplexNoise::zeros(rows, cols);
        let mut second_stage = ComplexNoise::zeros(rows, cols);
        let mut loss_sum = 0.0;

        for index in 0..self.samples.len() {
            let mut mix = ComplexNoise::zeros(rows, cols);
            let mut first = ComplexNoise::zeros(rows, cols);
            let mut second = ComplexNoise::zeros(rows, cols);
            for _ in 0..k {
                let mut nearby = self.noise.clone();
                if self.cfg.neighborhood_sd > 0.0 {
                    for v in nearby
                        .real
                        .as_mut_slice()
                        .iter_mut()
                        .chain(nearby.imag.as_mut_slice())
                    {
                        *v += neighborhood.sample(&mut self.neighborhood_rng);
                    }
                }
                let (loss, g1) = self.evaluate(index, &nearby)?;
                loss_sum += loss;

                let mut projected = nearby;
                let n = rows * cols;
                AdamState::new(n, self.cfg.inner_lr)
                    .step(projected.real.as_mut_slice(), g1.real.as_slice())?;
                AdamState::new(n, self.cfg.inner_lr)
                    .step(projected.imag.as_mut_slice(), g1.imag.as_slice())?;
                let (_, g2) = self.evaluate(index, &projected)?;

                mix_stages(
                    &mut mix.real,
                    &mut first.real,
                    &mut second.real,
                    &g1.real,
                    &g2.real,
                    gamma,
                );
                mix_stages(
                    &mut mix.imag,
                    &mut first.imag,
                    &mut second.imag,
                    &g1.imag,
                    &g2.imag,
                    gamma,
                );
            }
            accumulate(&mut combined, inv_k, &mix);
            accumulate(&mut first_stage, inv_k, &first);
            accumulate(&mut second_stage, inv_k, &second);
        }
        Ok(GradientParts {
            combined,
            first_stage,
            second_stage,
            mean_loss: loss_sum / (self.samples.len() * k) as f64,
        })
    }

    /// One outer Adam update. Returns the mean first-stage loss.
    pub fn step(&mut self) -> Result<f64> {
        let parts = self.interpolated_gradient()?;
        self.adam_real.step(
            self.noise.real.as_mut_slice(),
            parts.combined.real.as_slice(),
        )?;
        self.adam_imag.step(
            self.noise.imag.as_mut_slice(),
            parts.combined.imag.as_slice(),
        )?;
        self.step += 1;
        Ok(parts.mean_loss)
    }

    pub fn patch(&self) -> Result<IdentityPatch> {
        IdentityPatch::new(
            self.noise.clone(),
            self.cfg.lambda,
            self.cfg.mask_ratio,
            self.cfg.stft,
            self.embedder_seed,
        )
    }
}

/// Trains a patch for `cfg.steps` outer iterations, calling `on_step` with
/// the step index and mean training loss after each one.
pub fn train_patch<E: SpeakerEmbedder + ?Sized>(
    train_set: &[Waveform],
    cfg: &IdentityTrainConfig,
    embedder: &E,
    mut on_step: impl FnMut(usize, f64),
) -> Result<IdentityPatch> {
    let stft = Stft::new(cfg.stft)?;
    let mut trainer = PatchTrainer::new(train_set, *cfg, embedder, &stft)?;
    for i in 0..cfg.steps {
        let loss = trainer.step()?;
        on_step(i, loss);
    }
    trainer.patch()
}
