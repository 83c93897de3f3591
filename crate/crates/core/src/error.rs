use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("waveform too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("sample rate {0} Hz unsupported, expected 16000")]
    SampleRate(u32),
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("embedding is not unit norm (norm {0})")]
    NotUnitNorm(f64),
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("non-finite gradient for training sample {sample} at step {step}")]
    NonFiniteTrainingGradient { sample: usize, step: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
}
