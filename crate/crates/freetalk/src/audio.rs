//! Mono 16 kHz RIFF/WAVE files, 16-bit PCM or 32-bit IEEE float.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use freetalk_core::{Waveform, SAMPLE_RATE};

use crate::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    Pcm16,
    Float32,
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::Pcm16 => "pcm16",
            Encoding::Float32 => "float32",
        }
    }
}

impl std::str::FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pcm16" => Ok(Encoding::Pcm16),
            "float32" => Ok(Encoding::Float32),
            other => Err(format!(
                "unknown encoding {other:?}, expected pcm16 or float32"
            )),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("channel count {0} unsupported")]
    Channels(u16),
    #[error("sample rate {0} Hz unsupported, expected 16000")]
    SampleRate(u32),
    #[error("file is truncated")]
    Truncated,
    #[error("malformed WAV: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AudioError {
    pub fn kind(&self) -> &'static str {
        match self {
            AudioError::UnsupportedEncoding(_) => "unsupported_encoding",
            AudioError::Channels(_) => "channel_count",
            AudioError::SampleRate(_) => "sample_rate",
            AudioError::Truncated => "truncated",
            AudioError::Malformed(_) => "malformed",
            AudioError::Io(_) => "io",
        }
    }
}

impl From<hound::Error> for AudioError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                AudioError::Truncated
            }
            hound::Error::IoError(io) => AudioError::Io(io),
            hound::Error::FormatError(msg) => AudioError::Malformed(msg.into()),
            hound::Error::Unsupported => {
                AudioError::UnsupportedEncoding("unsupported WAV layout".into())
            }
            other => AudioError::Malformed(other.to_string()),
        }
    }
}

struct Layout {
    format_tag: u16,
    /// Whether the data chunk is shorter than its header declares.
    truncated: bool,
}

/// Walks the RIFF chunks for the format tag and the data chunk extent.
fn scan_layout(bytes: &[u8]) -> Result<Layout, AudioError> {
    if bytes.len() < 12 {
        return Err(AudioError::Truncated);
    }
    if &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Malformed("not a RIFF/WAVE file".into()));
    }
    let mut format_tag = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        if id == b"fmt " {
            let tag = bytes.get(body..body + 2).ok_or(AudioError::Truncated)?;
            format_tag = Some(u16::from_le_bytes([tag[0], tag[1]]));
        } else if id == b"data" {
            let format_tag = format_tag
                .ok_or_else(|| AudioError::Malformed("data chunk before fmt chunk".into()))?;
            return Ok(Layout {
                format_tag,
                truncated: body.saturating_add(size) > bytes.len(),
            });
        }
        pos = body.saturating_add(size).saturating_add(size & 1);
    }
    Err(AudioError::Truncated)
}

/// Decodes an in-memory WAV file.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform, AudioError> {
    let layout = scan_layout(bytes)?;
    if !matches!(layout.format_tag, FORMAT_PCM | FORMAT_FLOAT) {
        return Err(AudioError::UnsupportedEncoding(format!(
            "format code {:#06x}",
            layout.format_tag
        )));
    }
    if layout.truncated {
        return Err(AudioError::Truncated);
    }
    let mut reader = hound::WavReader::new(Cursor::new(bytes))?;
    let spec = reader.spec();
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {
            check_layout(spec)?;
            reader
                .samples::<i16>()
                .map(|s| s.map(|v| f64::from(v) / 32768.0))
                .collect::<Result<_, _>>()?
        }
        (hound::SampleFormat::Float, 32) => {
            check_layout(spec)?;
            reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<Result<_, _>>()?
        }
        (format, bits) => {
            let name = match format {
                hound::SampleFormat::Int => "PCM",
                hound::SampleFormat::Float => "float",
            };
            return Err(AudioError::UnsupportedEncoding(format!(
                "{bits}-bit {name}"
            )));
        }
    };
    Waveform::new(samples, spec.sample_rate).map_err(|e| AudioError::Malformed(e.to_string()))
}

fn check_layout(spec: hound::WavSpec) -> Result<(), AudioError> {
    if spec.channels != 1 {
        return Err(AudioError::Channels(spec.channels));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(AudioError::SampleRate(spec.sample_rate));
    }
    Ok(())
}

/// PCM16 code for a sample: clamp to `[-1, 1]`, scale by 32768, round.
pub fn quantize_pcm16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32768.0)
        .round()
        .clamp(-32768.0, 32767.0) as i16
}

/// Encodes a waveform as a canonical 44-byte-header WAV file with format
/// code 1 (PCM16) or 3 (float32).
pub fn encode_wav(waveform: &Waveform, encoding: Encoding) -> Vec<u8> {
    let (tag, width) = match encoding {
        Encoding::Pcm16 => (FORMAT_PCM, 2u16),
        Encoding::Float32 => (FORMAT_FLOAT, 4u16),
    };
    let data_len =
        u32::try_from(waveform.len() * usize::from(width)).expect("WAV data under 4 GiB");
    let rate = waveform.sample_rate();
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * u32::from(width)).to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&(width * 8).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &x in waveform.samples() {
        match encoding {
            Encoding::Pcm16 => out.extend_from_slice(&quantize_pcm16(x).to_le_bytes()),
            Encoding::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
        }
    }
    out
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let audio_err = |source| Error::Audio {
        path: path.to_path_buf(),
        source,
    };
    let bytes = fs::read(path).map_err(|e| audio_err(AudioError::Io(e)))?;
    decode_wav(&bytes).map_err(audio_err)
}

pub fn write_wav(waveform: &Waveform, path: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(waveform, encoding)).map_err(|e| Error::Audio {
        path: path.to_path_buf(),
        source: AudioError::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16_file(codes: &[i16], channels: u16, rate: u32) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        for c in codes {
            w.write_sample(*c).unwrap();
        }
        w.finalize().unwrap();
        cursor.into_inner()
    }

    #[test]
    fn pcm16_scaling() {
        let w = decode_wav(&pcm16_file(&[0, 16384, -32768], 1, 16000)).unwrap();
        assert_eq!(w.samples(), [0.0, 0.5, -1.0]);
    }

    #[test]
    fn float32_identity() {
        let w = Waveform::new(vec![0.25], 16000).unwrap();
        let back = decode_wav(&encode_wav(&w, Encoding::Float32)).unwrap();
        assert_eq!(back.samples(), [0.25]);
    }

    #[test]
    fn stereo_rejected() {
        let err = decode_wav(&pcm16_file(&[0, 0, 0, 0], 2, 16000)).unwrap_err();
        assert_eq!(err.to_string(), "channel count 2 unsupported");
    }

    #[test]
    fn wrong_rate_rejected() {
        let err = decode_wav(&pcm16_file(&[0, 0], 1, 44100)).unwrap_err();
        assert!(matches!(err, AudioError::SampleRate(44100)));
    }

    #[test]
    fn pcm16_clamps_and_rounds() {
        assert_eq!(quantize_pcm16(1.5), 32767);
        assert_eq!(quantize_pcm16(1.0), 32767);
        assert_eq!(quantize_pcm16(-1.7), -32768);
        assert_eq!(quantize_pcm16(0.5), 16384);
        let w = Waveform::new(vec![1.5, -0.3, 0.1234], 16000).unwrap();
        let back = decode_wav(&encode_wav(&w, Encoding::Pcm16)).unwrap();
        assert_eq!(back.samples()[0], 32767.0 / 32768.0);
        for (a, b) in w.clamped().samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn truncated_data_is_distinct() {
        let mut bytes = pcm16_file(&[1; 100], 1, 16000);
        bytes.truncate(bytes.len() - 11);
        let err = decode_wav(&bytes).unwrap_err();
        assert!(matches!(err, AudioError::Truncated), "{err:?}");
        assert!(matches!(
            decode_wav(&bytes[..8]),
            Err(AudioError::Truncated)
        ));
    }

    #[test]
    fn other_encodings_rejected() {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        let err = decode_wav(&cursor.into_inner()).unwrap_err();
        assert!(matches!(err, AudioError::UnsupportedEncoding(_)), "{err}");

        let mut alaw = pcm16_file(&[0; 4], 1, 16000);
        let fmt = alaw.windows(4).position(|w| w == b"fmt ").unwrap();
        alaw[fmt + 8] = 6;
        assert!(matches!(
            decode_wav(&alaw),
            Err(AudioError::UnsupportedEncoding(_))
        ));
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(
            decode_wav(b"definitely not a wave file"),
            Err(AudioError::Malformed(_))
        ));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let w = Waveform::new(vec![0.0; 4], 16000).unwrap();
        let err = write_wav(&w, "/nonexistent-dir/x.wav", Encoding::Pcm16).unwrap_err();
        assert_eq!(err.kind(), "io");
    }
}
