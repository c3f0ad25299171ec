//! Mono WAV reading and writing (16-bit PCM or 32-bit float).

use std::io::{Read, Seek, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::resample::resample;
use crate::error::{Error, Result};

pub const ENGINE_RATE: u32 = 16_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RatePolicy {
    /// Reject any file that is not at the engine rate.
    #[default]
    Reject,
    /// Convert to the engine rate.
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    Pcm16,
    #[default]
    Float32,
}

fn wav_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn read_from<R: Read>(reader: R, policy: RatePolicy, label: &Path) -> Result<Vec<f64>> {
    let mut wav = hound::WavReader::new(reader).map_err(|e| wav_err(label, e))?;
    let spec = wav.spec();
    if spec.channels != 1 {
        return Err(wav_err(label, format!("expected mono, found {} channels", spec.channels)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => wav
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(label, e))?,
        (hound::SampleFormat::Float, 32) => wav
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(label, e))?,
        (fmt, bits) => {
            return Err(wav_err(label, format!("unsupported sample format {fmt:?}/{bits} bits")))
        }
    };
    if spec.sample_rate != ENGINE_RATE {
        return match policy {
            RatePolicy::Reject => Err(Error::SampleRate {
                found: spec.sample_rate,
                expected: ENGINE_RATE,
            }),
            RatePolicy::Resample => Ok(resample(&samples, spec.sample_rate, ENGINE_RATE)),
        };
    }
    Ok(samples)
}

pub fn read_wav(path: impl AsRef<Path>, policy: RatePolicy) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(std::io::BufReader::new(file), policy, path)
}

pub fn write_to<W: Write + Seek>(
    writer: W,
    samples: &[f64],
    sample_rate: u32,
    format: SampleFormat,
    label: &Path,
) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut w = hound::WavWriter::new(writer, spec).map_err(|e| wav_err(label, e))?;
    for &s in samples {
        match format {
            SampleFormat::Pcm16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                w.write_sample(v)
            }
            SampleFormat::Float32 => w.write_sample(s as f32),
        }
        .map_err(|e| wav_err(label, e))?;
    }
    w.finalize().map_err(|e| wav_err(label, e))
}

pub fn write_wav(
    path: impl AsRef<Path>,
    samples: &[f64],
    sample_rate: u32,
    format: SampleFormat,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(std::io::BufWriter::new(file), samples, sample_rate, format, path)
}
