//! WAV file I/O.
//!
//! Reads mono or multichannel PCM WAV (16-bit integer and 32-bit float);
//! multichannel input is downmixed by channel mean. Writing is used by the
//! `synth` subcommand for noise/RIR banks and synthetic corpora.

use std::path::Path;

use crate::frontend::Waveform;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("wav: {0}")]
    Codec(#[from] hound::Error),
    #[error("unsupported wav format: {bits} bit {format}")]
    Unsupported { bits: u16, format: &'static str },
    #[error("empty audio stream: {0}")]
    Empty(String),
}

/// Read a WAV file into a mono [`Waveform`] at the file's native rate.
pub fn read_wav(path: &Path) -> Result<Waveform, WavError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()?,
        (format, bits) => {
            return Err(WavError::Unsupported {
                bits,
                format: match format {
                    hound::SampleFormat::Int => "int",
                    hound::SampleFormat::Float => "float",
                },
            })
        }
    };

    if interleaved.is_empty() {
        return Err(WavError::Empty(path.display().to_string()));
    }

    let samples = downmix(&interleaved, channels);
    Ok(Waveform {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Downmix interleaved frames to mono by channel mean.
pub fn downmix(interleaved: &[f64], channels: usize) -> Vec<f64> {
    assert!(channels >= 1);
    if channels == 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / frame.len() as f64)
        .collect()
}

/// Write a mono waveform as 32-bit float WAV (lossless for bank files).
pub fn write_wav_f32(path: &Path, w: &Waveform) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &w.samples {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Write a mono waveform as 16-bit PCM WAV, clamping to [-1, 1].
pub fn write_wav_i16(path: &Path, w: &Waveform) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Number of samples and native rate without decoding the payload.
pub fn wav_info(path: &Path) -> Result<(u32, u32), WavError> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    Ok((reader.duration(), spec.sample_rate))
}

/// Read a sample range `[start, start + len)` of a mono-downmixed WAV.
/// The range is clamped to the file length.
pub fn read_wav_range(path: &Path, start: u32, len: u32) -> Result<Waveform, WavError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let total = reader.duration();
    let start = start.min(total);
    let take = len.min(total - start) as usize * channels;
    reader.seek(start)?;

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .take(take)
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .take(take)
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()?,
        (format, bits) => {
            return Err(WavError::Unsupported {
                bits,
                format: match format {
                    hound::SampleFormat::Int => "int",
                    hound::SampleFormat::Float => "float",
                },
            })
        }
    };

    if interleaved.is_empty() {
        return Err(WavError::Empty(path.display().to_string()));
    }

    Ok(Waveform {
        samples: downmix(&interleaved, channels),
        sample_rate: spec.sample_rate,
    })
}
