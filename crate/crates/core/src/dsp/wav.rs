use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sample encoding used by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => {
            Error::CorruptHeader(format!("{}: {io}", path.display()))
        }
        hound::Error::FormatError(msg) => {
            Error::CorruptHeader(format!("{}: {msg}", path.display()))
        }
        hound::Error::Unsupported => Error::UnsupportedFormat(format!(
            "{}: compression code is neither PCM (1) nor IEEE float (3)",
            path.display()
        )),
        other => Error::CorruptHeader(format!("{}: {other}", path.display())),
    }
}

/// Reads a PCM16 or float32 RIFF/WAVE file, downmixing stereo by channel mean.
/// PCM16 samples are scaled by 1/32768.
pub fn load_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<Waveform<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader =
        hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {channels} channels (mono or stereo only)",
            path.display()
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {bits}-bit {fmt:?} samples (PCM16 or float32 only)",
                path.display()
            )))
        }
    }
    .map_err(|e| map_hound(path, e))?;
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let samples = interleaved
        .chunks(channels)
        .map(|frame| T::of(frame.iter().sum::<f64>() / channels as f64))
        .collect();
    Ok(Waveform::new(samples, spec.sample_rate))
}

fn write_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::UnsupportedFormat(format!("{}: {other}", path.display())),
    }
}

/// Writes mono audio. PCM16 output rounds `x · 32768` and clamps to the i16 range.
pub fn write_wav<T: Scalar>(
    path: impl AsRef<Path>,
    wave: &Waveform<T>,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: bits,
        sample_format: format,
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = hound::WavWriter::new(std::io::BufWriter::new(file), spec)
        .map_err(|e| write_err(path, e))?;
    for &s in &wave.samples {
        let r = match encoding {
            WavEncoding::Pcm16 => {
                let v = (s.as_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                w.write_sample(v)
            }
            WavEncoding::Float32 => w.write_sample(s.as_f64() as f32),
        };
        r.map_err(|e| write_err(path, e))?;
    }
    w.finalize().map_err(|e| write_err(path, e))
}
