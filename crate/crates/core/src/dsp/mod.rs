//! Audio ingestion and the log-mel front-end that feeds the networks.

mod spectral;
mod wav;

pub use spectral::{
    hz_to_mel, log_mel, mel_band_edges, mel_center_frequencies, mel_filterbank, mel_to_hz,
    patch_starts, patchify, resample, stft_magnitude,
};
pub use wav::{load_wav, write_wav, WavEncoding};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Front-end parameters. All fields are overridable; the defaults describe a
/// ~3 s patch of 96 mel bands at 16 kHz.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_offset: f64,
    pub patch_frames: usize,
    pub patch_hop_frames: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            // 512 would make the lowest 96-band mel filters share FFT bins
            fft_size: 1024,
            hop_size: 256,
            n_mels: 96,
            fmin: 0.0,
            fmax: 8_000.0,
            log_offset: 1e-6,
            patch_frames: 187,
            patch_hop_frames: 187,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.sample_rate == 0 {
            return fail("sample_rate must be positive".into());
        }
        if self.fft_size < 2 {
            return fail(format!("fft_size {} must be at least 2", self.fft_size));
        }
        if self.hop_size == 0 || self.hop_size > self.fft_size {
            return fail(format!(
                "hop_size {} must be in 1..={}",
                self.hop_size, self.fft_size
            ));
        }
        if self.n_mels == 0 {
            return fail("n_mels must be at least 1".into());
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return fail(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin {} fmax {}",
                self.fmin, self.fmax
            ));
        }
        if !(self.log_offset > 0.0 && self.log_offset.is_finite()) {
            return fail(format!("log_offset {} must be positive", self.log_offset));
        }
        if self.patch_frames == 0 || self.patch_hop_frames == 0 {
            return fail("patch_frames and patch_hop_frames must be at least 1".into());
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Samples needed for `frames` STFT frames.
    pub fn samples_for_frames(&self, frames: usize) -> usize {
        self.fft_size + (frames.max(1) - 1) * self.hop_size
    }

    pub fn frame_seconds(&self, frame: usize) -> f64 {
        (frame * self.hop_size) as f64 / self.sample_rate as f64
    }
}

/// `frames × n_mels` natural-log energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram<T> {
    pub values: Tensor<T>,
    pub config: DspConfig,
}

impl<T: crate::Scalar> MelSpectrogram<T> {
    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_mels(&self) -> usize {
        self.values.shape()[1]
    }
}
