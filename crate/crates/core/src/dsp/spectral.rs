use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{DspConfig, MelSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Linear-interpolation resampler. Output length is
/// `floor(len · target / source)`; positions past the last sample hold it.
pub fn resample<T: Scalar>(w: &Waveform<T>, target_rate: u32) -> Result<Waveform<T>> {
    if target_rate == 0 || w.sample_rate == 0 {
        return Err(Error::ConfigInvalid("sample rates must be positive".into()));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let (src, tgt) = (w.sample_rate as u64, target_rate as u64);
    let n_out = (w.len() as u64 * tgt / src) as usize;
    if n_out == 0 {
        return Err(Error::EmptyAudio);
    }
    let x = &w.samples;
    let last = x.len() - 1;
    let samples = (0..n_out as u64)
        .map(|i| {
            let num = i * src;
            let idx = (num / tgt) as usize;
            let frac = T::of((num % tgt) as f64 / tgt as f64);
            let a = x[idx.min(last)];
            let b = x[(idx + 1).min(last)];
            a + (b - a) * frac
        })
        .collect();
    Ok(Waveform::new(samples, target_rate))
}

/// Periodic Hann window.
fn hann<T: Scalar>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            T::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        })
        .collect()
}

/// Magnitude of the one-sided DFT of Hann-windowed, non-centred frames.
/// Returns `frames × (fft_size/2 + 1)` with
/// `frames = floor((len − fft_size) / hop_size) + 1`.
pub fn stft_magnitude<T: Scalar>(
    w: &Waveform<T>,
    fft_size: usize,
    hop_size: usize,
) -> Result<Tensor<T>> {
    if fft_size == 0 || hop_size == 0 {
        return Err(Error::ConfigInvalid("fft and hop sizes must be positive".into()));
    }
    if w.len() < fft_size {
        return Err(Error::AudioTooShort {
            needed: fft_size,
            got: w.len(),
            unit: "samples",
        });
    }
    let frames = (w.len() - fft_size) / hop_size + 1;
    let bins = fft_size / 2 + 1;
    let window = hann::<T>(fft_size);
    let fft = FftPlanner::<T>::new().plan_fft_forward(fft_size);
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); fft_size];
    let mut out = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let frame = &w.samples[f * hop_size..f * hop_size + fft_size];
        for ((c, &s), &win) in buf.iter_mut().zip(frame).zip(&window) {
            *c = Complex::new(s * win, T::zero());
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    Tensor::new(vec![frames, bins], out)?.check_finite("stft_magnitude")
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// The `n_mels + 2` band edges in Hz, equally spaced on the mel scale from
/// `fmin` to `fmax`. Filter `i` rises from edge `i`, peaks at edge `i + 1`
/// and falls to edge `i + 2`.
pub fn mel_band_edges(cfg: &DspConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let n = cfg.n_mels + 1;
    (0..=n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64))
        .collect()
}

/// Peak frequency of each filter in Hz.
pub fn mel_center_frequencies(cfg: &DspConfig) -> Vec<f64> {
    let edges = mel_band_edges(cfg);
    edges[1..=cfg.n_mels].to_vec()
}

/// `n_mels × (fft_size/2 + 1)` triangular filters with unit peak, evaluated at
/// the FFT bin frequencies. Fails with `DegenerateBand` when two filters peak
/// on the same bin (or a filter covers no bin).
pub fn mel_filterbank<T: Scalar>(cfg: &DspConfig) -> Result<Tensor<T>> {
    cfg.validate()?;
    let bins = cfg.n_bins();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let edges = mel_band_edges(cfg);
    let mut weights = Vec::with_capacity(cfg.n_mels * bins);
    let mut peaks = Vec::with_capacity(cfg.n_mels);
    for m in 0..cfg.n_mels {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row: Vec<f64> = (0..bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                let rise = (f - lo) / (c - lo);
                let fall = (hi - f) / (hi - c);
                rise.min(fall).max(0.0)
            })
            .collect();
        let peak = row
            .iter()
            .enumerate()
            .fold(0, |best, (k, &v)| if v > row[best] { k } else { best });
        if row[peak] <= 0.0 {
            return Err(Error::DegenerateBand {
                first: m,
                second: m,
                bin: peak,
            });
        }
        if let Some(&prev) = peaks.last() {
            if peak <= prev {
                return Err(Error::DegenerateBand {
                    first: m - 1,
                    second: m,
                    bin: prev,
                });
            }
        }
        peaks.push(peak);
        weights.extend(row);
    }
    Tensor::from_f64(&[cfg.n_mels, bins], &weights)
}

/// `ln(filterbank · |STFT| + log_offset)` per frame, after resampling to
/// `cfg.sample_rate`.
pub fn log_mel<T: Scalar>(w: &Waveform<T>, cfg: &DspConfig) -> Result<MelSpectrogram<T>> {
    cfg.validate()?;
    if w.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let resampled;
    let w = if w.sample_rate != cfg.sample_rate {
        resampled = resample(w, cfg.sample_rate)?;
        &resampled
    } else {
        w
    };
    let mags = stft_magnitude(w, cfg.fft_size, cfg.hop_size)?;
    let fb = mel_filterbank::<T>(cfg)?;
    let bins = cfg.n_bins();
    let frames = mags.shape()[0];
    let offset = T::of(cfg.log_offset);
    let mut out = Vec::with_capacity(frames * cfg.n_mels);
    for spectrum in mags.data().chunks_exact(bins) {
        for filter in fb.data().chunks_exact(bins) {
            let e = filter
                .iter()
                .zip(spectrum)
                .fold(T::zero(), |a, (&f, &s)| a + f * s);
            out.push((e + offset).ln());
        }
    }
    let values = Tensor::new(vec![frames, cfg.n_mels], out)?.check_finite("log_mel")?;
    Ok(MelSpectrogram {
        values,
        config: cfg.clone(),
    })
}

/// Start frames of the patches cut from `frames` spectrogram frames.
pub fn patch_starts(frames: usize, cfg: &DspConfig) -> Result<Vec<usize>> {
    if frames < cfg.patch_frames {
        return Err(Error::AudioTooShort {
            needed: cfg.patch_frames,
            got: frames,
            unit: "frames",
        });
    }
    let count = (frames - cfg.patch_frames) / cfg.patch_hop_frames + 1;
    Ok((0..count).map(|k| k * cfg.patch_hop_frames).collect())
}

/// Cuts `[1, patch_frames, n_mels]` windows at stride `patch_hop_frames`;
/// a trailing remainder shorter than a patch is dropped.
pub fn patchify<T: Scalar>(m: &MelSpectrogram<T>) -> Result<Vec<Tensor<T>>> {
    let cfg = &m.config;
    let n_mels = m.n_mels();
    let len = cfg.patch_frames * n_mels;
    patch_starts(m.frames(), cfg)?
        .into_iter()
        .map(|s| {
            let data = m.values.data()[s * n_mels..s * n_mels + len].to_vec();
            Tensor::new(vec![1, cfg.patch_frames, n_mels], data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_identity() {
        let w = Waveform::new(vec![0.1f64, -0.4, 0.9], 22_050);
        assert_eq!(resample(&w, 22_050).unwrap(), w);
    }

    #[test]
    fn resample_upsample_midpoints() {
        let w = Waveform::new(vec![0.0f64, 1.0, 0.0, -1.0], 4);
        let r = resample(&w, 8).unwrap();
        assert_eq!(r.sample_rate, 8);
        assert_eq!(r.samples, vec![0.0, 0.5, 1.0, 0.5, 0.0, -0.5, -1.0, -1.0]);
    }

    #[test]
    fn resample_length_floor() {
        let w = Waveform::new(vec![0.0f64; 10], 3);
        assert_eq!(resample(&w, 2).unwrap().len(), 6);
        assert!(resample(&w, 0).is_err());
    }

    #[test]
    fn stft_frame_count_and_short_input() {
        let w = Waveform::new(vec![0.0f64; 2048], 16_000);
        let s = stft_magnitude(&w, 512, 256).unwrap();
        assert_eq!(s.shape(), &[7, 257]);
        assert!(s.data().iter().all(|&v| v == 0.0));
        let short = Waveform::new(vec![0.0f64; 100], 16_000);
        assert!(matches!(
            stft_magnitude(&short, 512, 256),
            Err(Error::AudioTooShort { .. })
        ));
    }

    #[test]
    fn mel_scale_round_trip() {
        for f in [0.0, 100.0, 440.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn small_fft_with_many_mels_is_degenerate() {
        let cfg = DspConfig {
            fft_size: 512,
            ..DspConfig::default()
        };
        assert!(matches!(
            mel_filterbank::<f64>(&cfg),
            Err(Error::DegenerateBand { .. })
        ));
    }

    #[test]
    fn patch_start_arithmetic() {
        let cfg = DspConfig::default();
        assert_eq!(patch_starts(500, &cfg).unwrap(), vec![0, 187]);
        assert_eq!(patch_starts(187, &cfg).unwrap(), vec![0]);
        assert!(patch_starts(186, &cfg).is_err());
        let cfg = DspConfig {
            patch_hop_frames: 93,
            ..cfg
        };
        assert_eq!(patch_starts(600, &cfg).unwrap(), vec![0, 93, 186, 279, 372]);
    }
}
