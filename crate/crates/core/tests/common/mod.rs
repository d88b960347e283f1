//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};

use musicnn::arch::{build_model, generic_vocabulary, Backend, Init, Model, ModelConfig};
use musicnn::dsp::{write_wav, WavEncoding, Waveform};
use musicnn::rng::SplitMix64;
use musicnn::{Scalar, Tensor};

pub fn seeded<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Model<T> {
    build_model(cfg, Init::SeededRandom(seed), generic_vocabulary(cfg.n_tags)).unwrap()
}

pub fn toy<T: Scalar>(backend: Backend, n_tags: usize, seed: u64) -> Model<T> {
    seeded(&ModelConfig::toy_musicnn(backend, n_tags), seed)
}

/// The three toy architectures used wherever every family must be covered.
pub fn toy_configs(n_tags: usize) -> Vec<(&'static str, ModelConfig)> {
    vec![
        ("musicnn pooling", ModelConfig::toy_musicnn(Backend::TemporalPooling, n_tags)),
        ("musicnn attention", ModelConfig::toy_musicnn(Backend::Attention, n_tags)),
        ("vgg", ModelConfig::toy_vgg(n_tags)),
    ]
}

pub fn random_patch<T: Scalar>(cfg: &ModelConfig, rng: &mut SplitMix64) -> Tensor<T> {
    let d = &cfg.dsp;
    let x = (0..d.patch_frames * d.n_mels).map(|_| T::of(rng.normal())).collect();
    Tensor::new(vec![1, d.patch_frames, d.n_mels], x).unwrap()
}

pub fn random_targets<T: Scalar>(n_tags: usize, rng: &mut SplitMix64) -> Tensor<T> {
    Tensor::from_vec((0..n_tags).map(|_| T::of(rng.below(2) as f64)).collect())
}

/// `n` Gaussian patches with random binary targets.
pub fn random_set<T: Scalar>(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<(Tensor<T>, Tensor<T>)> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            let x = random_patch(cfg, &mut rng);
            (x, random_targets(cfg.n_tags, &mut rng))
        })
        .collect()
}

pub fn unzip<T: Clone>(set: &[(Tensor<T>, Tensor<T>)]) -> (Vec<Tensor<T>>, Vec<Tensor<T>>) {
    set.iter().cloned().unzip()
}

/// Frame 0 carries the label as a flat ±3 frame; every other frame is a flat
/// frame of random sign plus noise, unrelated to the label.
pub fn frame0_set(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<(Tensor<f32>, Tensor<f32>)> {
    let mut rng = SplitMix64::new(seed);
    let d = &cfg.dsp;
    (0..n)
        .map(|i| {
            let label = (i % 2) as f32;
            let mut x = Vec::with_capacity(d.patch_frames * d.n_mels);
            for f in 0..d.patch_frames {
                let sign = if f == 0 {
                    2.0 * label - 1.0
                } else if rng.below(2) == 1 {
                    1.0
                } else {
                    -1.0
                };
                for _ in 0..d.n_mels {
                    x.push(3.0 * sign + 0.3 * rng.normal() as f32);
                }
            }
            (
                Tensor::new(vec![1, d.patch_frames, d.n_mels], x).unwrap(),
                Tensor::full(&[cfg.n_tags], label),
            )
        })
        .collect()
}

pub fn sine(freq: f64, amplitude: f64, phase: f64, samples: usize, rate: u32) -> Waveform<f64> {
    let w = 2.0 * std::f64::consts::PI * freq / rate as f64;
    Waveform::new(
        (0..samples).map(|n| amplitude * (w * n as f64 + phase).sin()).collect(),
        rate,
    )
}

/// Uniform white noise in `[-amplitude, amplitude]`.
pub fn white_noise(amplitude: f64, samples: usize, rate: u32, rng: &mut SplitMix64) -> Waveform<f64> {
    Waveform::new(
        (0..samples).map(|_| rng.uniform(-amplitude, amplitude)).collect(),
        rate,
    )
}

pub fn write_pcm16(path: &Path, wave: &Waveform<f64>) {
    write_wav(path, wave, WavEncoding::Pcm16).unwrap();
}

/// A 7-second two-tone PCM16 clip at 16 kHz: two full-size patches.
pub fn tagger_fixture(dir: &Path) -> PathBuf {
    let n = 7 * 16_000;
    let a = sine(440.0, 0.4, 0.0, n, 16_000);
    let b = sine(1_250.0, 0.2, 0.3, n, 16_000);
    let mixed = Waveform::new(a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect(), 16_000);
    let path = dir.join("fixture.wav");
    write_pcm16(&path, &mixed);
    path
}

/// Writes the sine-versus-noise clips and a `path,label,split` manifest:
/// `train` clips per genre for training and `test` per genre for testing.
/// Each clip has a random amplitude; tones also get a random phase.
pub fn two_genre_manifest(dir: &Path, train: usize, test: usize, seed: u64) -> PathBuf {
    let rate = 16_000;
    let samples = rate as usize;
    let mut rng = SplitMix64::new(seed);
    let mut csv = String::from("path,label,split\n");
    for (split, count) in [("train", train), ("test", test)] {
        for i in 0..count {
            for genre in ["tone", "noise"] {
                let amplitude = rng.uniform(0.2, 0.8);
                let wave = match genre {
                    "tone" => {
                        let phase = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
                        sine(220.0, amplitude, phase, samples, rate)
                    }
                    _ => white_noise(amplitude, samples, rate, &mut rng),
                };
                let name = format!("{split}_{genre}_{i}.wav");
                write_pcm16(&dir.join(&name), &wave);
                csv.push_str(&format!("{name},{genre},{split}\n"));
            }
        }
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, csv).unwrap();
    path
}

pub fn paper_text() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../paper.md");
    std::fs::read_to_string(path).expect("paper.md at the workspace root")
}

/// Comma-separated italic list following `marker` in the text of paper.md.
pub fn paper_vocabulary(text: &str, marker: &str) -> Vec<String> {
    let start = text.find(marker).expect("vocabulary marker") + marker.len();
    let rest = &text[start..];
    let open = rest.find("\\textit{").expect("italic list") + "\\textit{".len();
    let close = open + rest[open..].find('}').expect("closing brace");
    rest[open..close]
        .trim_end_matches('.')
        .split(',')
        .map(|s| s.trim().to_string())
        .collect()
}

/// `\verb|name|` tokens between `from` and the next `until` after it.
pub fn paper_verb_list(text: &str, from: &str, until: &str) -> Vec<String> {
    let start = text.find(from).expect("list marker") + from.len();
    let end = start + text[start..].find(until).expect("list terminator");
    text[start..end]
        .split("\\verb|")
        .skip(1)
        .map(|s| s.split('|').next().unwrap().to_string())
        .collect()
}

/// Norm-wise relative error `max |a − b| / max |b|`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if num == 0.0 { 0.0 } else { num / den.max(f64::MIN_POSITIVE) }
}

pub fn as_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.as_f64()).collect()
}
