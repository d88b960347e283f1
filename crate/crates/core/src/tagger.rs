//! Taggrams and top-N tags for audio files.

use std::path::Path;

use rayon::prelude::*;

use crate::arch::{forward, ForwardTrace, Model};
use crate::dsp::{load_wav, log_mel, patch_starts, patchify, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-patch tag activations of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Taggram<T> {
    /// `[n_patches, n_tags]` sigmoid activations, rows in time order.
    pub values: Tensor<T>,
    pub tags: Vec<String>,
    /// Start time of each patch in seconds.
    pub patch_times: Vec<f64>,
}

impl<T: Scalar> Taggram<T> {
    pub fn n_patches(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_tags(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn row(&self, k: usize) -> &[T] {
        let n = self.n_tags();
        &self.values.data()[k * n..(k + 1) * n]
    }

    /// Column means over patches.
    pub fn mean_scores(&self) -> Vec<T> {
        let (p, n) = (self.n_patches(), self.n_tags());
        let mut acc = vec![T::zero(); n];
        for k in 0..p {
            for (a, &v) in acc.iter_mut().zip(self.row(k)) {
                *a = *a + v;
            }
        }
        acc.into_iter().map(|s| s / T::of(p as f64)).collect()
    }
}

/// Forward traces of every patch of a waveform, in patch order.
pub(crate) fn trace_waveform<T: Scalar>(
    wave: &Waveform<T>,
    model: &Model<T>,
) -> Result<(Vec<ForwardTrace<T>>, Vec<f64>)> {
    let dsp = &model.config.dsp;
    let mel = log_mel(wave, dsp)?;
    let patches = patchify(&mel)?;
    let times = patch_starts(mel.frames(), dsp)?
        .into_iter()
        .map(|s| dsp.frame_seconds(s))
        .collect();
    let traces = patches
        .par_iter()
        .map(|p| forward(p, model))
        .collect::<Result<Vec<_>>>()?;
    Ok((traces, times))
}

pub(crate) fn taggram_from_traces<T: Scalar>(
    traces: &[ForwardTrace<T>],
    times: Vec<f64>,
    model: &Model<T>,
) -> Result<Taggram<T>> {
    let rows: Vec<Tensor<T>> = traces.iter().map(|t| t.output().clone()).collect();
    Ok(Taggram {
        values: Tensor::stack(&rows)?,
        tags: model.tag_vocabulary.clone(),
        patch_times: times,
    })
}

pub fn taggram_from_waveform<T: Scalar>(wave: &Waveform<T>, model: &Model<T>) -> Result<Taggram<T>> {
    let (traces, times) = trace_waveform(wave, model)?;
    taggram_from_traces(&traces, times, model)
}

/// Row `k` is the output of the model on patch `k` of the file.
pub fn compute_taggram<T: Scalar>(path: impl AsRef<Path>, model: &Model<T>) -> Result<Taggram<T>> {
    taggram_from_waveform(&load_wav(path)?, model)
}

/// The `top_n` tags by mean activation over patches, highest first; equal
/// scores keep vocabulary order.
pub fn top_tags<T: Scalar>(taggram: &Taggram<T>, top_n: usize) -> Result<Vec<(String, T)>> {
    let n = taggram.n_tags();
    if top_n == 0 || top_n > n {
        return Err(Error::TopNOutOfRange { top_n, n_tags: n });
    }
    let scores = taggram.mean_scores();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .take(top_n)
        .map(|i| (taggram.tags[i].clone(), scores[i]))
        .collect())
}

/// `tag\tscore\n` per entry, scores with 6 decimals.
pub fn format_listing<T: Scalar>(tags: &[(String, T)]) -> String {
    tags.iter()
        .map(|(tag, s)| format!("{tag}\t{s:.6}\n"))
        .collect()
}
