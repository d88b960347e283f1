//! Brute-force reference implementations, written for obviousness over speed.

use std::f64::consts::PI;

/// Direct cross-correlation: `x` `[ci, h, w]`, `k` `[co, ci, kh, kw]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    (ci, h, w): (usize, usize, usize),
    k: &[f64],
    (co, kh, kw): (usize, usize, usize),
    bias: Option<&[f64]>,
    (ph, pw): (usize, usize),
) -> (Vec<f64>, (usize, usize, usize)) {
    let oh = h + 2 * ph + 1 - kh;
    let ow = w + 2 * pw + 1 - kw;
    let mut out = Vec::with_capacity(co * oh * ow);
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias.map_or(0.0, |b| b[o]);
                for c in 0..ci {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iy = oy as isize + dy as isize - ph as isize;
                            let ix = ox as isize + dx as isize - pw as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let xv = x[(c * h + iy as usize) * w + ix as usize];
                            acc += k[((o * ci + c) * kh + dy) * kw + dx] * xv;
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    (out, (co, oh, ow))
}

pub fn dense(x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let n = x.len();
    (0..w.len() / n)
        .map(|i| (0..n).map(|j| w[i * n + j] * x[j]).sum::<f64>() + bias.map_or(0.0, |b| b[i]))
        .collect()
}

/// Max over every `wh × ww` block of each channel.
pub fn pool_max(x: &[f64], (c, h, w): (usize, usize, usize), (wh, ww): (usize, usize)) -> Vec<f64> {
    let mut out = Vec::new();
    for ch in 0..c {
        for by in 0..h / wh {
            for bx in 0..w / ww {
                let block = (0..wh).flat_map(|dy| {
                    (0..ww).map(move |dx| x[(ch * h + by * wh + dy) * w + bx * ww + dx])
                });
                out.push(block.fold(f64::NEG_INFINITY, f64::max));
            }
        }
    }
    out
}

/// Softmax of every lane along `axis` of a row-major tensor, without any
/// max-shift.
pub fn softmax(x: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let stride: usize = shape[axis + 1..].iter().product();
    let n = shape[axis];
    let mut out = vec![0.0; x.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let base = i - ((i / stride) % n) * stride;
        let z: f64 = (0..n).map(|k| x[base + k * stride].exp()).sum();
        *o = x[i].exp() / z;
    }
    out
}

/// Magnitudes of the one-sided DFT of each periodic-Hann-windowed frame.
pub fn stft_magnitude(x: &[f64], n_fft: usize, hop: usize) -> Vec<Vec<f64>> {
    let frames = (x.len() - n_fft) / hop + 1;
    (0..frames)
        .map(|f| {
            let frame: Vec<f64> = (0..n_fft)
                .map(|n| x[f * hop + n] * (0.5 - 0.5 * (2.0 * PI * n as f64 / n_fft as f64).cos()))
                .collect();
            (0..=n_fft / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, v) in frame.iter().enumerate() {
                        let a = -2.0 * PI * (k * n % n_fft) as f64 / n_fft as f64;
                        re += v * a.cos();
                        im += v * a.sin();
                    }
                    re.hypot(im)
                })
                .collect()
        })
        .collect()
}

/// Mann–Whitney statistic by counting every positive–negative pair.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &pi) in labels.iter().enumerate() {
        for (j, &pj) in labels.iter().enumerate() {
            if pi && !pj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Average precision over every cut of the ranking. Item `j` ranks before
/// `i` when it scores higher, or ties and has the smaller index.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let before = |j: usize, i: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
    let n = scores.len();
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut total = 0.0;
    for i in (0..n).filter(|&i| labels[i]) {
        let cut: Vec<usize> = (0..n).filter(|&j| j == i || before(j, i)).collect();
        let hits = cut.iter().filter(|&&j| labels[j]).count() as f64;
        total += hits / cut.len() as f64;
    }
    total / positives
}
