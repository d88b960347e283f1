//! Principal component analysis by one-sided Jacobi SVD.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows in descending singular-value order.
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    /// Components asked for; larger than `k()` when the data lacked rank.
    pub requested: usize,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Set when fewer than the requested components exist.
    pub fn rank_deficient(&self) -> bool {
        self.k() < self.requested
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        pca_transform(self, x)
    }
}

/// Relative singular-value threshold below which a direction counts as null.
const RANK_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// One-sided Jacobi on the columns of `a` (`cols` vectors of length `len`).
/// Returns the accumulated rotation `V` after the columns have become
/// mutually orthogonal; `v[j]` is column `j` of `V`, so that the final
/// column `j` of `a` equals the original `a · v[j]`.
fn jacobi_columns(a: &mut [Vec<f64>]) -> Vec<Vec<f64>> {
    let p = a.len();
    let mut v: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..p {
            for j in i + 1..p {
                let alpha: f64 = a[i].iter().map(|x| x * x).sum();
                let beta: f64 = a[j].iter().map(|x| x * x).sum();
                let gamma: f64 = a[i].iter().zip(&a[j]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = a.split_at_mut(j);
                for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                    let (xi, yj) = (*x, *y);
                    *x = c * xi - s * yj;
                    *y = s * xi + c * yj;
                }
                let (lo, hi) = v.split_at_mut(j);
                for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                    let (xi, yj) = (*x, *y);
                    *x = c * xi - s * yj;
                    *y = s * xi + c * yj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    v
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Top-`k` principal directions of `data` (rows are samples). When the
/// centred data has fewer than `k` non-null directions, the model keeps the
/// achievable number and reports [`PcaModel::rank_deficient`].
pub fn pca_fit(data: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::ConfigInvalid(format!("PCA needs at least 2 samples, got {n}")));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|r| r.len() != d) {
        return Err(Error::ShapeMismatch("PCA rows must share a positive dimension".into()));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::ConfigInvalid(format!(
            "PCA k must be in 1..={}, got {k}",
            n.min(d)
        )));
    }
    if data.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NumericFault("PCA input".into()));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centred: Vec<Vec<f64>> = data
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    // (singular value, right singular vector)
    let mut pairs: Vec<(f64, Vec<f64>)> = if n >= d {
        // columns of X are the d features
        let mut cols: Vec<Vec<f64>> = (0..d).map(|j| centred.iter().map(|r| r[j]).collect()).collect();
        let v = jacobi_columns(&mut cols);
        (0..d)
            .map(|j| {
                let sigma = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
                (sigma, v[j].clone())
            })
            .collect()
    } else {
        // columns of Xᵀ are the n samples; X·V has orthogonal columns σ·u
        let mut cols = centred.clone();
        jacobi_columns(&mut cols);
        cols.into_iter()
            .map(|c| {
                let sigma = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                (sigma, c)
            })
            .collect()
    };
    let sigma_max = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[b].0.total_cmp(&pairs[a].0).then(a.cmp(&b)));
    let rank = pairs
        .iter()
        .filter(|p| sigma_max > 0.0 && p.0 > RANK_TOL * sigma_max)
        .count();
    let keep = k.min(rank);
    let mut components = Vec::with_capacity(keep);
    let mut singular_values = Vec::with_capacity(keep);
    for &i in order.iter().take(keep) {
        let (sigma, mut vec) = std::mem::take(&mut pairs[i]);
        normalize(&mut vec);
        fix_sign(&mut vec);
        components.push(vec);
        singular_values.push(sigma);
    }
    Ok(PcaModel {
        mean,
        components,
        singular_values,
        requested: k,
    })
}

/// `components · (x − mean)`.
pub fn pca_transform(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.dim() {
        return Err(Error::ShapeMismatch(format!(
            "PCA expects dimension {}, got {}",
            model.dim(),
            x.len()
        )));
    }
    Ok(model
        .components
        .iter()
        .map(|c| c.iter().zip(x).zip(&model.mean).map(|((w, v), m)| w * (v - m)).sum())
        .collect())
}
