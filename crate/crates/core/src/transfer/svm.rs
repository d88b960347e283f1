//! One-vs-rest linear SVM with a squared hinge loss.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    /// L2 regularisation strength λ.
    pub reg_strength: f64,
    pub epochs: usize,
    /// Recorded with the model; full-batch descent draws no random numbers.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            reg_strength: 1e-3,
            epochs: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// One weight vector per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub config: SvmConfig,
    /// Objective per epoch (after the update), per class.
    pub objective: Vec<Vec<f64>>,
}

impl SvmModel {
    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        svm_predict(self, x)
    }
}

fn objective(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let m = 1.0 - y * (dot(w, x) + b);
            if m > 0.0 {
                m * m
            } else {
                0.0
            }
        })
        .sum();
    reg + loss / xs.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises, per class `c` with `y = ±1` for in/out of class,
/// `λ/2·‖w‖² + (1/n)·Σ max(0, 1 − y(w·x + b))²` by full-batch gradient
/// descent from zero with step `1/L`, `L = λ + (2/n)·Σ(‖x‖² + 1)`, a bound on
/// the gradient's Lipschitz constant that makes every step non-increasing.
pub fn svm_fit(xs: &[Vec<f64>], labels: &[usize], config: &SvmConfig) -> Result<SvmModel> {
    if xs.len() != labels.len() || xs.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples, {} labels",
            xs.len(),
            labels.len()
        )));
    }
    let d = xs[0].len();
    if xs.iter().any(|x| x.len() != d) {
        return Err(Error::ShapeMismatch("SVM samples differ in dimension".into()));
    }
    if !(config.reg_strength >= 0.0) {
        return Err(Error::ConfigInvalid("reg_strength must be non-negative".into()));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let present = (0..n_classes).filter(|c| labels.contains(c)).count();
    if present < 2 {
        return Err(Error::SingleClass);
    }
    let n = xs.len() as f64;
    let lambda = config.reg_strength;
    let lipschitz = lambda + 2.0 / n * xs.iter().map(|x| dot(x, x) + 1.0).sum::<f64>();
    let step = 1.0 / lipschitz;

    let mut weights = Vec::with_capacity(n_classes);
    let mut biases = Vec::with_capacity(n_classes);
    let mut history = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let ys: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut prev = objective(&w, b, xs, &ys, lambda);
        let mut objs = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let mut gw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
            let mut gb = 0.0;
            for (x, &y) in xs.iter().zip(&ys) {
                let m = 1.0 - y * (dot(&w, x) + b);
                if m > 0.0 {
                    let coef = -2.0 * m * y / n;
                    for (g, &xi) in gw.iter_mut().zip(x) {
                        *g += coef * xi;
                    }
                    gb += coef;
                }
            }
            for (v, g) in w.iter_mut().zip(&gw) {
                *v -= step * g;
            }
            b -= step * gb;
            let obj = objective(&w, b, xs, &ys, lambda);
            if !obj.is_finite() || obj > prev * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::NumericFault(format!(
                    "SVM objective rose from {prev} to {obj} at epoch {} for class {c}",
                    epoch + 1
                )));
            }
            prev = obj;
            objs.push(obj);
        }
        weights.push(w);
        biases.push(b);
        history.push(objs);
    }
    Ok(SvmModel {
        weights,
        biases,
        config: config.clone(),
        objective: history,
    })
}

/// Highest affine score wins; ties go to the lowest class index.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    let d = model.weights.first().map_or(0, Vec::len);
    if x.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "SVM expects dimension {d}, got {}",
            x.len()
        )));
    }
    let scores: Vec<f64> = model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| dot(w, x) + b)
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}
