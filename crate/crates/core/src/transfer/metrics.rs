//! Ranking and classification metrics.

use crate::error::{Error, Result};

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NumericFault("metric score".into()));
    }
    Ok(())
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half: `(#{pos > neg} + ½·#{pos = neg}) / (P·N)`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::DegenerateLabels);
    }
    // mid-ranks (1-based) over ascending scores
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (p as f64, n as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: the mean, over positives in descending-score order, of
/// the precision at that positive's cut. Equal scores are ordered by
/// ascending index.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let p = labels.iter().filter(|&&l| l).count();
    if p == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &k) in order.iter().enumerate() {
        if labels[k] {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(sum / p as f64)
}

/// Tag-averaged metrics over the columns of an `n × m` score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroMetrics {
    pub roc_auc: f64,
    pub pr_auc: f64,
    /// Columns without both classes, left out of the ROC mean.
    pub skipped_roc: Vec<usize>,
    /// Columns without positives, left out of the PR mean.
    pub skipped_pr: Vec<usize>,
}

/// `scores[i][j]` and `labels[i][j]` for sample `i`, column `j`.
pub fn macro_metrics(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<MacroMetrics> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} score rows, {} label rows",
            scores.len(),
            labels.len()
        )));
    }
    let m = scores[0].len();
    if scores.iter().any(|r| r.len() != m) || labels.iter().any(|r| r.len() != m)
    {
        return Err(Error::ShapeMismatch("ragged metric matrix".into()));
    }
    let (mut roc, mut pr) = (Vec::new(), Vec::new());
    let (mut skipped_roc, mut skipped_pr) = (Vec::new(), Vec::new());
    for j in 0..m {
        let s: Vec<f64> = scores.iter().map(|r| r[j]).collect();
        let l: Vec<bool> = labels.iter().map(|r| r[j]).collect();
        match roc_auc(&s, &l) {
            Ok(v) => roc.push(v),
            Err(Error::DegenerateLabels) => skipped_roc.push(j),
            Err(e) => return Err(e),
        }
        match pr_auc(&s, &l) {
            Ok(v) => pr.push(v),
            Err(Error::NoPositives) => skipped_pr.push(j),
            Err(e) => return Err(e),
        }
    }
    if roc.is_empty() || pr.is_empty() {
        return Err(Error::AllColumnsDegenerate);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(MacroMetrics {
        roc_auc: mean(&roc),
        pr_auc: mean(&pr),
        skipped_roc,
        skipped_pr,
    })
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// `matrix[true][predicted]` counts.
pub fn confusion_matrix(predicted: &[usize], truth: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        m[t][p] += 1;
    }
    m
}
