//! Threshold and ranking scores for binary classifiers.
//!
//! Label `1` is the positive class. A score at or above the threshold is a
//! positive prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryScores {
    /// `TP / (TP + FP)` for the positive class.
    pub precision: f64,
    pub recall: f64,
    /// Mean of the per-class precisions.
    pub macro_precision: f64,
    /// Rows are true classes `[negative, positive]`, columns predictions,
    /// each row in percent.
    pub confusion: [[f64; 2]; 2],
}

fn check(labels: &[u8], scores: &[f64]) -> Result<(usize, usize)> {
    if labels.len() != scores.len() {
        return Err(Error::shape("scores", format!("{} labels vs {} scores", labels.len(), scores.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label {bad} is not 0 or 1")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("non-finite score"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("both classes must be present".into()));
    }
    Ok((pos, neg))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Counts at `threshold`. A class that is never predicted gets precision 0.
pub fn binary_scores(labels: &[u8], scores: &[f64], threshold: f64) -> Result<BinaryScores> {
    let (pos, neg) = check(labels, scores)?;
    let mut c = [[0usize; 2]; 2];
    for (&l, &s) in labels.iter().zip(scores) {
        c[l as usize][(s >= threshold) as usize] += 1;
    }
    let precision = ratio(c[1][1], c[1][1] + c[0][1]);
    let neg_precision = ratio(c[0][0], c[0][0] + c[1][0]);
    let pct = |row: [usize; 2], n: usize| [100.0 * row[0] as f64 / n as f64, 100.0 * row[1] as f64 / n as f64];
    Ok(BinaryScores {
        precision,
        recall: ratio(c[1][1], pos),
        macro_precision: 0.5 * (precision + neg_precision),
        confusion: [pct(c[0], neg), pct(c[1], pos)],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    /// `None` for the starting point above every score.
    pub threshold: Option<f64>,
    pub recall: f64,
    pub precision: f64,
}

/// Cumulative (TP, FP) counts at each distinct score, highest first.
fn sweep(labels: &[u8], scores: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in idx.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_tie = k + 1 == idx.len() || scores[idx[k + 1]] != scores[i];
        if last_of_tie {
            out.push((scores[i], tp, fp));
        }
    }
    out
}

/// Precision-recall points at every distinct score plus the conventional
/// `(recall 0, precision 1)` start, and the trapezoid area over recall.
pub fn pr_curve_auc(labels: &[u8], scores: &[f64]) -> Result<(Vec<PrPoint>, f64)> {
    let (pos, _) = check(labels, scores)?;
    let mut points = vec![PrPoint { threshold: None, recall: 0.0, precision: 1.0 }];
    for (threshold, tp, fp) in sweep(labels, scores) {
        points.push(PrPoint { threshold: Some(threshold), recall: ratio(tp, pos), precision: ratio(tp, tp + fp) });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * 0.5 * (w[1].precision + w[0].precision))
        .sum();
    Ok((points, auc))
}

/// `Σ (R_k - R_{k-1}) P_k` over distinct thresholds.
pub fn average_precision(labels: &[u8], scores: &[f64]) -> Result<f64> {
    let (pos, _) = check(labels, scores)?;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (_, tp, fp) in sweep(labels, scores) {
        let r = ratio(tp, pos);
        ap += (r - prev_recall) * ratio(tp, tp + fp);
        prev_recall = r;
    }
    Ok(ap)
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half, via midranks.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    let (pos, neg) = check(labels, scores)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && scores[idx[e + 1]] == scores[idx[k]] {
            e += 1;
        }
        let mid = (k + e) as f64 / 2.0 + 1.0;
        rank_sum += idx[k..=e].iter().filter(|&&i| labels[i] == 1).count() as f64 * mid;
        k = e + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC points `(fpr, tpr)` from `(0, 0)` through every distinct threshold.
pub fn roc_curve(labels: &[u8], scores: &[f64]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check(labels, scores)?;
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(sweep(labels, scores).into_iter().map(|(_, tp, fp)| (ratio(fp, neg), ratio(tp, pos))));
    Ok(pts)
}
