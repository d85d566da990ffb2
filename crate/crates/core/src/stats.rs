//! Separation statistics for scored caption pairs: point-biserial correlation
//! (Pearson against the binary label) and ROC-AUC via the rank statistic with
//! midranks for ties. Undefined statistics are reported as errors, never as
//! NaN.

use thiserror::Error;

use alloc::vec::Vec;

use crate::num;

// ── errors ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("scores and labels length mismatch: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("empty input")]
    Empty,
    #[error("label at {index} is not 0 or 1")]
    BadLabel { index: usize },
    #[error("non-finite score at {index}")]
    NonFinite { index: usize },
    #[error("need both classes: {positives} positives, {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("scores are constant ({value}); statistic undefined")]
    ConstantScores { value: f64 },
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if scores.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(index) = labels.iter().position(|&l| l > 1) {
        return Err(StatsError::BadLabel { index });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(StatsError::NonFinite { index });
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(StatsError::SingleClass { positives, negatives });
    }
    Ok((positives, negatives))
}

// ── point-biserial ──────────────────────────────────────────────────────────

/// Pearson correlation between a continuous score and a 0/1 label.
pub fn point_biserial(scores: &[f64], labels: &[u8]) -> Result<f64, StatsError> {
    validate(scores, labels)?;
    let n = scores.len() as f64;
    let mean_x = scores.iter().sum::<f64>() / n;
    let mean_y = labels.iter().map(|&l| l as f64).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &l) in scores.iter().zip(labels) {
        let dx = x - mean_x;
        let dy = l as f64 - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ConstantScores { value: scores[0] });
    }
    Ok(sxy / (num::sqrt(sxx) * num::sqrt(syy)))
}

// ── ROC-AUC ─────────────────────────────────────────────────────────────────

/// Probability that a random positive outscores a random negative, with ties
/// counting half (midrank formulation). Defined even for constant scores
/// (0.5), but both classes must be present.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, StatsError> {
    let (n_pos, n_neg) = validate(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("validated finite"));
    // Midranks: tied scores share the average of their 1-based rank range.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let n1 = n_pos as f64;
    let n0 = n_neg as f64;
    Ok((rank_sum_pos - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// The harness statistic pair. Errors if either statistic is undefined
/// (single class or constant scores).
pub fn correlate(scores: &[f64], labels: &[u8]) -> Result<(f64, f64), StatsError> {
    let r = point_biserial(scores, labels)?;
    let auc = roc_auc(scores, labels)?;
    Ok((r, auc))
}

// ── tests ───────────────────────────────────────────────────────────────────
