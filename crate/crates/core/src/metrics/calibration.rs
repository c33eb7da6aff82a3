//! Predictive entropy and expected calibration error.

use super::{GroundTruthMatrix, MetricError, PredictionMatrix};

pub const DEFAULT_ECE_BINS: usize = 15;

/// How per-cell values are combined across labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Per-label value, then the mean over labels.
    #[default]
    Macro,
    /// All (image, label) cells in one population.
    Pooled,
}

/// Binary entropy in nats, with 0·ln 0 = 0.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}

/// Mean binary entropy over labels, averaged over images.
pub fn predictive_entropy(preds: &PredictionMatrix) -> Result<f64, MetricError> {
    if preds.is_empty() {
        return Err(MetricError::Empty("no predictions".into()));
    }
    let per_image: f64 = preds
        .rows()
        .iter()
        .map(|row| row.iter().map(|&p| binary_entropy(p)).sum::<f64>() / row.len() as f64)
        .sum();
    Ok(per_image / preds.len() as f64)
}

fn bin_of(p: f64, n_bins: usize) -> usize {
    ((p * n_bins as f64).floor() as usize).min(n_bins - 1)
}

/// ECE of one score column: Σ_b (n_b / N)·|mean(p) − mean(y)| over
/// equal-width bins on [0, 1].
pub fn ece_binary(scores: &[f64], truth: &[bool], n_bins: usize) -> Result<f64, MetricError> {
    if scores.len() != truth.len() {
        return Err(MetricError::LengthMismatch(scores.len(), truth.len()));
    }
    if scores.is_empty() {
        return Err(MetricError::Empty("no scores".into()));
    }
    if n_bins == 0 {
        return Err(MetricError::Invalid("ECE needs at least one bin".into()));
    }
    let mut count = vec![0usize; n_bins];
    let mut conf = vec![0.0; n_bins];
    let mut hits = vec![0.0; n_bins];
    for (&p, &y) in scores.iter().zip(truth) {
        let b = bin_of(p, n_bins);
        count[b] += 1;
        conf[b] += p;
        hits[b] += f64::from(u8::from(y));
    }
    let n = scores.len() as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (conf[b] - hits[b]).abs() / n)
        .sum())
}

pub fn ece(
    preds: &PredictionMatrix,
    truth: &GroundTruthMatrix,
    n_bins: usize,
    pooling: Pooling,
) -> Result<f64, MetricError> {
    let truth = truth.aligned_to(preds)?;
    match pooling {
        Pooling::Macro => {
            let mut sum = 0.0;
            for j in 0..5 {
                sum += ece_binary(&preds.column(j), &truth.column(j), n_bins)?;
            }
            Ok(sum / 5.0)
        }
        Pooling::Pooled => {
            let scores: Vec<f64> = preds.rows().iter().flatten().copied().collect();
            let labels: Vec<bool> = truth.rows().iter().flatten().copied().collect();
            ece_binary(&scores, &labels, n_bins)
        }
    }
}
