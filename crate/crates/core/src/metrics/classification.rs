//! Ranking and thresholded classification metrics.

use super::{GroundTruthMatrix, MetricError, PredictionMatrix, ThresholdVector};
use crate::concept::DiagnosticLabel;

/// Threshold used when a label cannot be tuned.
pub const FALLBACK_THRESHOLD: f64 = 0.5;

fn check_lengths(scores: &[f64], truth: &[bool]) -> Result<(), MetricError> {
    if scores.len() != truth.len() {
        return Err(MetricError::LengthMismatch(scores.len(), truth.len()));
    }
    Ok(())
}

/// Area under the ROC curve via the Mann–Whitney rank-sum, ties counted ½.
pub fn auroc(scores: &[f64], truth: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores, truth)?;
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::DegenerateLabels(
            "AUROC needs at least one positive and one negative".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // 1-based average ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| truth[k]).count();
        rank_sum_pos += avg_rank * pos_in_group as f64;
        i = j + 1;
    }

    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Non-interpolated average precision. Ties in score keep input order.
pub fn auprc(scores: &[f64], truth: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores, truth)?;
    let pos = truth.iter().filter(|&&t| t).count();
    if pos == 0 {
        return Err(MetricError::DegenerateLabels(
            "AUPRC needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps input order within ties
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if truth[k] {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// F1 from confusion counts; 0 when the denominator vanishes.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// F1 of `p >= threshold` against truth.
pub fn f1_at(scores: &[f64], truth: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&s, &t) in scores.iter().zip(truth) {
        match (s >= threshold, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    f1_from_counts(tp, fp, fn_)
}

/// The tuning grid {0.01, 0.02, …, 0.99}.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (1..=99).map(|k| k as f64 / 100.0)
}

/// Grid threshold maximizing F1 for one label; ties go to the smallest.
///
/// Single-class truth or constant scores carry no ranking information and
/// are reported as degenerate.
pub fn tune_threshold(scores: &[f64], truth: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores, truth)?;
    let pos = truth.iter().filter(|&&t| t).count();
    if pos == 0 || pos == truth.len() {
        return Err(MetricError::DegenerateLabels("single-class truth".into()));
    }
    if scores.windows(2).all(|w| w[0] == w[1]) {
        return Err(MetricError::DegenerateLabels("constant scores".into()));
    }

    // descending sweep: prefix k holds the k highest scores
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp_prefix = vec![0usize; order.len() + 1];
    for (k, &i) in order.iter().enumerate() {
        tp_prefix[k + 1] = tp_prefix[k] + usize::from(truth[i]);
    }

    let mut best = (f64::NEG_INFINITY, FALLBACK_THRESHOLD);
    for t in threshold_grid() {
        let predicted = order.partition_point(|&i| scores[i] >= t);
        let tp = tp_prefix[predicted];
        let f1 = f1_from_counts(tp, predicted - tp, pos - tp);
        if f1 > best.0 {
            best = (f1, t);
        }
    }
    Ok(best.1)
}

/// Tunes every label; degenerate labels fall back to 0.5 with a warning.
pub fn tune_thresholds(
    preds: &PredictionMatrix,
    truth: &GroundTruthMatrix,
) -> Result<ThresholdVector, MetricError> {
    let truth = truth.aligned_to(preds)?;
    let mut values = [FALLBACK_THRESHOLD; 5];
    for (j, value) in values.iter_mut().enumerate() {
        match tune_threshold(&preds.column(j), &truth.column(j)) {
            Ok(t) => *value = t,
            Err(e) => log::warn!(
                "{}: {e}; threshold defaults to {FALLBACK_THRESHOLD}",
                DiagnosticLabel::PATHOLOGIES[j]
            ),
        }
    }
    ThresholdVector::new(values)
}

/// Per-label F1 at the given thresholds, averaged over the five labels.
pub fn per_label_f1(
    preds: &PredictionMatrix,
    truth: &GroundTruthMatrix,
    thresholds: &ThresholdVector,
) -> Result<[f64; 5], MetricError> {
    let truth = truth.aligned_to(preds)?;
    let mut out = [0.0; 5];
    for (j, f) in out.iter_mut().enumerate() {
        *f = f1_at(&preds.column(j), &truth.column(j), thresholds.values()[j]);
    }
    Ok(out)
}

pub fn macro_f1(
    preds: &PredictionMatrix,
    truth: &GroundTruthMatrix,
    thresholds: &ThresholdVector,
) -> Result<f64, MetricError> {
    let f = per_label_f1(preds, truth, thresholds)?;
    Ok(f.iter().sum::<f64>() / f.len() as f64)
}

/// A macro average over the labels where the metric is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroScore {
    pub value: f64,
    pub per_label: [Option<f64>; 5],
    pub excluded: Vec<DiagnosticLabel>,
}

fn macro_of(
    preds: &PredictionMatrix,
    truth: &GroundTruthMatrix,
    metric: fn(&[f64], &[bool]) -> Result<f64, MetricError>,
    name: &str,
) -> Result<MacroScore, MetricError> {
    let truth = truth.aligned_to(preds)?;
    let mut per_label = [None; 5];
    let mut excluded = Vec::new();
    for (j, slot) in per_label.iter_mut().enumerate() {
        match metric(&preds.column(j), &truth.column(j)) {
            Ok(v) => *slot = Some(v),
            Err(MetricError::DegenerateLabels(why)) => {
                let label = DiagnosticLabel::PATHOLOGIES[j];
                log::warn!("{name} undefined for {label} ({why}); excluded from the macro average");
                excluded.push(label);
            }
            Err(e) => return Err(e),
        }
    }
    let defined: Vec<f64> = per_label.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(MetricError::DegenerateLabels(format!(
            "{name} undefined for every label"
        )));
    }
    Ok(MacroScore {
        value: defined.iter().sum::<f64>() / defined.len() as f64,
        per_label,
        excluded,
    })
}

pub fn macro_auroc(
    preds: &PredictionMatrix,
    truth: &GroundTruthMatrix,
) -> Result<MacroScore, MetricError> {
    macro_of(preds, truth, auroc, "AUROC")
}

pub fn macro_auprc(
    preds: &PredictionMatrix,
    truth: &GroundTruthMatrix,
) -> Result<MacroScore, MetricError> {
    macro_of(preds, truth, auprc, "AUPRC")
}
