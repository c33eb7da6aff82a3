//! Evaluation metrics: classification, calibration, structural similarity,
//! semantic concept alignment and expert-review statistics.

pub mod calibration;
pub mod classification;
pub mod review;
pub mod semantic;
pub mod ssim;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::concept::DiagnosticLabel;

pub use calibration::{ece, predictive_entropy, Pooling, DEFAULT_ECE_BINS};
pub use classification::{
    auprc, auroc, macro_auprc, macro_auroc, macro_f1, tune_thresholds, MacroScore,
};
pub use review::{review_stats, Agreement, Realism, ReviewRecord, ReviewStats};
pub use semantic::{semantic_uncertainty, SemanticUncertainty};
pub use ssim::{ssim, ssim_summary, MeanStd, SsimSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    DegenerateLabels(String),
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("images differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("probability {value} for `{image_id}` is outside [0, 1]")]
    InvalidProbability { image_id: String, value: f64 },
    #[error("duplicate image id `{0}`")]
    DuplicateId(String),
    #[error("prediction and truth rows are not aligned: {0}")]
    Misaligned(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Per-image, per-label probabilities over the five pathology labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    image_ids: Vec<String>,
    probs: Vec<[f64; 5]>,
}

impl PredictionMatrix {
    pub fn new(image_ids: Vec<String>, probs: Vec<[f64; 5]>) -> Result<Self, MetricError> {
        if image_ids.len() != probs.len() {
            return Err(MetricError::LengthMismatch(image_ids.len(), probs.len()));
        }
        check_unique(&image_ids)?;
        for (id, row) in image_ids.iter().zip(&probs) {
            if let Some(&value) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(MetricError::InvalidProbability {
                    image_id: id.clone(),
                    value,
                });
            }
        }
        Ok(Self { image_ids, probs })
    }

    pub fn labels(&self) -> [DiagnosticLabel; 5] {
        DiagnosticLabel::PATHOLOGIES
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn rows(&self) -> &[[f64; 5]] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn column(&self, label: usize) -> Vec<f64> {
        self.probs.iter().map(|r| r[label]).collect()
    }
}

/// Binary truth over the five pathology labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMatrix {
    image_ids: Vec<String>,
    truth: Vec<[bool; 5]>,
}

impl GroundTruthMatrix {
    pub fn new(image_ids: Vec<String>, truth: Vec<[bool; 5]>) -> Result<Self, MetricError> {
        if image_ids.len() != truth.len() {
            return Err(MetricError::LengthMismatch(image_ids.len(), truth.len()));
        }
        check_unique(&image_ids)?;
        Ok(Self { image_ids, truth })
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn rows(&self) -> &[[bool; 5]] {
        &self.truth
    }

    /// Reorders rows to match `preds`; the id sets must be identical.
    pub fn aligned_to(&self, preds: &PredictionMatrix) -> Result<GroundTruthMatrix, MetricError> {
        if self.image_ids.len() != preds.image_ids.len() {
            return Err(MetricError::Misaligned(format!(
                "{} truth rows vs {} prediction rows",
                self.image_ids.len(),
                preds.image_ids.len()
            )));
        }
        let by_id: HashMap<&str, &[bool; 5]> = self
            .image_ids
            .iter()
            .map(String::as_str)
            .zip(&self.truth)
            .collect();
        let truth = preds
            .image_ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|r| **r)
                    .ok_or_else(|| MetricError::Misaligned(format!("no truth row for `{id}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GroundTruthMatrix {
            image_ids: preds.image_ids.clone(),
            truth,
        })
    }

    pub fn column(&self, label: usize) -> Vec<bool> {
        self.truth.iter().map(|r| r[label]).collect()
    }
}

/// Per-label decision thresholds in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    values: [f64; 5],
}

impl ThresholdVector {
    pub fn new(values: [f64; 5]) -> Result<Self, MetricError> {
        if let Some(t) = values.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(MetricError::Invalid(format!(
                "threshold {t} outside (0, 1)"
            )));
        }
        Ok(Self { values })
    }

    pub fn uniform(t: f64) -> Result<Self, MetricError> {
        Self::new([t; 5])
    }

    pub fn values(&self) -> &[f64; 5] {
        &self.values
    }
}

fn check_unique(ids: &[String]) -> Result<(), MetricError> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(MetricError::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_reorders_by_id() {
        let preds =
            PredictionMatrix::new(vec!["b".into(), "a".into()], vec![[0.1; 5], [0.9; 5]]).unwrap();
        let truth =
            GroundTruthMatrix::new(vec!["a".into(), "b".into()], vec![[true; 5], [false; 5]])
                .unwrap();
        let aligned = truth.aligned_to(&preds).unwrap();
        assert_eq!(aligned.rows(), &[[false; 5], [true; 5]]);
    }

    #[test]
    fn alignment_must_be_total() {
        let preds = PredictionMatrix::new(vec!["a".into()], vec![[0.1; 5]]).unwrap();
        let truth = GroundTruthMatrix::new(vec!["z".into()], vec![[true; 5]]).unwrap();
        assert!(matches!(
            truth.aligned_to(&preds),
            Err(MetricError::Misaligned(_))
        ));
    }

    #[test]
    fn matrix_validation() {
        assert!(matches!(
            PredictionMatrix::new(vec!["a".into()], vec![[1.2, 0.0, 0.0, 0.0, 0.0]]),
            Err(MetricError::InvalidProbability { .. })
        ));
        assert!(matches!(
            PredictionMatrix::new(vec!["a".into(), "a".into()], vec![[0.0; 5]; 2]),
            Err(MetricError::DuplicateId(_))
        ));
        assert!(ThresholdVector::uniform(0.0).is_err());
        assert!(ThresholdVector::uniform(0.5).is_ok());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(mean_std(&[0.7]).1, 0.0);
    }
}
