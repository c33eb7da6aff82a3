//! Concept-level agreement between intended and recovered concept vectors.

use serde::Serialize;

use super::MetricError;
use crate::concept::{ConceptVector, ConceptVocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemanticUncertainty {
    pub jaccard: f64,
    pub hamming_norm: f64,
    pub precision: f64,
    pub recall: f64,
    /// Hallucinated findings.
    pub u_fp: f64,
    /// Missed findings.
    pub u_fn: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Compares `predicted` against `truth`. Set-based scores ignore the
/// unremarkable concept; Hamming distance covers every bit.
pub fn semantic_uncertainty(
    predicted: &ConceptVector,
    truth: &ConceptVector,
    vocab: &ConceptVocabulary,
) -> Result<SemanticUncertainty, MetricError> {
    let n = vocab.len();
    if predicted.len() != n || truth.len() != n {
        return Err(MetricError::LengthMismatch(predicted.len(), truth.len()));
    }
    let skip = vocab.unremarkable_index();
    let (mut both, mut pred_only, mut truth_only, mut differing) = (0, 0, 0, 0);
    for i in 0..n {
        let (p, t) = (predicted.get(i), truth.get(i));
        differing += usize::from(p != t);
        if i == skip {
            continue;
        }
        match (p, t) {
            (true, true) => both += 1,
            (true, false) => pred_only += 1,
            (false, true) => truth_only += 1,
            (false, false) => {}
        }
    }
    let precision = ratio(both, both + pred_only);
    let recall = ratio(both, both + truth_only);
    Ok(SemanticUncertainty {
        jaccard: ratio(both, both + pred_only + truth_only),
        hamming_norm: differing as f64 / n as f64,
        precision,
        recall,
        u_fp: 1.0 - precision,
        u_fn: 1.0 - recall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(bits: &str) -> ConceptVector {
        ConceptVector::from_bit_string(bits).unwrap()
    }

    #[test]
    fn superset_prediction() {
        let vocab = ConceptVocabulary::bundled();
        let s = semantic_uncertainty(&v("0100110000000"), &v("0100000000000"), &vocab).unwrap();
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.u_fp - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((s.recall, s.u_fn), (1.0, 0.0));
        assert!((s.jaccard - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.hamming_norm - 2.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn unremarkable_pair_scores_one() {
        let vocab = ConceptVocabulary::bundled();
        let u = vocab.unremarkable_vector();
        let s = semantic_uncertainty(&u, &u, &vocab).unwrap();
        assert_eq!(
            (s.jaccard, s.hamming_norm, s.u_fp, s.u_fn),
            (1.0, 0.0, 0.0, 0.0)
        );
    }
}
