//! Clinical concept space.
//!
//! A [`ConceptVocabulary`] is an ordered registry of expert-defined findings,
//! each owning one or more diagnostic labels. Reports are annotated into
//! fixed-length binary [`ConceptVector`]s by phrase matching, and vectors map
//! deterministically onto a set of [`DiagnosticLabel`]s.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while loading a vocabulary file.
#[derive(Debug, Error)]
pub enum VocabError {
    #[error("failed to read vocabulary {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed vocabulary file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("vocabulary schema violation at concept `{concept_id}`: {reason}")]
    Schema { concept_id: String, reason: String },
}

/// Errors raised by vector-level operations.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConceptError {
    #[error("invalid concept vector: {0}")]
    InvalidVector(String),
}

/// One of the six diagnostic labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosticLabel {
    Pneumothorax,
    Pneumonia,
    PleuralEffusion,
    Cardiomegaly,
    SuspiciousMalignancy,
    NoRelevantFinding,
}

impl DiagnosticLabel {
    /// The five pathology labels, in canonical column order.
    pub const PATHOLOGIES: [DiagnosticLabel; 5] = [
        DiagnosticLabel::Pneumothorax,
        DiagnosticLabel::Pneumonia,
        DiagnosticLabel::PleuralEffusion,
        DiagnosticLabel::Cardiomegaly,
        DiagnosticLabel::SuspiciousMalignancy,
    ];

    pub const ALL: [DiagnosticLabel; 6] = [
        DiagnosticLabel::Pneumothorax,
        DiagnosticLabel::Pneumonia,
        DiagnosticLabel::PleuralEffusion,
        DiagnosticLabel::Cardiomegaly,
        DiagnosticLabel::SuspiciousMalignancy,
        DiagnosticLabel::NoRelevantFinding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticLabel::Pneumothorax => "Pneumothorax",
            DiagnosticLabel::Pneumonia => "Pneumonia",
            DiagnosticLabel::PleuralEffusion => "PleuralEffusion",
            DiagnosticLabel::Cardiomegaly => "Cardiomegaly",
            DiagnosticLabel::SuspiciousMalignancy => "SuspiciousMalignancy",
            DiagnosticLabel::NoRelevantFinding => "NoRelevantFinding",
        }
    }

    pub fn is_pathology(self) -> bool {
        self != DiagnosticLabel::NoRelevantFinding
    }
}

impl fmt::Display for DiagnosticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiagnosticLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DiagnosticLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown diagnostic label `{s}`"))
    }
}

/// A set of diagnostic labels, iterated in canonical order.
pub type LabelSet = BTreeSet<DiagnosticLabel>;

/// Fixed-length binary presence vector over a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptVector {
    bits: Vec<bool>,
}

impl ConceptVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Parses a `0`/`1` string such as `"0100000000000"`.
    pub fn from_bit_string(s: &str) -> Result<Self, ConceptError> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(ConceptError::InvalidVector(format!(
                    "unexpected character `{other}` in bit string"
                ))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self::from_bits)
    }

    pub fn to_bit_string(&self) -> String {
        self.bits
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.bits[index] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_all_zero(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}

impl fmt::Display for ConceptVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

/// A single clinical concept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptDef {
    pub id: String,
    pub display_phrase: String,
    pub trigger_phrases: Vec<String>,
    pub labels: LabelSet,
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabularyFile {
    unremarkable: String,
    concepts: Vec<ConceptEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConceptEntry {
    id: String,
    display_phrase: String,
    trigger_phrases: Vec<String>,
    #[serde(default)]
    labels: Vec<String>,
}

const BUNDLED_VOCABULARY: &str = include_str!("../fixtures/vocabulary.json");

/// Ordered, validated registry of clinical concepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptVocabulary {
    concepts: Vec<ConceptDef>,
    unremarkable_index: usize,
}

impl ConceptVocabulary {
    /// Builds a vocabulary, enforcing every schema invariant.
    ///
    /// Trigger phrases are lowercased and whitespace-normalized so that
    /// matching against normalized report text is a plain substring test.
    pub fn new(concepts: Vec<ConceptDef>, unremarkable_id: &str) -> Result<Self, VocabError> {
        let schema = |id: &str, reason: &str| VocabError::Schema {
            concept_id: id.to_string(),
            reason: reason.to_string(),
        };

        let mut seen = HashSet::new();
        let mut unremarkable_index = None;
        let mut normalized = Vec::with_capacity(concepts.len());
        for mut c in concepts {
            if c.id.trim().is_empty() {
                return Err(schema(&c.id, "concept id is empty"));
            }
            if !seen.insert(c.id.clone()) {
                return Err(schema(&c.id, "duplicate concept id"));
            }
            if c.display_phrase.trim().is_empty() {
                return Err(schema(&c.id, "display phrase is empty"));
            }
            if c.trigger_phrases.is_empty() {
                return Err(schema(&c.id, "concept has no trigger phrases"));
            }
            for phrase in &mut c.trigger_phrases {
                *phrase = normalize_text(phrase);
                if phrase.is_empty() {
                    return Err(schema(&c.id, "trigger phrase is empty"));
                }
            }
            if c.labels.contains(&DiagnosticLabel::NoRelevantFinding) {
                return Err(schema(
                    &c.id,
                    "NoRelevantFinding cannot be owned by a concept",
                ));
            }
            if c.id == unremarkable_id {
                if !c.labels.is_empty() {
                    return Err(schema(
                        &c.id,
                        "the Unremarkable concept must not list labels",
                    ));
                }
                unremarkable_index = Some(normalized.len());
            } else if c.labels.is_empty() {
                return Err(schema(&c.id, "pathology concept maps to no label"));
            }
            normalized.push(c);
        }

        let unremarkable_index = unremarkable_index
            .ok_or_else(|| schema(unremarkable_id, "unremarkable concept id not found"))?;

        Ok(Self {
            concepts: normalized,
            unremarkable_index,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self, VocabError> {
        let file: VocabularyFile = serde_json::from_str(s)?;
        let mut concepts = Vec::with_capacity(file.concepts.len());
        for entry in file.concepts {
            let mut labels = LabelSet::new();
            for raw in &entry.labels {
                let label = raw.parse().map_err(|reason| VocabError::Schema {
                    concept_id: entry.id.clone(),
                    reason,
                })?;
                labels.insert(label);
            }
            concepts.push(ConceptDef {
                id: entry.id,
                display_phrase: entry.display_phrase,
                trigger_phrases: entry.trigger_phrases,
                labels,
            });
        }
        Self::new(concepts, &file.unremarkable)
    }

    /// Loads and validates a JSON vocabulary file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| VocabError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// The 13-concept vocabulary shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json_str(BUNDLED_VOCABULARY).expect("bundled vocabulary is valid")
    }

    pub fn to_json_string(&self) -> String {
        let file = VocabularyFile {
            unremarkable: self.concepts[self.unremarkable_index].id.clone(),
            concepts: self
                .concepts
                .iter()
                .map(|c| ConceptEntry {
                    id: c.id.clone(),
                    display_phrase: c.display_phrase.clone(),
                    trigger_phrases: c.trigger_phrases.clone(),
                    labels: c.labels.iter().map(|l| l.as_str().to_string()).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> &[ConceptDef] {
        &self.concepts
    }

    pub fn concept(&self, index: usize) -> &ConceptDef {
        &self.concepts[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c.id == id)
    }

    pub fn unremarkable_index(&self) -> usize {
        self.unremarkable_index
    }

    /// Indices of the concepts owning `label`, in vocabulary order.
    pub fn pool(&self, label: DiagnosticLabel) -> Vec<usize> {
        self.concepts
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.labels.contains(&label).then_some(i))
            .collect()
    }

    /// A vector with only the Unremarkable bit set.
    pub fn unremarkable_vector(&self) -> ConceptVector {
        let mut v = ConceptVector::zeros(self.len());
        v.set(self.unremarkable_index, true);
        v
    }

    pub fn has_pathology(&self, v: &ConceptVector) -> bool {
        v.ones().any(|i| i != self.unremarkable_index)
    }

    /// Enforces the Unremarkable rule: cleared when any pathology bit is set,
    /// set when nothing else is.
    pub fn normalize(&self, v: &mut ConceptVector) {
        let pathology = self.has_pathology(v);
        v.set(self.unremarkable_index, !pathology);
    }

    /// Checks length and the Unremarkable exclusivity invariant.
    pub fn validate(&self, v: &ConceptVector) -> Result<(), ConceptError> {
        if v.len() != self.len() {
            return Err(ConceptError::InvalidVector(format!(
                "vector has {} bits, vocabulary has {} concepts",
                v.len(),
                self.len()
            )));
        }
        if v.is_all_zero() {
            return Err(ConceptError::InvalidVector("no bit is set".into()));
        }
        if v.get(self.unremarkable_index) && self.has_pathology(v) {
            return Err(ConceptError::InvalidVector(
                "Unremarkable is set together with a pathology concept".into(),
            ));
        }
        Ok(())
    }

    /// Converts free report text into a normalized concept vector.
    pub fn annotate_report(&self, text: &str) -> ConceptVector {
        let text = normalize_text(text);
        let mut v = ConceptVector::zeros(self.len());
        for (i, concept) in self.concepts.iter().enumerate() {
            if concept
                .trigger_phrases
                .iter()
                .any(|p| text.contains(p.as_str()))
            {
                v.set(i, true);
            }
        }
        self.normalize(&mut v);
        v
    }

    /// Union of the labels of every set pathology concept; an
    /// Unremarkable-only vector maps to `{NoRelevantFinding}`.
    pub fn concepts_to_labels(&self, v: &ConceptVector) -> Result<LabelSet, ConceptError> {
        self.validate(v)?;
        let labels: LabelSet = v
            .ones()
            .flat_map(|i| self.concepts[i].labels.iter().copied())
            .collect();
        if labels.is_empty() {
            Ok(LabelSet::from([DiagnosticLabel::NoRelevantFinding]))
        } else {
            Ok(labels)
        }
    }
}

/// Lowercases and collapses whitespace runs to single spaces.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A record whose label set is always derived from its concepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedRecord {
    image_id: String,
    report_text: String,
    concepts: ConceptVector,
    labels: LabelSet,
}

impl AnnotatedRecord {
    pub fn new(
        image_id: impl Into<String>,
        report_text: impl Into<String>,
        concepts: ConceptVector,
        vocab: &ConceptVocabulary,
    ) -> Result<Self, ConceptError> {
        let labels = vocab.concepts_to_labels(&concepts)?;
        Ok(Self {
            image_id: image_id.into(),
            report_text: report_text.into(),
            concepts,
            labels,
        })
    }

    /// Annotates `report_text` and wraps the result.
    pub fn from_report(
        image_id: impl Into<String>,
        report_text: impl Into<String>,
        vocab: &ConceptVocabulary,
    ) -> Self {
        let report_text = report_text.into();
        let concepts = vocab.annotate_report(&report_text);
        Self::new(image_id, report_text, concepts, vocab)
            .expect("annotate_report always yields a valid vector")
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn report_text(&self) -> &str {
        &self.report_text
    }

    pub fn concepts(&self) -> &ConceptVector {
        &self.concepts
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn pathology_labels(&self) -> LabelSet {
        self.labels
            .iter()
            .copied()
            .filter(|l| l.is_pathology())
            .collect()
    }

    pub fn is_no_relevant_finding(&self) -> bool {
        self.labels.contains(&DiagnosticLabel::NoRelevantFinding)
    }
}
