//! Concept-space perturbations: intra-class, insertion and deletion.
//!
//! Each strategy maps an [`AnnotatedRecord`] to a new concept vector whose
//! label set obeys the strategy's contract, then renders the generation
//! prompt for it. [`generate_perturbation_set`] drives the strategies with a
//! per-record RNG so that serial and parallel runs agree.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept::{
    AnnotatedRecord, ConceptError, ConceptVector, ConceptVocabulary, DiagnosticLabel, LabelSet,
};

/// Upper bound on unique perturbations per type per image.
pub const MAX_PER_TYPE: usize = 2;

/// Draw budget per type in [`generate_perturbation_set`].
pub const DRAW_BUDGET: usize = 64;

/// Pools up to this size are enumerated exhaustively; larger pools are
/// sampled by rejection.
const MAX_ENUMERATED_POOL: usize = 16;
const REJECTION_TRIES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationType {
    IntraClass,
    Insertion,
    Deletion,
}

impl PerturbationType {
    pub const ALL: [PerturbationType; 3] = [
        PerturbationType::IntraClass,
        PerturbationType::Insertion,
        PerturbationType::Deletion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationType::IntraClass => "intra_class",
            PerturbationType::Insertion => "insertion",
            PerturbationType::Deletion => "deletion",
        }
    }

    /// Human-readable row name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            PerturbationType::IntraClass => "Intra-class",
            PerturbationType::Insertion => "Insertion",
            PerturbationType::Deletion => "Deletion",
        }
    }

    fn tag(self) -> u64 {
        let k = match self {
            PerturbationType::IntraClass => 1u64,
            PerturbationType::Insertion => 2,
            PerturbationType::Deletion => 3,
        };
        k.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

impl fmt::Display for PerturbationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "intra_class" | "intraclass" | "intra" => Ok(PerturbationType::IntraClass),
            "insertion" | "insert" => Ok(PerturbationType::Insertion),
            "deletion" | "delete" => Ok(PerturbationType::Deletion),
            other => Err(format!("unknown perturbation type `{other}`")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PerturbError {
    #[error("{ptype} perturbation undefined for `{image_id}`: {reason}")]
    Undefined {
        ptype: PerturbationType,
        image_id: String,
        reason: String,
    },
    #[error("{ptype} perturbation not applicable to `{image_id}`: {reason}")]
    NotApplicable {
        ptype: PerturbationType,
        image_id: String,
        reason: String,
    },
    #[error(transparent)]
    Concept(#[from] ConceptError),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid perturbation plan: {0}")]
pub struct PlanError(String);

/// Which perturbation types to draw and how many unique results to keep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    requested_types: BTreeSet<PerturbationType>,
    max_per_type: usize,
    seed: u64,
}

impl PerturbationPlan {
    pub fn new(
        requested_types: impl IntoIterator<Item = PerturbationType>,
        max_per_type: usize,
        seed: u64,
    ) -> Result<Self, PlanError> {
        if !(1..=MAX_PER_TYPE).contains(&max_per_type) {
            return Err(PlanError(format!(
                "max_per_type must be in 1..={MAX_PER_TYPE}, got {max_per_type}"
            )));
        }
        let requested_types: BTreeSet<_> = requested_types.into_iter().collect();
        if requested_types.is_empty() {
            return Err(PlanError("no perturbation type requested".into()));
        }
        Ok(Self {
            requested_types,
            max_per_type,
            seed,
        })
    }

    /// All three types, two per type.
    pub fn all(seed: u64) -> Self {
        Self::new(PerturbationType::ALL, MAX_PER_TYPE, seed).expect("default plan is valid")
    }

    pub fn requested_types(&self) -> &BTreeSet<PerturbationType> {
        &self.requested_types
    }

    pub fn max_per_type(&self) -> usize {
        self.max_per_type
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// A perturbed vector with its derived labels, prompt and provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationResult {
    pub source_image_id: String,
    pub ptype: PerturbationType,
    pub perturbed: ConceptVector,
    pub perturbed_labels: LabelSet,
    pub prompt: String,
    pub seed: u64,
    pub sequence_index: usize,
}

impl PerturbationResult {
    /// Stable identifier used for request ids and synthetic image names.
    pub fn synthetic_id(&self) -> String {
        format!(
            "{}__{}_{}",
            self.source_image_id, self.ptype, self.sequence_index
        )
    }
}

/// Seeded ChaCha stream that remembers the seed it was built from.
#[derive(Debug, Clone)]
pub struct PerturbRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl PerturbRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for one (record, type) pair under a global seed.
    pub fn for_record(global_seed: u64, image_id: &str, ptype: PerturbationType) -> Self {
        Self::from_seed(derive_seed(global_seed, image_id, ptype))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl RngCore for PerturbRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// FNV-1a over the UTF-8 bytes; stable across platforms and releases.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn derive_seed(global_seed: u64, image_id: &str, ptype: PerturbationType) -> u64 {
    global_seed ^ stable_hash(image_id) ^ ptype.tag()
}

/// Joins the display phrases of set concepts in vocabulary order.
///
/// Absent findings are never mentioned; an Unremarkable-only vector renders
/// the Unremarkable display phrase.
pub fn build_prompt(v: &ConceptVector, vocab: &ConceptVocabulary) -> Result<String, ConceptError> {
    vocab.validate(v)?;
    Ok(v.ones()
        .map(|i| vocab.concept(i).display_phrase.as_str())
        .collect::<Vec<_>>()
        .join(", "))
}

/// Valid alternative vectors for one label, either listed or sampled lazily.
enum Candidates {
    Listed(Vec<ConceptVector>),
    Sampled(Vec<usize>),
}

/// Enumerates (or prepares to sample) non-empty subsets of `pool`; `build`
/// turns a subset mask into a vector, or `None` when the subset is invalid.
fn candidates<F>(pool: &[usize], build: &F) -> Option<Candidates>
where
    F: Fn(u64) -> Option<ConceptVector>,
{
    if pool.is_empty() {
        return None;
    }
    if pool.len() > MAX_ENUMERATED_POOL {
        return Some(Candidates::Sampled(pool.to_vec()));
    }
    let listed: Vec<_> = (1u64..(1u64 << pool.len())).filter_map(build).collect();
    (!listed.is_empty()).then_some(Candidates::Listed(listed))
}

fn draw<F>(c: Candidates, build: &F, rng: &mut PerturbRng) -> Option<ConceptVector>
where
    F: Fn(u64) -> Option<ConceptVector>,
{
    match c {
        Candidates::Listed(mut vs) => {
            let i = rng.random_range(0..vs.len());
            Some(vs.swap_remove(i))
        }
        Candidates::Sampled(pool) => {
            let width = pool.len().min(63);
            (0..REJECTION_TRIES).find_map(|_| {
                let mask = rng.next_u64() & ((1u64 << width) - 1);
                if mask == 0 {
                    None
                } else {
                    build(mask)
                }
            })
        }
    }
}

fn with_pool_bits(src: &ConceptVector, pool: &[usize], mask: u64) -> ConceptVector {
    let mut v = src.clone();
    for (k, &i) in pool.iter().enumerate() {
        v.set(i, mask & (1 << k) != 0);
    }
    v
}

fn finish(
    rec: &AnnotatedRecord,
    ptype: PerturbationType,
    perturbed: ConceptVector,
    vocab: &ConceptVocabulary,
    rng: &PerturbRng,
) -> Result<PerturbationResult, PerturbError> {
    let perturbed_labels = vocab.concepts_to_labels(&perturbed)?;
    let prompt = build_prompt(&perturbed, vocab)?;
    Ok(PerturbationResult {
        source_image_id: rec.image_id().to_string(),
        ptype,
        perturbed,
        perturbed_labels,
        prompt,
        seed: rng.seed(),
        sequence_index: 0,
    })
}

/// Swaps the concepts of one ground-truth label for a different non-empty
/// subset of that label's pool, keeping the label set unchanged.
pub fn perturb_intra_class(
    rec: &AnnotatedRecord,
    vocab: &ConceptVocabulary,
    rng: &mut PerturbRng,
) -> Result<PerturbationResult, PerturbError> {
    let ptype = PerturbationType::IntraClass;
    let pathology = rec.pathology_labels();
    if pathology.is_empty() {
        return Err(PerturbError::NotApplicable {
            ptype,
            image_id: rec.image_id().to_string(),
            reason: "record has no pathology label".into(),
        });
    }
    let src = rec.concepts();

    let make_build = |pool: Vec<usize>| {
        move |mask: u64| {
            let mut v = with_pool_bits(src, &pool, mask);
            vocab.normalize(&mut v);
            let same_labels = vocab.concepts_to_labels(&v).ok().as_ref() == Some(rec.labels());
            (v != *src && same_labels).then_some(v)
        }
    };

    let mut any_multi_concept = false;
    let mut options = Vec::new();
    for &label in &pathology {
        let pool = vocab.pool(label);
        if pool.len() < 2 {
            continue;
        }
        any_multi_concept = true;
        if let Some(c) = candidates(&pool, &make_build(pool.clone())) {
            options.push((pool, c));
        }
    }

    if options.is_empty() {
        let reason = if any_multi_concept {
            "no alternative subset preserves the label set"
        } else {
            "every ground-truth label is single-concept"
        };
        return Err(PerturbError::Undefined {
            ptype,
            image_id: rec.image_id().to_string(),
            reason: reason.into(),
        });
    }

    let (pool, chosen) = options.swap_remove(rng.random_range(0..options.len()));
    let perturbed =
        draw(chosen, &make_build(pool), rng).ok_or_else(|| PerturbError::Undefined {
            ptype,
            image_id: rec.image_id().to_string(),
            reason: "no alternative subset found within the sampling budget".into(),
        })?;
    finish(rec, ptype, perturbed, vocab, rng)
}

/// Adds a non-empty subset of one absent pathology's concepts.
///
/// Subsets that would also introduce a second absent label (through a
/// shared concept) are not eligible, so exactly one label is added.
pub fn perturb_insertion(
    rec: &AnnotatedRecord,
    vocab: &ConceptVocabulary,
    rng: &mut PerturbRng,
) -> Result<PerturbationResult, PerturbError> {
    let ptype = PerturbationType::Insertion;
    let pathology = rec.pathology_labels();
    let absent: Vec<_> = DiagnosticLabel::PATHOLOGIES
        .into_iter()
        .filter(|l| !pathology.contains(l))
        .collect();
    if absent.is_empty() {
        return Err(PerturbError::NotApplicable {
            ptype,
            image_id: rec.image_id().to_string(),
            reason: "all five pathology labels already present".into(),
        });
    }
    let src = rec.concepts();

    let make_build = |label: DiagnosticLabel, pool: Vec<usize>| {
        let mut expected = pathology.clone();
        expected.insert(label);
        move |mask: u64| {
            let mut v = src.clone();
            for (k, &i) in pool.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    v.set(i, true);
                }
            }
            vocab.normalize(&mut v);
            (vocab.concepts_to_labels(&v).ok() == Some(expected.clone())).then_some(v)
        }
    };

    let mut options = Vec::new();
    for label in absent {
        let pool = vocab.pool(label);
        if let Some(c) = candidates(&pool, &make_build(label, pool.clone())) {
            options.push((label, pool, c));
        }
    }
    if options.is_empty() {
        return Err(PerturbError::NotApplicable {
            ptype,
            image_id: rec.image_id().to_string(),
            reason: "no absent label can be inserted on its own".into(),
        });
    }

    let (label, pool, chosen) = options.swap_remove(rng.random_range(0..options.len()));
    let perturbed =
        draw(chosen, &make_build(label, pool), rng).ok_or_else(|| PerturbError::NotApplicable {
            ptype,
            image_id: rec.image_id().to_string(),
            reason: "no insertable subset found within the sampling budget".into(),
        })?;
    finish(rec, ptype, perturbed, vocab, rng)
}

/// Removes one pathology.
///
/// Multi-label records lose one seeded-uniform label (bits shared with a
/// surviving label are kept); single-label records become Unremarkable.
pub fn perturb_deletion(
    rec: &AnnotatedRecord,
    vocab: &ConceptVocabulary,
    rng: &mut PerturbRng,
) -> Result<PerturbationResult, PerturbError> {
    let ptype = PerturbationType::Deletion;
    let pathology = rec.pathology_labels();
    if pathology.is_empty() {
        return Err(PerturbError::NotApplicable {
            ptype,
            image_id: rec.image_id().to_string(),
            reason: "record has no pathology label".into(),
        });
    }

    if pathology.len() == 1 {
        return finish(rec, ptype, vocab.unremarkable_vector(), vocab, rng);
    }

    let src = rec.concepts();
    let mut options = Vec::new();
    for &removed in &pathology {
        let survivors: LabelSet = pathology
            .iter()
            .copied()
            .filter(|&l| l != removed)
            .collect();
        let mut v = src.clone();
        for i in vocab.pool(removed) {
            if vocab.concept(i).labels.is_disjoint(&survivors) {
                v.set(i, false);
            }
        }
        vocab.normalize(&mut v);
        if vocab.concepts_to_labels(&v).ok() == Some(survivors) {
            options.push(v);
        }
    }
    if options.is_empty() {
        return Err(PerturbError::NotApplicable {
            ptype,
            image_id: rec.image_id().to_string(),
            reason: "every label shares its evidence with another label".into(),
        });
    }
    let perturbed = options.swap_remove(rng.random_range(0..options.len()));
    finish(rec, ptype, perturbed, vocab, rng)
}

pub fn perturb(
    ptype: PerturbationType,
    rec: &AnnotatedRecord,
    vocab: &ConceptVocabulary,
    rng: &mut PerturbRng,
) -> Result<PerturbationResult, PerturbError> {
    match ptype {
        PerturbationType::IntraClass => perturb_intra_class(rec, vocab, rng),
        PerturbationType::Insertion => perturb_insertion(rec, vocab, rng),
        PerturbationType::Deletion => perturb_deletion(rec, vocab, rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipKind {
    Undefined,
    NotApplicable,
    Invalid,
}

impl From<&PerturbError> for SkipKind {
    fn from(e: &PerturbError) -> Self {
        match e {
            PerturbError::Undefined { .. } => SkipKind::Undefined,
            PerturbError::NotApplicable { .. } => SkipKind::NotApplicable,
            PerturbError::Concept(_) => SkipKind::Invalid,
        }
    }
}

/// A requested type that produced no result, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub source_image_id: String,
    pub ptype: PerturbationType,
    pub kind: SkipKind,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerturbationSet {
    pub results: Vec<PerturbationResult>,
    pub skips: Vec<Skip>,
}

/// Draws up to `plan.max_per_type()` unique perturbations per requested
/// type, in type order IntraClass, Insertion, Deletion.
pub fn generate_perturbation_set(
    rec: &AnnotatedRecord,
    plan: &PerturbationPlan,
    vocab: &ConceptVocabulary,
) -> PerturbationSet {
    let mut out = PerturbationSet::default();
    for &ptype in plan.requested_types() {
        let mut rng = PerturbRng::for_record(plan.seed(), rec.image_id(), ptype);
        let mut seen = HashSet::new();
        let mut kept = 0usize;
        for _ in 0..DRAW_BUDGET {
            match perturb(ptype, rec, vocab, &mut rng) {
                Ok(mut r) => {
                    if seen.insert(r.perturbed.clone()) {
                        r.sequence_index = kept;
                        out.results.push(r);
                        kept += 1;
                        if kept == plan.max_per_type() {
                            break;
                        }
                    }
                }
                Err(e) => {
                    log::debug!("{e}");
                    out.skips.push(Skip {
                        source_image_id: rec.image_id().to_string(),
                        ptype,
                        kind: SkipKind::from(&e),
                        reason: e.to_string(),
                    });
                    break;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::ConceptDef;

    fn vocab() -> ConceptVocabulary {
        ConceptVocabulary::bundled()
    }

    fn record(vocab: &ConceptVocabulary, id: &str, concepts: &[&str]) -> AnnotatedRecord {
        let mut v = ConceptVector::zeros(vocab.len());
        for c in concepts {
            v.set(vocab.index_of(c).unwrap(), true);
        }
        vocab.normalize(&mut v);
        AnnotatedRecord::new(id, "", v, vocab).unwrap()
    }

    fn labels(ls: &[DiagnosticLabel]) -> LabelSet {
        ls.iter().copied().collect()
    }

    #[test]
    fn intra_class_undefined_for_cardiomegaly() {
        let v = vocab();
        let rec = record(&v, "c1", &["cardiomegaly"]);
        let err = perturb_intra_class(&rec, &v, &mut PerturbRng::from_seed(1)).unwrap_err();
        assert!(matches!(err, PerturbError::Undefined { .. }), "{err:?}");
    }

    #[test]
    fn intra_class_not_applicable_for_normal() {
        let v = vocab();
        let rec = record(&v, "n1", &[]);
        let err = perturb_intra_class(&rec, &v, &mut PerturbRng::from_seed(1)).unwrap_err();
        assert!(matches!(err, PerturbError::NotApplicable { .. }));
    }

    #[test]
    fn intra_class_draws_cover_the_six_alternative_subsets() {
        let v = vocab();
        let rec = record(&v, "e1", &["pleural_effusion"]);
        let pool = v.pool(DiagnosticLabel::PleuralEffusion);
        // every non-empty subset of the three-concept pool except {pleural_effusion}
        let expected: BTreeSet<ConceptVector> = (1u64..8)
            .map(|mask| with_pool_bits(rec.concepts(), &pool, mask))
            .filter(|c| c != rec.concepts())
            .collect();
        assert_eq!(expected.len(), 6);

        let mut seen = BTreeSet::new();
        for seed in 0..200 {
            let r = perturb_intra_class(&rec, &v, &mut PerturbRng::from_seed(seed)).unwrap();
            assert_eq!(
                r.perturbed_labels,
                labels(&[DiagnosticLabel::PleuralEffusion])
            );
            assert!(expected.contains(&r.perturbed));
            seen.insert(r.perturbed);
        }
        assert_eq!(seen, expected);
    }

    #[test]
    fn intra_class_deterministic_under_seed() {
        let v = vocab();
        let rec = record(&v, "e1", &["pleural_effusion", "cardiomegaly"]);
        let a = perturb_intra_class(&rec, &v, &mut PerturbRng::from_seed(42)).unwrap();
        let b = perturb_intra_class(&rec, &v, &mut PerturbRng::from_seed(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn insertion_keeps_original_and_adds_one_label() {
        let v = vocab();
        let rec = record(&v, "c1", &["cardiomegaly"]);
        let card = v.index_of("cardiomegaly").unwrap();
        let mut saw_pneumothorax = false;
        for seed in 0..100 {
            let r = perturb_insertion(&rec, &v, &mut PerturbRng::from_seed(seed)).unwrap();
            assert!(r.perturbed.get(card));
            assert!(r.perturbed_labels.contains(&DiagnosticLabel::Cardiomegaly));
            assert_eq!(r.perturbed_labels.len(), 2);
            if r.perturbed_labels.contains(&DiagnosticLabel::Pneumothorax) {
                saw_pneumothorax = true;
                assert_eq!(
                    r.perturbed_labels,
                    labels(&[DiagnosticLabel::Cardiomegaly, DiagnosticLabel::Pneumothorax])
                );
            }
        }
        assert!(saw_pneumothorax);
    }

    #[test]
    fn insertion_from_unremarkable() {
        let v = vocab();
        let rec = record(&v, "n1", &[]);
        for seed in 0..50 {
            let r = perturb_insertion(&rec, &v, &mut PerturbRng::from_seed(seed)).unwrap();
            assert!(!r.perturbed.get(v.unremarkable_index()));
            assert_eq!(r.perturbed_labels.len(), 1);
            assert!(!r
                .perturbed_labels
                .contains(&DiagnosticLabel::NoRelevantFinding));
        }
    }

    #[test]
    fn insertion_not_applicable_when_all_present() {
        let v = vocab();
        let rec = record(
            &v,
            "all",
            &[
                "apical_pneumothorax",
                "airspace_consolidation",
                "pleural_effusion",
                "cardiomegaly",
                "lung_mass",
            ],
        );
        assert_eq!(rec.pathology_labels().len(), 5);
        let err = perturb_insertion(&rec, &v, &mut PerturbRng::from_seed(3)).unwrap_err();
        assert!(matches!(err, PerturbError::NotApplicable { .. }));
    }

    #[test]
    fn deletion_single_label_goes_to_no_relevant_finding() {
        let v = vocab();
        let rec = record(&v, "p1", &["airspace_consolidation", "air_bronchograms"]);
        let r = perturb_deletion(&rec, &v, &mut PerturbRng::from_seed(0)).unwrap();
        assert_eq!(r.perturbed, v.unremarkable_vector());
        assert_eq!(
            r.perturbed_labels,
            labels(&[DiagnosticLabel::NoRelevantFinding])
        );
        assert_eq!(r.prompt, "no acute cardiopulmonary findings");
    }

    #[test]
    fn deletion_multi_label_removes_exactly_one() {
        let v = vocab();
        let rec = record(&v, "pe", &["airspace_consolidation", "pleural_effusion"]);
        let consolidation = v.index_of("airspace_consolidation").unwrap();
        let mut removed_pneumonia = false;
        for seed in 0..40 {
            let r = perturb_deletion(&rec, &v, &mut PerturbRng::from_seed(seed)).unwrap();
            assert_eq!(r.perturbed_labels.len(), 1);
            if r.perturbed_labels == labels(&[DiagnosticLabel::PleuralEffusion]) {
                removed_pneumonia = true;
                assert!(!r.perturbed.get(consolidation));
            }
        }
        assert!(removed_pneumonia);
    }

    #[test]
    fn deletion_keeps_shared_bits() {
        let v = vocab();
        // focal opacity is owned by Pneumonia and SuspiciousMalignancy, so
        // neither of those can be removed while the other survives; only the
        // effusion is deletable and the shared bit stays.
        let rec = record(
            &v,
            "pm",
            &[
                "airspace_consolidation",
                "focal_opacity",
                "pleural_effusion",
            ],
        );
        let opacity = v.index_of("focal_opacity").unwrap();
        for seed in 0..40 {
            let r = perturb_deletion(&rec, &v, &mut PerturbRng::from_seed(seed)).unwrap();
            assert!(r.perturbed.get(opacity));
            assert_eq!(
                r.perturbed_labels,
                labels(&[
                    DiagnosticLabel::Pneumonia,
                    DiagnosticLabel::SuspiciousMalignancy
                ])
            );
        }
    }

    #[test]
    fn deletion_not_applicable_when_evidence_is_fully_shared() {
        let v = vocab();
        let rec = record(&v, "op", &["focal_opacity"]);
        assert_eq!(rec.pathology_labels().len(), 2);
        let err = perturb_deletion(&rec, &v, &mut PerturbRng::from_seed(0)).unwrap_err();
        assert!(matches!(err, PerturbError::NotApplicable { .. }));
    }

    #[test]
    fn deletion_not_applicable_for_normal() {
        let v = vocab();
        let rec = record(&v, "n", &[]);
        assert!(matches!(
            perturb_deletion(&rec, &v, &mut PerturbRng::from_seed(0)),
            Err(PerturbError::NotApplicable { .. })
        ));
    }

    #[test]
    fn cardiomegaly_only_set() {
        let v = vocab();
        let rec = record(&v, "c1", &["cardiomegaly"]);
        let set = generate_perturbation_set(&rec, &PerturbationPlan::all(7), &v);
        let count = |t| set.results.iter().filter(|r| r.ptype == t).count();
        assert_eq!(count(PerturbationType::IntraClass), 0);
        assert!(count(PerturbationType::Insertion) <= 2);
        assert_eq!(count(PerturbationType::Deletion), 1);
        assert_eq!(set.skips.len(), 1);
        assert_eq!(set.skips[0].ptype, PerturbationType::IntraClass);
    }

    #[test]
    fn uniqueness_cap_with_single_alternative() {
        // L owns {a, b}; b is also M's only concept. With both set, the only
        // label-preserving alternative for L is {b}.
        let concepts = vec![
            ConceptDef {
                id: "u".into(),
                display_phrase: "normal".into(),
                trigger_phrases: vec!["normal".into()],
                labels: LabelSet::new(),
            },
            ConceptDef {
                id: "a".into(),
                display_phrase: "alpha".into(),
                trigger_phrases: vec!["alpha".into()],
                labels: labels(&[DiagnosticLabel::Pneumonia]),
            },
            ConceptDef {
                id: "b".into(),
                display_phrase: "beta".into(),
                trigger_phrases: vec!["beta".into()],
                labels: labels(&[
                    DiagnosticLabel::Pneumonia,
                    DiagnosticLabel::SuspiciousMalignancy,
                ]),
            },
        ];
        let v = ConceptVocabulary::new(concepts, "u").unwrap();
        let rec = record(&v, "r", &["a", "b"]);
        let plan = PerturbationPlan::new([PerturbationType::IntraClass], 2, 11).unwrap();
        let set = generate_perturbation_set(&rec, &plan, &v);
        assert_eq!(set.results.len(), 1);
        assert_eq!(set.results[0].perturbed.to_bit_string(), "001");
    }

    #[test]
    fn generation_deterministic_and_ordered() {
        let v = vocab();
        let rec = record(&v, "x", &["pleural_effusion", "airspace_consolidation"]);
        let plan = PerturbationPlan::all(5);
        let a = generate_perturbation_set(&rec, &plan, &v);
        let b = generate_perturbation_set(&rec, &plan, &v);
        assert_eq!(a, b);
        let order: Vec<_> = a
            .results
            .iter()
            .map(|r| (r.ptype, r.sequence_index))
            .collect();
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted);
    }

    #[test]
    fn prompts() {
        let v = vocab();
        let rec = record(&v, "e", &["pleural_effusion"]);
        assert_eq!(
            build_prompt(rec.concepts(), &v).unwrap(),
            "pleural effusion"
        );
        assert_eq!(
            build_prompt(&v.unremarkable_vector(), &v).unwrap(),
            "no acute cardiopulmonary findings"
        );
        let two = record(&v, "t", &["lung_mass", "apical_pneumothorax"]);
        let p = build_prompt(two.concepts(), &v).unwrap();
        assert_eq!(p, "apical pneumothorax, lung mass");
        for word in ["no", "not", "without", "absent", "removed"] {
            assert!(!p.split(|c: char| !c.is_alphanumeric()).any(|w| w == word));
        }
        assert!(build_prompt(&ConceptVector::zeros(v.len()), &v).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(PerturbationPlan::new([PerturbationType::Deletion], 0, 1).is_err());
        assert!(PerturbationPlan::new([PerturbationType::Deletion], 3, 1).is_err());
        assert!(PerturbationPlan::new([], 2, 1).is_err());
        assert!("delete".parse::<PerturbationType>().is_ok());
    }

    #[test]
    fn seed_derivation_depends_on_all_inputs() {
        let a = derive_seed(1, "img", PerturbationType::Insertion);
        assert_ne!(a, derive_seed(2, "img", PerturbationType::Insertion));
        assert_ne!(a, derive_seed(1, "img2", PerturbationType::Insertion));
        assert_ne!(a, derive_seed(1, "img", PerturbationType::Deletion));
        assert_eq!(stable_hash(""), 0xcbf2_9ce4_8422_2325);
    }
}
