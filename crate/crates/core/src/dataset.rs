//! Dataset construction: majority undersampling, multi-label stratified
//! splitting and uniform subset sampling.
//!
//! Every operation sorts records by `image_id` before drawing from its
//! seeded RNG, so results do not depend on manifest file order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept::{AnnotatedRecord, DiagnosticLabel};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("manifest contains no abnormal record")]
    NoAbnormalRecords,
    #[error("duplicate image id `{0}` in manifest")]
    DuplicateImageId(String),
    #[error("cannot sample {requested} records from a manifest of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("undersampling factor must be positive and finite, got {0}")]
    InvalidFactor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Real,
    SyntheticCars,
    SyntheticOther,
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Provenance::Real),
            "synthetic_cars" => Ok(Provenance::SyntheticCars),
            "synthetic_other" => Ok(Provenance::SyntheticOther),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

/// Annotated records with unique image ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<AnnotatedRecord>,
    provenance: Provenance,
}

impl Manifest {
    pub fn new(
        records: Vec<AnnotatedRecord>,
        provenance: Provenance,
    ) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.image_id()) {
                return Err(DatasetError::DuplicateImageId(r.image_id().to_string()));
            }
        }
        Ok(Self {
            records,
            provenance,
        })
    }

    pub fn records(&self) -> &[AnnotatedRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<AnnotatedRecord> {
        self.records
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of records carrying each label.
    pub fn label_counts(&self) -> BTreeMap<DiagnosticLabel, usize> {
        let mut counts: BTreeMap<_, _> = DiagnosticLabel::ALL.iter().map(|&l| (l, 0)).collect();
        for r in &self.records {
            for l in r.labels() {
                *counts.entry(*l).or_default() += 1;
            }
        }
        counts
    }

    /// Record indices in ascending `image_id` order.
    fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.sort_by(|&a, &b| self.records[a].image_id().cmp(self.records[b].image_id()));
        order
    }

    /// Keeps records whose id is in `keep`, preserving input order.
    fn retain_ids(&self, keep: &HashSet<&str>) -> Manifest {
        Manifest {
            records: self
                .records
                .iter()
                .filter(|r| keep.contains(r.image_id()))
                .cloned()
                .collect(),
            provenance: self.provenance,
        }
    }
}

/// Reduces NoRelevantFinding-only records to `ceil(factor × largest
/// abnormal label count)`; abnormal records are never touched.
pub fn undersample_majority(
    m: &Manifest,
    factor: f64,
    seed: u64,
) -> Result<Manifest, DatasetError> {
    if m.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    if !(factor.is_finite() && factor > 0.0) {
        return Err(DatasetError::InvalidFactor(factor));
    }
    let counts = m.label_counts();
    let largest = DiagnosticLabel::PATHOLOGIES
        .iter()
        .map(|l| counts[l])
        .max()
        .unwrap_or(0);
    if largest == 0 {
        return Err(DatasetError::NoAbnormalRecords);
    }
    let target = (factor * largest as f64).ceil() as usize;

    let normal: Vec<usize> = m
        .canonical_order()
        .into_iter()
        .filter(|&i| m.records[i].is_no_relevant_finding())
        .collect();
    if normal.len() <= target {
        return Ok(m.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dropped_pool: HashSet<&str> = normal.iter().map(|&i| m.records[i].image_id()).collect();
    let kept_normal: HashSet<&str> = index::sample(&mut rng, normal.len(), target)
        .into_iter()
        .map(|k| m.records[normal[k]].image_id())
        .collect();
    let keep: HashSet<&str> = m
        .records
        .iter()
        .map(|r| r.image_id())
        .filter(|id| !dropped_pool.contains(id) || kept_normal.contains(id))
        .collect();
    Ok(m.retain_ids(&keep))
}

/// Seeded uniform sample without replacement; input order is preserved.
pub fn uniform_sample(m: &Manifest, n: usize, seed: u64) -> Result<Manifest, DatasetError> {
    if n > m.len() {
        return Err(DatasetError::SampleTooLarge {
            requested: n,
            available: m.len(),
        });
    }
    let order = m.canonical_order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep: HashSet<&str> = index::sample(&mut rng, order.len(), n)
        .into_iter()
        .map(|k| m.records[order[k]].image_id())
        .collect();
    Ok(m.retain_ids(&keep))
}

/// Seeded sample of `n` distinct ids, returned in ascending order.
pub fn sample_ids<'a>(ids: &[&'a str], n: usize, seed: u64) -> Result<Vec<&'a str>, DatasetError> {
    let mut sorted: Vec<&str> = ids.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(DatasetError::DuplicateImageId(w[0].to_string()));
    }
    if n > sorted.len() {
        return Err(DatasetError::SampleTooLarge {
            requested: n,
            available: sorted.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, sorted.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|k| sorted[k]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A total, disjoint assignment of image ids to splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    assignment: BTreeMap<String, Split>,
    fractions: Vec<(Split, f64)>,
}

impl SplitAssignment {
    pub fn get(&self, image_id: &str) -> Option<Split> {
        self.assignment.get(image_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Split)> {
        self.assignment.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn fractions(&self) -> &[(Split, f64)] {
        &self.fractions
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignment.values().filter(|&&s| s == split).count()
    }

    pub fn ids_in(&self, split: Split) -> Vec<&str> {
        self.iter()
            .filter_map(|(id, s)| (s == split).then_some(id))
            .collect()
    }
}

/// Integer split sizes by largest remainder; ties go to the larger fraction,
/// then to the earlier split.
fn split_quotas(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n - quotas.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..fractions.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra)
            .then(fractions[b].total_cmp(&fractions[a]))
            .then(a.cmp(&b))
    });
    for &k in by_remainder.iter().cycle() {
        if left == 0 {
            break;
        }
        quotas[k] += 1;
        left -= 1;
    }
    quotas
}

/// Second-order iterative stratification over the multi-hot label matrix
/// (all six labels, so NoRelevantFinding is stratified too).
///
/// Two fractions produce a train/val split, three a train/val/test split.
/// Split sizes are exact largest-remainder quotas of `n × fraction`.
pub fn stratified_split(
    m: &Manifest,
    fractions: &[f64],
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    let splits: &[Split] = match fractions.len() {
        2 => &[Split::Train, Split::Val],
        3 => &[Split::Train, Split::Val, Split::Test],
        k => {
            return Err(DatasetError::InvalidFractions(format!(
                "expected 2 or 3 fractions, got {k}"
            )))
        }
    };
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(DatasetError::InvalidFractions(
            "fractions must be positive".into(),
        ));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidFractions(format!(
            "fractions sum to {total}, not 1"
        )));
    }
    if m.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }

    let n = m.len();
    let k = fractions.len();
    let mut capacity = split_quotas(n, fractions);

    let label_index =
        |l: &DiagnosticLabel| DiagnosticLabel::ALL.iter().position(|x| x == l).unwrap();
    let combos_of: Vec<Vec<usize>> = m
        .records
        .iter()
        .map(|r| {
            let ls: Vec<usize> = r.labels().iter().map(label_index).collect();
            let mut combos = Vec::new();
            for (a, &la) in ls.iter().enumerate() {
                for &lb in &ls[a..] {
                    combos.push(la * DiagnosticLabel::ALL.len() + lb);
                }
            }
            combos
        })
        .collect();

    let mut order = m.canonical_order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut rows_by_combo: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &row in &order {
        for &c in &combos_of[row] {
            rows_by_combo.entry(c).or_default().push(row);
        }
    }
    let mut remaining: HashMap<usize, usize> = rows_by_combo
        .iter()
        .map(|(&c, rows)| (c, rows.len()))
        .collect();
    let mut desired: HashMap<usize, Vec<f64>> = rows_by_combo
        .iter()
        .map(|(&c, rows)| (c, fractions.iter().map(|f| f * rows.len() as f64).collect()))
        .collect();

    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut left = n;
    while left > 0 {
        let combo = *remaining
            .iter()
            .filter(|(_, &count)| count > 0)
            .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
            .map(|(c, _)| c)
            .expect("unassigned rows always carry a combination");

        for &row in &rows_by_combo[&combo] {
            if assigned[row].is_some() {
                continue;
            }
            let want = &desired[&combo];
            let fold = (0..k)
                .filter(|&f| capacity[f] > 0)
                .max_by(|&a, &b| {
                    want[a]
                        .total_cmp(&want[b])
                        .then(capacity[a].cmp(&capacity[b]))
                        .then(b.cmp(&a))
                })
                .expect("total capacity equals the number of rows");
            assigned[row] = Some(fold);
            capacity[fold] -= 1;
            left -= 1;
            for c in &combos_of[row] {
                *remaining.get_mut(c).unwrap() -= 1;
                desired.get_mut(c).unwrap()[fold] -= 1.0;
            }
        }
    }

    let assignment = m
        .records
        .iter()
        .zip(assigned)
        .map(|(r, f)| (r.image_id().to_string(), splits[f.unwrap()]))
        .collect();
    Ok(SplitAssignment {
        assignment,
        fractions: splits
            .iter()
            .copied()
            .zip(fractions.iter().copied())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::{ConceptVector, ConceptVocabulary};

    fn rec(vocab: &ConceptVocabulary, id: &str, concepts: &[&str]) -> AnnotatedRecord {
        let mut v = ConceptVector::zeros(vocab.len());
        for c in concepts {
            v.set(vocab.index_of(c).unwrap(), true);
        }
        vocab.normalize(&mut v);
        AnnotatedRecord::new(id, "", v, vocab).unwrap()
    }

    fn manifest(abnormal: usize, normal: usize) -> Manifest {
        let v = ConceptVocabulary::bundled();
        let mut records = Vec::new();
        for i in 0..abnormal {
            records.push(rec(&v, &format!("a{i:05}"), &["cardiomegaly"]));
        }
        for i in 0..normal {
            records.push(rec(&v, &format!("n{i:05}"), &[]));
        }
        Manifest::new(records, Provenance::Real).unwrap()
    }

    #[test]
    fn sample_ids_is_order_free() {
        let a = sample_ids(&["c", "a", "b", "d"], 2, 9).unwrap();
        let b = sample_ids(&["d", "b", "a", "c"], 2, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_ids(&["a"], 2, 0).is_err());
        assert!(sample_ids(&["a", "a"], 1, 0).is_err());
    }

    #[test]
    fn undersample_to_twice_largest() {
        let m = manifest(3000, 20_000);
        let out = undersample_majority(&m, 2.0, 1).unwrap();
        let counts = out.label_counts();
        assert_eq!(counts[&DiagnosticLabel::NoRelevantFinding], 6000);
        assert_eq!(counts[&DiagnosticLabel::Cardiomegaly], 3000);
    }

    #[test]
    fn undersample_rounds_up() {
        let m = manifest(3, 100);
        let out = undersample_majority(&m, 1.5, 1).unwrap();
        assert_eq!(out.label_counts()[&DiagnosticLabel::NoRelevantFinding], 5);
    }

    #[test]
    fn undersample_noop_when_small() {
        let m = manifest(3000, 100);
        assert_eq!(undersample_majority(&m, 2.0, 9).unwrap(), m);
    }

    #[test]
    fn undersample_deterministic_and_order_insensitive() {
        let m = manifest(50, 1000);
        let a = undersample_majority(&m, 2.0, 4).unwrap();
        let b = undersample_majority(&m, 2.0, 4).unwrap();
        assert_eq!(a, b);
        let mut reversed: Vec<_> = m.records().to_vec();
        reversed.reverse();
        let r = Manifest::new(reversed, Provenance::Real).unwrap();
        let c = undersample_majority(&r, 2.0, 4).unwrap();
        let ids = |m: &Manifest| {
            m.records()
                .iter()
                .map(|r| r.image_id().to_string())
                .collect::<HashSet<_>>()
        };
        assert_eq!(ids(&a), ids(&c));
    }

    #[test]
    fn undersample_errors() {
        assert_eq!(
            undersample_majority(&manifest(0, 0), 2.0, 0),
            Err(DatasetError::EmptyManifest)
        );
        assert_eq!(
            undersample_majority(&manifest(0, 5), 2.0, 0),
            Err(DatasetError::NoAbnormalRecords)
        );
        assert!(undersample_majority(&manifest(1, 5), 0.0, 0).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let v = ConceptVocabulary::bundled();
        let r = rec(&v, "x", &[]);
        assert_eq!(
            Manifest::new(vec![r.clone(), r], Provenance::Real),
            Err(DatasetError::DuplicateImageId("x".into()))
        );
    }

    #[test]
    fn sample_identity_and_cardinality() {
        let m = manifest(100, 200);
        let all = uniform_sample(&m, 300, 3).unwrap();
        assert_eq!(all, m);
        let some = uniform_sample(&m, 120, 3).unwrap();
        assert_eq!(some.len(), 120);
        assert_eq!(some, uniform_sample(&m, 120, 3).unwrap());
        // relative order preserved
        let pos: HashMap<&str, usize> = m
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id(), i))
            .collect();
        let idx: Vec<usize> = some.records().iter().map(|r| pos[r.image_id()]).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(
            uniform_sample(&m, 301, 0),
            Err(DatasetError::SampleTooLarge {
                requested: 301,
                available: 300
            })
        );
    }

    #[test]
    fn single_record_goes_to_train() {
        let m = manifest(1, 0);
        let s = stratified_split(&m, &[0.8, 0.1, 0.1], 0).unwrap();
        assert_eq!(s.get("a00000"), Some(Split::Train));
    }

    #[test]
    fn quotas_sum_to_n() {
        assert_eq!(
            split_quotas(10_000, &[0.8, 0.1, 0.1]),
            vec![8000, 1000, 1000]
        );
        assert_eq!(split_quotas(1, &[0.8, 0.1, 0.1]), vec![1, 0, 0]);
        assert_eq!(split_quotas(7, &[0.8, 0.2]), vec![6, 1]);
        assert_eq!(split_quotas(5, &[0.1, 0.45, 0.45]), vec![1, 2, 2]);
    }

    #[test]
    fn fraction_validation() {
        let m = manifest(10, 10);
        assert!(stratified_split(&m, &[0.5, 0.4], 0).is_err());
        assert!(stratified_split(&m, &[1.0], 0).is_err());
        assert!(stratified_split(&m, &[0.9, 0.1, 0.0], 0).is_err());
        assert_eq!(
            stratified_split(&manifest(0, 0), &[0.8, 0.2], 0),
            Err(DatasetError::EmptyManifest)
        );
    }
}
