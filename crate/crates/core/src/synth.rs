//! Deterministic synthetic data for demos and tests: radiograph-like
//! images, free-text reports and labelled manifests.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::concept::{AnnotatedRecord, ConceptVector, ConceptVocabulary, DiagnosticLabel};
use crate::dataset::{Manifest, Provenance};
use crate::editor::ImageGray;
use crate::io::ReportRow;
use crate::perturb::stable_hash;

pub const RADIOGRAPH_SIZE: u32 = 384;

fn smoothstep(edge: f64, x: f64) -> f64 {
    // soft 0→1 transition over ±0.06 around `edge`
    let t = ((x - edge) / 0.12 + 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn ellipse(u: f64, v: f64, cu: f64, cv: f64, ru: f64, rv: f64) -> f64 {
    (((u - cu) / ru).powi(2) + ((v - cv) / rv).powi(2)).sqrt()
}

/// A frontal chest-radiograph-like image seeded by `image_id`: body
/// silhouette, two lung fields with ribs, a cardiac shadow and mild noise.
pub fn radiograph(image_id: &str, width: u32, height: u32) -> ImageGray {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(image_id));
    let jitter = |rng: &mut ChaCha8Rng, s: f64| rng.random_range(-s..=s);
    let lung_cv = 0.50 + jitter(&mut rng, 0.02);
    let lung_ru = 0.17 + jitter(&mut rng, 0.015);
    let lung_rv = 0.32 + jitter(&mut rng, 0.02);
    let heart_cu = 0.53 + jitter(&mut rng, 0.02);
    let heart_r = 0.15 + jitter(&mut rng, 0.02);
    let rib_phase = rng.random_range(0.0..1.0);
    let rib_freq = 8.0 + jitter(&mut rng, 1.0);
    let base = 150.0 + jitter(&mut rng, 15.0);

    let mut pixels = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        let v = (f64::from(y) + 0.5) / f64::from(height);
        for x in 0..width {
            let u = (f64::from(x) + 0.5) / f64::from(width);
            let body = 1.0 - smoothstep(1.0, ellipse(u, v, 0.5, 0.55, 0.46, 0.62));
            let left = 1.0 - smoothstep(1.0, ellipse(u, v, 0.30, lung_cv, lung_ru, lung_rv));
            let right = 1.0 - smoothstep(1.0, ellipse(u, v, 0.70, lung_cv, lung_ru, lung_rv));
            let lung = left.max(right);
            let heart =
                1.0 - smoothstep(1.0, ellipse(u, v, heart_cu, 0.66, heart_r, heart_r * 0.9));
            let curve = 0.25 * (u - 0.5).abs();
            let rib = (std::f64::consts::TAU * (v * rib_freq + curve + rib_phase))
                .sin()
                .max(0.0);

            let mut value = 20.0 + body * (base - 20.0);
            value -= lung * 85.0;
            value += lung * rib * 28.0;
            value += heart * 70.0;
            value += rng.random_range(-3.0..=3.0);
            pixels.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    ImageGray::new(width, height, pixels).expect("buffer matches dimensions")
}

const SIDES: [&str; 3] = ["right", "left", "bilateral"];
const ZONES: [&str; 4] = ["upper zone", "lower zone", "mid zone", "base"];
const TEMPLATES: [&str; 4] = [
    "There is {} in the {side} {zone}.",
    "{} is noted at the {side} {zone}.",
    "Findings include {}.",
    "{} is present.",
];
const FILLERS: [&str; 4] = [
    "Osseous structures are intact.",
    "No support devices are seen.",
    "Comparison is made with the prior study.",
    "Soft tissues are within normal limits.",
];
const NORMAL: [&str; 3] = [
    "Lungs are clear. No acute cardiopulmonary process.",
    "Unremarkable chest radiograph.",
    "No acute cardiopulmonary abnormality. Lungs are clear.",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Free-text report whose annotation is exactly `concepts`.
pub fn report_for(
    concepts: &ConceptVector,
    vocab: &ConceptVocabulary,
    rng: &mut impl Rng,
) -> String {
    if !vocab.has_pathology(concepts) {
        return NORMAL.choose(rng).expect("non-empty").to_string();
    }
    let mut sentences = Vec::new();
    for i in concepts.ones() {
        let trigger = vocab
            .concept(i)
            .trigger_phrases
            .choose(rng)
            .expect("every concept has a trigger");
        let template = TEMPLATES.choose(rng).expect("non-empty");
        let sentence = template
            .replace("{side}", SIDES.choose(rng).expect("non-empty"))
            .replace("{zone}", ZONES.choose(rng).expect("non-empty"))
            .replace("{}", trigger);
        sentences.push(capitalize(&sentence));
    }
    if rng.random_bool(0.5) {
        sentences.push(FILLERS.choose(rng).expect("non-empty").to_string());
    }
    sentences.join(" ")
}

/// A random valid concept vector: unremarkable with probability
/// `p_normal`, otherwise one to three pathology labels, each expressed by a
/// random non-empty subset of its concepts.
pub fn random_concepts(
    vocab: &ConceptVocabulary,
    p_normal: f64,
    rng: &mut impl Rng,
) -> ConceptVector {
    if rng.random_bool(p_normal) {
        return vocab.unremarkable_vector();
    }
    let n_labels = match rng.random_range(0..100) {
        0..55 => 1,
        55..90 => 2,
        _ => 3,
    };
    let mut v = ConceptVector::zeros(vocab.len());
    let labels: Vec<DiagnosticLabel> = DiagnosticLabel::PATHOLOGIES
        .choose_multiple(rng, n_labels)
        .copied()
        .collect();
    for label in labels {
        let pool = vocab.pool(label);
        if pool.is_empty() {
            continue;
        }
        let k = rng.random_range(1..=pool.len().min(2));
        for &i in pool.choose_multiple(rng, k) {
            v.set(i, true);
        }
    }
    vocab.normalize(&mut v);
    v
}

/// `n` reports with ids `{prefix}-0000`, `{prefix}-0001`, ….
pub fn report_corpus(
    vocab: &ConceptVocabulary,
    n: usize,
    prefix: &str,
    seed: u64,
) -> Vec<ReportRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let v = random_concepts(vocab, 0.25, &mut rng);
            ReportRow {
                image_id: format!("{prefix}-{i:04}"),
                report_text: report_for(&v, vocab, &mut rng),
            }
        })
        .collect()
}

/// An annotated manifest of `n` synthetic records with the given share of
/// unremarkable studies.
pub fn synthetic_manifest(
    vocab: &ConceptVocabulary,
    n: usize,
    p_normal: f64,
    seed: u64,
) -> Manifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let v = random_concepts(vocab, p_normal, &mut rng);
            let text = report_for(&v, vocab, &mut rng);
            AnnotatedRecord::new(format!("syn-{i:05}"), text, v, vocab)
                .expect("generated vectors are valid")
        })
        .collect();
    Manifest::new(records, Provenance::Real).expect("generated ids are unique")
}
