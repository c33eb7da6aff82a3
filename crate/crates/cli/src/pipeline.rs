use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cars_core::concept::{AnnotatedRecord, ConceptVocabulary, DiagnosticLabel};
use cars_core::dataset::{
    stratified_split, undersample_majority, uniform_sample, Manifest, Provenance, Split,
};
use cars_core::editor::{EditRequest, Gateway, GatewayError, ImageGray};
use cars_core::io::{
    read_jsonl, write_jsonl, AnnotationRow, PairRow, PerturbationRow, ReportRow, SplitRow,
};
use cars_core::perturb::{generate_perturbation_set, PerturbationType, SkipKind};
use cars_core::synth;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::manifest::RunManifest;

const CHUNK: usize = 32;

#[derive(Debug, Serialize)]
struct SkipRow {
    source_image_id: String,
    ptype: PerturbationType,
    kind: SkipKind,
    reason: String,
}

#[derive(Debug, Serialize)]
pub struct FailureRow {
    pub id: String,
    pub error: String,
}

#[derive(Deserialize)]
struct IdOnly {
    image_id: String,
}

pub fn load_annotations(path: &Path, vocab: &ConceptVocabulary) -> Result<Vec<AnnotatedRecord>> {
    let rows: Vec<AnnotationRow> = read_jsonl(path)?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_record(vocab)
                .map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))
        })
        .collect()
}

fn label_histogram<'a>(
    records: impl IntoIterator<Item = &'a AnnotatedRecord>,
) -> BTreeMap<DiagnosticLabel, usize> {
    let mut counts: BTreeMap<DiagnosticLabel, usize> =
        DiagnosticLabel::ALL.iter().map(|&l| (l, 0)).collect();
    for r in records {
        for l in r.labels() {
            *counts.entry(*l).or_default() += 1;
        }
    }
    counts
}

fn print_histogram(counts: &BTreeMap<DiagnosticLabel, usize>) {
    for (label, n) in counts {
        println!("{:<20} {n}", label.as_str());
    }
}

fn write_annotations(path: &Path, records: &[AnnotatedRecord]) -> Result<()> {
    let rows: Vec<AnnotationRow> = records.iter().map(AnnotationRow::from_record).collect();
    Ok(write_jsonl(path, &rows)?)
}

pub fn annotate(config: &PipelineConfig, reports: &Path) -> Result<usize> {
    let vocab = config.vocabulary()?;
    let rows: Vec<ReportRow> = read_jsonl(reports)?;
    if rows.is_empty() {
        log::warn!("{} contains no reports", reports.display());
    }
    let records: Vec<AnnotatedRecord> = rows
        .iter()
        .map(|r| AnnotatedRecord::from_report(&r.image_id, &r.report_text, &vocab))
        .collect();
    Manifest::new(records.clone(), Provenance::Real)?;

    let out = config.out_path("annotations.jsonl");
    write_annotations(&out, &records)?;
    let counts = label_histogram(&records);
    print_histogram(&counts);

    let mut m = RunManifest::new("annotate", config);
    m.input(reports).output(&out);
    m.summary = json!({ "records": records.len(), "label_counts": counts });
    m.write()?;
    Ok(0)
}

pub fn perturb(config: &PipelineConfig, annotations: &Path) -> Result<usize> {
    let vocab = config.vocabulary()?;
    let plan = config.plan()?;
    let records = load_annotations(annotations, &vocab)?;

    let mut rows = Vec::new();
    let mut skips = Vec::new();
    for rec in &records {
        let set = generate_perturbation_set(rec, &plan, &vocab);
        rows.extend(set.results.iter().map(PerturbationRow::from_result));
        skips.extend(set.skips.into_iter().map(|s| SkipRow {
            source_image_id: s.source_image_id,
            ptype: s.ptype,
            kind: s.kind,
            reason: s.reason,
        }));
    }

    let mut per_type: BTreeMap<PerturbationType, usize> = BTreeMap::new();
    for r in &rows {
        *per_type.entry(r.ptype).or_default() += 1;
    }
    let mut skipped: BTreeMap<PerturbationType, usize> = BTreeMap::new();
    for s in &skips {
        *skipped.entry(s.ptype).or_default() += 1;
    }
    for t in plan.requested_types() {
        println!(
            "{:<12} {:>6} generated {:>6} skipped",
            t.display_name(),
            per_type.get(t).unwrap_or(&0),
            skipped.get(t).unwrap_or(&0)
        );
    }

    let out = config.out_path("perturbations.jsonl");
    let skip_out = config.out_path("skips.jsonl");
    write_jsonl(&out, &rows)?;
    write_jsonl(&skip_out, &skips)?;

    let mut m = RunManifest::new("perturb", config);
    m.input(annotations).output(&out).output(&skip_out);
    m.summary = json!({
        "records": records.len(),
        "perturbations": rows.len(),
        "per_type": per_type,
        "skipped": skipped,
    });
    m.write()?;
    Ok(0)
}

pub fn source_image_path(images: &Path, image_id: &str) -> PathBuf {
    images.join(format!("{image_id}.png"))
}

pub fn generate(config: &PipelineConfig, perturbations: &Path, images: &Path) -> Result<usize> {
    let vocab = config.vocabulary()?;
    let rows: Vec<PerturbationRow> = read_jsonl(perturbations)?;
    let backend = config.backend(&vocab)?;
    let backend_name = backend_label(config, &*backend);
    let gateway = Gateway::new(backend, config.max_in_flight)?;
    gateway
        .backend()
        .health()
        .context("editor backend health check failed")?;

    let synth_dir = config.out_path("synthetic");
    std::fs::create_dir_all(&synth_dir)
        .with_context(|| format!("creating {}", synth_dir.display()))?;

    let mut sources: HashMap<String, Result<ImageGray, String>> = HashMap::new();
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    let mut aborted = false;

    for chunk in rows.chunks(CHUNK) {
        if aborted {
            failures.extend(chunk.iter().map(|r| FailureRow {
                id: r.synthetic_id.clone(),
                error: "not attempted: backend unavailable".into(),
            }));
            continue;
        }
        let mut requests = Vec::new();
        let mut pending = Vec::new();
        for row in chunk {
            let original = source_image_path(images, &row.source_image_id);
            let source = sources
                .entry(row.source_image_id.clone())
                .or_insert_with(|| {
                    ImageGray::load(&original).map_err(|e| format!("{}: {e}", original.display()))
                });
            let request = source.clone().and_then(|img| {
                EditRequest::new(&row.synthetic_id, img, &row.prompt).map_err(|e| e.to_string())
            });
            match request {
                Ok(req) => {
                    requests.push(req);
                    pending.push((row, original));
                }
                Err(error) => failures.push(FailureRow {
                    id: row.synthetic_id.clone(),
                    error,
                }),
            }
        }

        let results = gateway.edit_batch(&requests);
        let all_down = !results.is_empty()
            && results
                .iter()
                .all(|r| matches!(r, Err(GatewayError::BackendUnavailable { .. })));
        for ((row, original), result) in pending.into_iter().zip(results) {
            let saved = result.map_err(|e| e.to_string()).and_then(|resp| {
                let path = synth_dir.join(format!("{}.png", row.synthetic_id));
                resp.edited.save(&path).map_err(|e| e.to_string())?;
                Ok((path, resp.backend_info))
            });
            match saved {
                Ok((synthetic, backend_info)) => pairs.push(PairRow {
                    synthetic_id: row.synthetic_id.clone(),
                    source_image_id: row.source_image_id.clone(),
                    ptype: row.ptype,
                    original: original.display().to_string(),
                    synthetic: synthetic.display().to_string(),
                    concepts: row.concepts.clone(),
                    labels: row.labels.clone(),
                    prompt: row.prompt.clone(),
                    backend_info,
                }),
                Err(error) => failures.push(FailureRow {
                    id: row.synthetic_id.clone(),
                    error,
                }),
            }
        }
        if all_down {
            log::error!(
                "every request in the last batch failed with the backend unavailable; stopping"
            );
            aborted = true;
        }
    }

    let pairs_out = config.out_path("pairs.jsonl");
    let failures_out = config.out_path("generate_failures.jsonl");
    write_jsonl(&pairs_out, &pairs)?;
    write_jsonl(&failures_out, &failures)?;
    println!("{} generated, {} failed", pairs.len(), failures.len());

    let mut m = RunManifest::new("generate", config);
    m.input(perturbations)
        .input(images)
        .output(&pairs_out)
        .output(&failures_out)
        .output(&synth_dir);
    m.summary = json!({
        "backend": backend_name,
        "requested": rows.len(),
        "generated": pairs.len(),
        "failed": failures.len(),
        "aborted": aborted,
    });
    m.write()?;
    Ok(failures.len())
}

fn backend_label(
    config: &PipelineConfig,
    backend: &dyn cars_core::editor::EditorBackend,
) -> String {
    if config.backend == crate::config::MOCK_BACKEND {
        backend.name()
    } else {
        config.backend.clone()
    }
}

pub fn split(config: &PipelineConfig, annotations: &Path) -> Result<usize> {
    let vocab = config.vocabulary()?;
    let manifest = Manifest::new(load_annotations(annotations, &vocab)?, Provenance::Real)?;
    let assignment = stratified_split(&manifest, &config.split_fractions, config.seed)?;

    let rows: Vec<SplitRow> = manifest
        .records()
        .iter()
        .map(|r| SplitRow {
            image_id: r.image_id().to_string(),
            split: assignment
                .get(r.image_id())
                .expect("every record is assigned"),
        })
        .collect();
    let out = config.out_path("splits.jsonl");
    write_jsonl(&out, &rows)?;

    let splits: Vec<Split> = assignment.fractions().iter().map(|(s, _)| *s).collect();
    let mut summary = serde_json::Map::new();
    for s in splits {
        let records = manifest
            .records()
            .iter()
            .filter(|r| assignment.get(r.image_id()) == Some(s));
        let counts = label_histogram(records);
        println!("{s}: {}", assignment.count(s));
        summary.insert(
            s.as_str().to_string(),
            json!({ "records": assignment.count(s), "label_counts": counts }),
        );
    }

    let mut m = RunManifest::new("split", config);
    m.input(annotations).output(&out);
    m.summary = serde_json::Value::Object(summary);
    m.write()?;
    Ok(0)
}

pub fn sample(config: &PipelineConfig, annotations: &Path, n: Option<usize>) -> Result<usize> {
    let vocab = config.vocabulary()?;
    let manifest = Manifest::new(load_annotations(annotations, &vocab)?, Provenance::Real)?;
    let sampled = match n {
        Some(n) => uniform_sample(&manifest, n, config.seed)?,
        None => undersample_majority(&manifest, config.undersample_factor, config.seed)?,
    };
    let out = config.out_path("sample.jsonl");
    write_annotations(&out, sampled.records())?;
    let counts = label_histogram(sampled.records());
    print_histogram(&counts);

    let mut m = RunManifest::new("sample", config);
    m.input(annotations).output(&out);
    m.summary = json!({
        "mode": if n.is_some() { "uniform" } else { "undersample" },
        "input_records": manifest.len(),
        "records": sampled.len(),
        "label_counts": counts,
    });
    m.write()?;
    Ok(0)
}

pub fn synth_images(config: &PipelineConfig, reports: &Path, size: u32) -> Result<usize> {
    let rows: Vec<IdOnly> = read_jsonl(reports)?;
    let dir = config.out_path("images");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for r in &rows {
        let path = source_image_path(&dir, &r.image_id);
        synth::radiograph(&r.image_id, size, size)
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{} images written to {}", rows.len(), dir.display());

    let mut m = RunManifest::new("synth-images", config);
    m.input(reports).output(&dir);
    m.summary = json!({ "images": rows.len(), "size": size });
    m.write()?;
    Ok(0)
}
