use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use cars_core::concept::ConceptVocabulary;
use cars_core::dataset::sample_ids;
use cars_core::editor::{Gateway, ImageGray};
use cars_core::io::{
    read_jsonl, read_predictions, read_review_sheet, read_truth, write_jsonl, write_review_sheet,
    PairRow, ReviewSheetRow,
};
use cars_core::metrics::classification::{macro_f1, FALLBACK_THRESHOLD};
use cars_core::metrics::ssim::ssim_many;
use cars_core::metrics::{
    ece, macro_auprc, macro_auroc, predictive_entropy, review_stats, semantic_uncertainty,
    ssim_summary, tune_thresholds, GroundTruthMatrix, MacroScore, Pooling, PredictionMatrix,
    ThresholdVector,
};
use cars_core::report::{
    render_review_markdown, DeltaTable, MetricSpec, SemanticSummary, SemanticTable, SsimTable,
    CALIBRATION_METRICS, CLASSIFICATION_METRICS,
};
use serde::Serialize;
use serde_json::json;

use crate::config::PipelineConfig;
use crate::manifest::RunManifest;
use crate::pipeline::FailureRow;

pub const BASELINE: &str = "baseline";
const CHUNK: usize = 64;

/// `VARIANT:MODEL=test.csv[@val.csv]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSpec {
    pub variant: String,
    pub model: String,
    pub test: PathBuf,
    pub val: Option<PathBuf>,
}

impl FromStr for PredictionSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || format!("expected VARIANT:MODEL=test.csv[@val.csv], got `{s}`");
        let (key, paths) = s.split_once('=').ok_or_else(err)?;
        let (variant, model) = key.split_once(':').ok_or_else(err)?;
        if variant.is_empty() || model.is_empty() || paths.is_empty() {
            return Err(err());
        }
        let (test, val) = match paths.split_once('@') {
            Some((t, v)) => (t, Some(PathBuf::from(v))),
            None => (paths, None),
        };
        Ok(Self {
            variant: variant.to_string(),
            model: model.to_string(),
            test: PathBuf::from(test),
            val,
        })
    }
}

/// `METHOD=path`.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodPath {
    pub method: String,
    pub path: PathBuf,
}

impl FromStr for MethodPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('=') {
            Some((m, p)) if !m.is_empty() && !p.is_empty() => Ok(Self {
                method: m.to_string(),
                path: PathBuf::from(p),
            }),
            _ => Err(format!("expected METHOD=path, got `{s}`")),
        }
    }
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

/// Variant, model and per-cell detail.
type Cell<T> = (String, String, T);

/// Arranges per-cell values into a baseline block plus one block per variant.
fn build_table<T>(
    specs: &[MetricSpec],
    predictions: &[PredictionSpec],
    mut cell: impl FnMut(&PredictionSpec) -> Result<(Vec<f64>, T)>,
) -> Result<(DeltaTable, Vec<Cell<T>>)> {
    let models = first_seen(predictions.iter().map(|p| p.model.as_str()));
    let variants = first_seen(predictions.iter().map(|p| p.variant.as_str()));
    if !variants.iter().any(|v| v == BASELINE) {
        bail!("one --pred must use the `{BASELINE}` variant");
    }
    let mut details = Vec::new();
    let mut block_for = |variant: &str| -> Result<Vec<Vec<f64>>> {
        let mut block = vec![vec![0.0; models.len()]; specs.len()];
        for (k, model) in models.iter().enumerate() {
            let matching: Vec<&PredictionSpec> = predictions
                .iter()
                .filter(|p| p.variant == variant && &p.model == model)
                .collect();
            let spec = match matching.as_slice() {
                [one] => *one,
                [] => bail!("no predictions for variant `{variant}`, model `{model}`"),
                _ => bail!("duplicate predictions for variant `{variant}`, model `{model}`"),
            };
            let (values, detail) = cell(spec).with_context(|| format!("{variant}:{model}"))?;
            for (m, v) in values.into_iter().enumerate() {
                block[m][k] = v;
            }
            details.push((variant.to_string(), model.clone(), detail));
        }
        Ok(block)
    };
    let mut table = DeltaTable::new(specs, models.clone(), block_for(BASELINE)?)?;
    for v in variants.iter().filter(|v| *v != BASELINE) {
        let block = block_for(v)?;
        table.add_variant(v.clone(), block)?;
    }
    Ok((table, details))
}

fn load_pair(
    test: &Path,
    truth: &GroundTruthMatrix,
) -> Result<(PredictionMatrix, GroundTruthMatrix)> {
    let preds = read_predictions(test)?;
    let aligned = truth
        .aligned_to(&preds)
        .with_context(|| format!("aligning {} with the ground truth", test.display()))?;
    Ok((preds, aligned))
}

fn excluded_note(metric: &str, variant: &str, model: &str, s: &MacroScore) -> Option<String> {
    if s.excluded.is_empty() {
        return None;
    }
    let names: Vec<&str> = s.excluded.iter().map(|l| l.as_str()).collect();
    Some(format!(
        "{metric} for {variant}/{model} averages {} label(s); undefined for {}.",
        5 - s.excluded.len(),
        names.join(", ")
    ))
}

#[derive(Serialize)]
struct ClassificationCell {
    auroc_per_label: [Option<f64>; 5],
    auprc_per_label: [Option<f64>; 5],
    thresholds: [f64; 5],
    thresholds_tuned: bool,
}

pub fn classification(
    config: &PipelineConfig,
    truth_path: &Path,
    val_truth_path: Option<&Path>,
    predictions: &[PredictionSpec],
) -> Result<usize> {
    let truth = read_truth(truth_path)?;
    let val_truth = val_truth_path.map(read_truth).transpose()?;
    let mut notes = Vec::new();

    let (mut table, details) = build_table(&CLASSIFICATION_METRICS, predictions, |p| {
        let (preds, aligned) = load_pair(&p.test, &truth)?;
        let auroc = macro_auroc(&preds, &aligned)?;
        let auprc = macro_auprc(&preds, &aligned)?;
        notes.extend(excluded_note("AUROC", &p.variant, &p.model, &auroc));
        notes.extend(excluded_note("AUPRC", &p.variant, &p.model, &auprc));
        let (thresholds, tuned) = match (&p.val, &val_truth) {
            (Some(val), Some(vt)) => (tune_thresholds(&read_predictions(val)?, vt)?, true),
            (Some(_), None) => bail!("validation predictions given without --val-truth"),
            (None, _) => (ThresholdVector::uniform(FALLBACK_THRESHOLD)?, false),
        };
        if !tuned {
            notes.push(format!(
                "F1 for {}/{} uses a fixed threshold of {FALLBACK_THRESHOLD} (no validation predictions).",
                p.variant, p.model
            ));
        }
        let f1 = macro_f1(&preds, &aligned, &thresholds)?;
        Ok((
            vec![auroc.value, auprc.value, f1],
            ClassificationCell {
                auroc_per_label: auroc.per_label,
                auprc_per_label: auprc.per_label,
                thresholds: *thresholds.values(),
                thresholds_tuned: tuned,
            },
        ))
    })?;
    table.notes = notes;

    let md = config.out_path("classification.md");
    let js = config.out_path("classification.json");
    std::fs::write(&md, table.render_markdown())?;
    let cells: Vec<_> = details
        .into_iter()
        .map(|(variant, model, cell)| json!({ "variant": variant, "model": model, "detail": cell }))
        .collect();
    write_json(
        &js,
        &json!({ "table": table, "deltas": table.deltas(), "cells": cells }),
    )?;
    print!("{}", table.render_markdown());

    let mut m = RunManifest::new("evaluate-classification", config);
    m.input(truth_path);
    if let Some(v) = val_truth_path {
        m.input(v);
    }
    for p in predictions {
        m.input(&p.test);
        if let Some(v) = &p.val {
            m.input(v);
        }
    }
    m.output(&md).output(&js);
    m.summary = json!({ "models": table.models, "variants": table.variants.len() + 1 });
    m.write()?;
    Ok(0)
}

pub fn calibration(
    config: &PipelineConfig,
    truth_path: &Path,
    predictions: &[PredictionSpec],
    pooled: bool,
    bins: usize,
) -> Result<usize> {
    if bins == 0 {
        bail!("--bins must be at least 1");
    }
    let truth = read_truth(truth_path)?;
    let pooling = if pooled {
        Pooling::Pooled
    } else {
        Pooling::Macro
    };
    let (mut table, _) = build_table(&CALIBRATION_METRICS, predictions, |p| {
        let (preds, aligned) = load_pair(&p.test, &truth)?;
        Ok((
            vec![
                predictive_entropy(&preds)?,
                ece(&preds, &aligned, bins, pooling)?,
            ],
            (),
        ))
    })?;
    table.notes.push(format!(
        "Entropy in nats averaged over images and labels; ECE with {bins} equal-width bins, {}.",
        if pooled {
            "pooled over all labels"
        } else {
            "averaged over labels"
        }
    ));

    let md = config.out_path("calibration.md");
    let js = config.out_path("calibration.json");
    std::fs::write(&md, table.render_markdown())?;
    write_json(
        &js,
        &json!({ "table": table, "deltas": table.deltas(), "bins": bins, "pooled": pooled }),
    )?;
    print!("{}", table.render_markdown());

    let mut m = RunManifest::new("evaluate-calibration", config);
    m.input(truth_path);
    for p in predictions {
        m.input(&p.test);
    }
    m.output(&md).output(&js);
    m.summary = json!({ "models": table.models, "bins": bins, "pooled": pooled });
    m.write()?;
    Ok(0)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_pairs(mp: &MethodPath) -> Result<Vec<PairRow>> {
    let pairs: Vec<PairRow> = read_jsonl(&mp.path)?;
    if pairs.is_empty() {
        bail!("{} contains no pairs", mp.path.display());
    }
    Ok(pairs)
}

#[derive(Serialize)]
struct SsimScore<'a> {
    method: &'a str,
    synthetic_id: &'a str,
    ptype: cars_core::perturb::PerturbationType,
    ssim: f64,
}

pub fn ssim(config: &PipelineConfig, methods: &[MethodPath]) -> Result<usize> {
    let mut table = SsimTable {
        methods: Vec::new(),
    };
    let mut scores_out = Vec::new();
    let mut failures = Vec::new();
    for mp in methods {
        let pairs = read_pairs(mp)?;
        let mut scored = Vec::new();
        for chunk in pairs.chunks(CHUNK) {
            let mut loaded = Vec::new();
            for p in chunk {
                match ImageGray::load(&p.original)
                    .and_then(|o| Ok((o, ImageGray::load(&p.synthetic)?)))
                {
                    Ok(images) => loaded.push((p, images)),
                    Err(e) => failures.push(FailureRow {
                        id: format!("{}/{}", mp.method, p.synthetic_id),
                        error: e.to_string(),
                    }),
                }
            }
            let refs: Vec<(&ImageGray, &ImageGray)> =
                loaded.iter().map(|(_, (o, s))| (o, s)).collect();
            for ((p, _), r) in loaded.iter().zip(ssim_many(&refs)) {
                match r {
                    Ok(v) => {
                        scored.push((p.ptype, v));
                        scores_out.push(json!(SsimScore {
                            method: &mp.method,
                            synthetic_id: &p.synthetic_id,
                            ptype: p.ptype,
                            ssim: v,
                        }));
                    }
                    Err(e) => failures.push(FailureRow {
                        id: format!("{}/{}", mp.method, p.synthetic_id),
                        error: e.to_string(),
                    }),
                }
            }
        }
        if scored.is_empty() {
            bail!("no pair from `{}` could be scored", mp.method);
        }
        table
            .methods
            .push((mp.method.clone(), ssim_summary(&scored)?));
    }

    let md = config.out_path("ssim.md");
    let js = config.out_path("ssim.json");
    let scores = config.out_path("ssim_scores.jsonl");
    let fail = config.out_path("ssim_failures.jsonl");
    std::fs::write(&md, table.render_markdown())?;
    write_json(&js, &table)?;
    write_jsonl(&scores, &scores_out)?;
    write_jsonl(&fail, &failures)?;
    print!("{}", table.render_markdown());

    let mut m = RunManifest::new("evaluate-ssim", config);
    for mp in methods {
        m.input(&mp.path);
    }
    m.output(&md).output(&js).output(&scores).output(&fail);
    m.summary = json!({ "scored": scores_out.len(), "failed": failures.len() });
    m.write()?;
    Ok(failures.len())
}

pub fn semantic(config: &PipelineConfig, methods: &[MethodPath]) -> Result<usize> {
    let vocab = config.vocabulary()?;
    let gateway = Gateway::new(config.backend(&vocab)?, config.max_in_flight)?;
    gateway
        .backend()
        .health()
        .context("editor backend health check failed")?;

    let mut table = SemanticTable {
        methods: Vec::new(),
    };
    let mut scores_out = Vec::new();
    let mut failures = Vec::new();
    for mp in methods {
        let pairs = read_pairs(mp)?;
        let mut scored = Vec::new();
        for chunk in pairs.chunks(CHUNK) {
            let mut items = Vec::new();
            let mut kept = Vec::new();
            for p in chunk {
                match ImageGray::load(&p.synthetic) {
                    Ok(img) => {
                        items.push((p.synthetic_id.clone(), img));
                        kept.push(p);
                    }
                    Err(e) => failures.push(FailureRow {
                        id: format!("{}/{}", mp.method, p.synthetic_id),
                        error: e.to_string(),
                    }),
                }
            }
            for (p, r) in kept.into_iter().zip(gateway.describe_batch(&items)) {
                match r
                    .map_err(|e| e.to_string())
                    .and_then(|d| score(p, &d.description, &vocab))
                {
                    Ok((description, s)) => {
                        scored.push(s);
                        scores_out.push(json!({
                            "method": mp.method,
                            "synthetic_id": p.synthetic_id,
                            "intended": p.concepts,
                            "description": description,
                            "scores": s,
                        }));
                    }
                    Err(error) => failures.push(FailureRow {
                        id: format!("{}/{}", mp.method, p.synthetic_id),
                        error,
                    }),
                }
            }
        }
        if scored.is_empty() {
            bail!("no pair from `{}` could be scored", mp.method);
        }
        table
            .methods
            .push((mp.method.clone(), SemanticSummary::of(&scored)?));
    }

    let md = config.out_path("semantic.md");
    let js = config.out_path("semantic.json");
    let scores = config.out_path("semantic_scores.jsonl");
    let fail = config.out_path("semantic_failures.jsonl");
    std::fs::write(&md, table.render_markdown())?;
    write_json(&js, &table)?;
    write_jsonl(&scores, &scores_out)?;
    write_jsonl(&fail, &failures)?;
    print!("{}", table.render_markdown());

    let mut m = RunManifest::new("evaluate-semantic", config);
    for mp in methods {
        m.input(&mp.path);
    }
    m.output(&md).output(&js).output(&scores).output(&fail);
    m.summary = json!({ "scored": scores_out.len(), "failed": failures.len() });
    m.write()?;
    Ok(failures.len())
}

fn score(
    pair: &PairRow,
    description: &str,
    vocab: &ConceptVocabulary,
) -> Result<(String, cars_core::metrics::SemanticUncertainty), String> {
    let intended = cars_core::concept::ConceptVector::from_bit_string(&pair.concepts)
        .map_err(|e| e.to_string())?;
    let recovered = vocab.annotate_report(description);
    let s = semantic_uncertainty(&recovered, &intended, vocab).map_err(|e| e.to_string())?;
    Ok((recovered.to_bit_string(), s))
}

#[derive(Serialize)]
struct SheetError {
    sheet: String,
    line: usize,
    message: String,
}

pub fn review(config: &PipelineConfig, sheets: &[PathBuf]) -> Result<usize> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for path in sheets {
        let sheet = read_review_sheet(path)?;
        records.extend(sheet.records);
        errors.extend(sheet.errors.into_iter().map(|e| SheetError {
            sheet: path.display().to_string(),
            line: e.line,
            message: e.message,
        }));
    }
    for e in &errors {
        log::warn!("{}:{}: {}", e.sheet, e.line, e.message);
    }
    let stats = review_stats(&records).map_err(|e| anyhow!("{e}"))?;

    let md = config.out_path("review.md");
    let js = config.out_path("review.json");
    let err_out = config.out_path("review_errors.jsonl");
    std::fs::write(&md, render_review_markdown(&stats))?;
    write_json(&js, &stats)?;
    write_jsonl(&err_out, &errors)?;
    print!("{}", render_review_markdown(&stats));

    let mut m = RunManifest::new("evaluate-review", config);
    for s in sheets {
        m.input(s);
    }
    m.output(&md).output(&js).output(&err_out);
    m.summary = json!({ "records": records.len(), "rejected_rows": errors.len() });
    m.write()?;
    Ok(errors.len())
}

pub fn review_export(
    config: &PipelineConfig,
    methods: &[MethodPath],
    n: usize,
    raters: &[String],
) -> Result<usize> {
    let blank = [String::new()];
    let raters = if raters.is_empty() {
        &blank[..]
    } else {
        raters
    };
    let mut rows = Vec::new();
    for mp in methods {
        let pairs = read_pairs(mp)?;
        let ids: Vec<&str> = pairs.iter().map(|p| p.synthetic_id.as_str()).collect();
        let picked = sample_ids(&ids, n, config.seed)
            .with_context(|| format!("sampling `{}`", mp.method))?;
        for id in picked {
            let pair = pairs
                .iter()
                .find(|p| p.synthetic_id == id)
                .expect("sampled from these pairs");
            for rater in raters {
                rows.push(ReviewSheetRow {
                    image_id: id.to_string(),
                    method: mp.method.clone(),
                    image_path: pair.synthetic.clone(),
                    rater_id: rater.clone(),
                    realism: String::new(),
                    agreement: String::new(),
                    free_text: String::new(),
                });
            }
        }
    }
    let out = config.out_path("review_sheet.csv");
    write_review_sheet(&out, &rows)?;
    println!("{} review rows written to {}", rows.len(), out.display());

    let mut m = RunManifest::new("review-export", config);
    for mp in methods {
        m.input(&mp.path);
    }
    m.output(&out);
    m.summary = json!({ "rows": rows.len(), "per_method": n, "raters": raters });
    m.write()?;
    Ok(0)
}
