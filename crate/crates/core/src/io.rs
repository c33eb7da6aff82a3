//! File formats: JSON-lines manifests and CSV prediction, truth and review
//! tables.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept::{AnnotatedRecord, ConceptVector, ConceptVocabulary, DiagnosticLabel};
use crate::dataset::Split;
use crate::metrics::{Agreement, GroundTruthMatrix, PredictionMatrix, Realism, ReviewRecord};
use crate::perturb::{PerturbationResult, PerturbationType};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| IoError::Row {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| IoError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub image_id: String,
    pub report_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub image_id: String,
    pub report_text: String,
    pub concepts: String,
    pub labels: Vec<DiagnosticLabel>,
}

impl AnnotationRow {
    pub fn from_record(r: &AnnotatedRecord) -> Self {
        Self {
            image_id: r.image_id().to_string(),
            report_text: r.report_text().to_string(),
            concepts: r.concepts().to_bit_string(),
            labels: r.labels().iter().copied().collect(),
        }
    }

    /// Rebuilds the record; the stored labels must match the concepts.
    pub fn to_record(&self, vocab: &ConceptVocabulary) -> Result<AnnotatedRecord, String> {
        let v = ConceptVector::from_bit_string(&self.concepts).map_err(|e| e.to_string())?;
        let rec = AnnotatedRecord::new(&self.image_id, &self.report_text, v, vocab)
            .map_err(|e| e.to_string())?;
        if !rec.labels().iter().eq(self.labels.iter()) {
            return Err(format!(
                "`{}`: labels {:?} do not follow from concepts {}",
                self.image_id, self.labels, self.concepts
            ));
        }
        Ok(rec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub synthetic_id: String,
    pub source_image_id: String,
    pub ptype: PerturbationType,
    pub sequence_index: usize,
    pub concepts: String,
    pub labels: Vec<DiagnosticLabel>,
    pub prompt: String,
    pub seed: u64,
}

impl PerturbationRow {
    pub fn from_result(r: &PerturbationResult) -> Self {
        Self {
            synthetic_id: r.synthetic_id(),
            source_image_id: r.source_image_id.clone(),
            ptype: r.ptype,
            sequence_index: r.sequence_index,
            concepts: r.perturbed.to_bit_string(),
            labels: r.perturbed_labels.iter().copied().collect(),
            prompt: r.prompt.clone(),
            seed: r.seed,
        }
    }

    pub fn concept_vector(&self) -> Result<ConceptVector, String> {
        ConceptVector::from_bit_string(&self.concepts).map_err(|e| e.to_string())
    }
}

/// Links a synthetic image to its source image and intended concepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRow {
    pub synthetic_id: String,
    pub source_image_id: String,
    pub ptype: PerturbationType,
    pub original: String,
    pub synthetic: String,
    pub concepts: String,
    pub labels: Vec<DiagnosticLabel>,
    pub prompt: String,
    pub backend_info: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRow {
    pub image_id: String,
    pub split: Split,
}

fn label_columns(headers: &csv::StringRecord, path: &Path) -> Result<(usize, [usize; 5]), IoError> {
    let find = |want: &str| {
        headers.iter().position(|h| {
            let h = h.trim();
            let h = h.strip_prefix("p_").unwrap_or(h);
            h.eq_ignore_ascii_case(want)
        })
    };
    let missing = |what: &str| IoError::Format {
        path: path.to_path_buf(),
        message: format!("missing column `{what}`"),
    };
    let id = find("image_id").ok_or_else(|| missing("image_id"))?;
    let mut cols = [0; 5];
    for (slot, label) in cols.iter_mut().zip(DiagnosticLabel::PATHOLOGIES) {
        *slot = find(label.as_str()).ok_or_else(|| missing(label.as_str()))?;
    }
    Ok((id, cols))
}

fn read_label_table<T>(
    path: &Path,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<(Vec<String>, Vec<[T; 5]>), IoError>
where
    T: Copy + Default,
{
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let (id_col, cols) = label_columns(&headers, path)?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let line = i + 2;
        let row_err = |message: String| IoError::Row {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut row = [T::default(); 5];
        for (slot, &c) in row.iter_mut().zip(&cols) {
            let cell = rec.get(c).ok_or_else(|| row_err("short row".into()))?;
            *slot = parse(cell.trim()).map_err(row_err)?;
        }
        ids.push(rec.get(id_col).unwrap_or_default().to_string());
        rows.push(row);
    }
    Ok((ids, rows))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<PredictionMatrix, IoError> {
    let path = path.as_ref();
    let (ids, rows) = read_label_table(path, |s| {
        s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))
    })?;
    PredictionMatrix::new(ids, rows).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<GroundTruthMatrix, IoError> {
    let path = path.as_ref();
    let (ids, rows) = read_label_table(path, |s| match s {
        "1" | "1.0" | "true" => Ok(true),
        "0" | "0.0" | "false" => Ok(false),
        other => Err(format!("truth value `{other}` is not 0 or 1")),
    })?;
    GroundTruthMatrix::new(ids, rows).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_label_table(
    path: &Path,
    ids: &[String],
    cells: impl Fn(usize) -> [String; 5],
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["image_id"];
    header.extend(DiagnosticLabel::PATHOLOGIES.iter().map(|l| l.as_str()));
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(cells(i));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &PredictionMatrix) -> Result<(), IoError> {
    write_label_table(path.as_ref(), preds.image_ids(), |i| {
        preds.rows()[i].map(|p| format!("{p}"))
    })
}

pub fn write_truth(path: impl AsRef<Path>, truth: &GroundTruthMatrix) -> Result<(), IoError> {
    write_label_table(path.as_ref(), truth.image_ids(), |i| {
        truth.rows()[i].map(|t| u8::from(t).to_string())
    })
}

/// Truth matrix for annotated records, in record order.
pub fn truth_from_records(
    records: &[AnnotatedRecord],
) -> Result<GroundTruthMatrix, crate::metrics::MetricError> {
    let ids = records.iter().map(|r| r.image_id().to_string()).collect();
    let rows = records
        .iter()
        .map(|r| DiagnosticLabel::PATHOLOGIES.map(|l| r.labels().contains(&l)))
        .collect();
    GroundTruthMatrix::new(ids, rows)
}

/// One line of a review sheet; answers are blank until a rater fills them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSheetRow {
    pub image_id: String,
    pub method: String,
    pub image_path: String,
    pub rater_id: String,
    pub realism: String,
    pub agreement: String,
    pub free_text: String,
}

pub fn write_review_sheet(path: impl AsRef<Path>, rows: &[ReviewSheetRow]) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// A rejected review-sheet line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReviewSheet {
    pub records: Vec<ReviewRecord>,
    pub errors: Vec<RowError>,
}

/// Parses a filled review sheet. Malformed lines are collected in
/// `errors` rather than aborting the read.
pub fn read_review_sheet(path: impl AsRef<Path>) -> Result<ReviewSheet, IoError> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let col: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_ascii_lowercase(), i))
        .collect();
    for required in ["image_id", "rater_id", "realism", "agreement"] {
        if !col.contains_key(required) {
            return Err(IoError::Format {
                path: path.to_path_buf(),
                message: format!("missing column `{required}`"),
            });
        }
    }
    let mut sheet = ReviewSheet::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                sheet.errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let cell = |name: &str| {
            col.get(name)
                .and_then(|&c| rec.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
        };
        let parsed = (|| -> Result<ReviewRecord, String> {
            let image_id = cell("image_id").ok_or("blank image_id")?.to_string();
            let rater_id = cell("rater_id").ok_or("blank rater_id")?.to_string();
            let realism: Realism = cell("realism")
                .ok_or("unanswered realism")?
                .parse()
                .map_err(|e: crate::metrics::MetricError| e.to_string())?;
            let agreement: Agreement = cell("agreement")
                .ok_or("unanswered agreement")?
                .parse()
                .map_err(|e: crate::metrics::MetricError| e.to_string())?;
            Ok(ReviewRecord {
                image_id,
                method: cell("method").map(str::to_string),
                rater_id,
                realism,
                agreement,
                free_text: cell("free_text").map(str::to_string),
            })
        })();
        match parsed {
            Ok(r) => sheet.records.push(r),
            Err(message) => sheet.errors.push(RowError { line, message }),
        }
    }
    Ok(sheet)
}
