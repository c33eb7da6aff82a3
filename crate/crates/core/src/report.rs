//! Markdown tables and machine-readable summaries for evaluation results.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::metrics::review::{RaterDistribution, ReviewStats, ALL_METHODS};
use crate::metrics::{MeanStd, MetricError, SemanticUncertainty, SsimSummary};
use crate::perturb::PerturbationType;

/// A row metric and whether larger values are improvements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MetricSpec {
    pub name: &'static str,
    pub higher_is_better: bool,
}

pub const CLASSIFICATION_METRICS: [MetricSpec; 3] = [
    MetricSpec {
        name: "AUROC",
        higher_is_better: true,
    },
    MetricSpec {
        name: "AUPRC",
        higher_is_better: true,
    },
    MetricSpec {
        name: "F1",
        higher_is_better: true,
    },
];

pub const CALIBRATION_METRICS: [MetricSpec; 2] = [
    MetricSpec {
        name: "Entropy",
        higher_is_better: false,
    },
    MetricSpec {
        name: "ECE",
        higher_is_better: false,
    },
];

/// Baseline values per model plus fine-tuned variants shown as deltas.
///
/// `values[metric][model]`, for the baseline and for every variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaTable {
    pub metrics: Vec<MetricSpec>,
    pub models: Vec<String>,
    pub baseline: Vec<Vec<f64>>,
    pub variants: Vec<(String, Vec<Vec<f64>>)>,
    pub notes: Vec<String>,
}

/// Signed difference and whether it is an improvement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Delta {
    pub value: f64,
    pub improved: bool,
}

impl Delta {
    pub fn new(baseline: f64, variant: f64, higher_is_better: bool) -> Self {
        let value = variant - baseline;
        let improved = if higher_is_better {
            value > 0.0
        } else {
            value < 0.0
        };
        Self { value, improved }
    }

    /// `↑ 0.048`, `↓ 0.007` or `0.000`; improvements in bold.
    pub fn render(&self) -> String {
        let magnitude = format!("{:.3}", self.value.abs());
        if magnitude == "0.000" {
            return magnitude;
        }
        let arrow = if self.value > 0.0 { '↑' } else { '↓' };
        if self.improved {
            format!("**{arrow} {magnitude}**")
        } else {
            format!("{arrow} {magnitude}")
        }
    }
}

impl DeltaTable {
    pub fn new(
        metrics: &[MetricSpec],
        models: Vec<String>,
        baseline: Vec<Vec<f64>>,
    ) -> Result<Self, MetricError> {
        let t = Self {
            metrics: metrics.to_vec(),
            models,
            baseline,
            variants: Vec::new(),
            notes: Vec::new(),
        };
        t.check_shape(&t.baseline)?;
        Ok(t)
    }

    fn check_shape(&self, values: &[Vec<f64>]) -> Result<(), MetricError> {
        if values.len() != self.metrics.len() || values.iter().any(|r| r.len() != self.models.len())
        {
            return Err(MetricError::Invalid(format!(
                "table block must be {} metrics × {} models",
                self.metrics.len(),
                self.models.len()
            )));
        }
        Ok(())
    }

    pub fn add_variant(
        &mut self,
        name: impl Into<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<(), MetricError> {
        self.check_shape(&values)?;
        self.variants.push((name.into(), values));
        Ok(())
    }

    pub fn deltas(&self) -> Vec<(String, Vec<Vec<Delta>>)> {
        self.variants
            .iter()
            .map(|(name, values)| {
                let block = self
                    .metrics
                    .iter()
                    .enumerate()
                    .map(|(m, spec)| {
                        (0..self.models.len())
                            .map(|k| {
                                Delta::new(self.baseline[m][k], values[m][k], spec.higher_is_better)
                            })
                            .collect()
                    })
                    .collect();
                (name.clone(), block)
            })
            .collect()
    }

    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.models.iter().map(|m| format!("**{m}**")).collect();
        let _ = writeln!(out, "| | | {} |", header.join(" | "));
        let _ = writeln!(out, "|---|---|{}", "---|".repeat(self.models.len()));
        for (m, spec) in self.metrics.iter().enumerate() {
            let first = if m == 0 { "**Baseline**" } else { "" };
            let cells: Vec<String> = self.baseline[m].iter().map(|v| format!("{v:.3}")).collect();
            let _ = writeln!(out, "| {first} | {} | {} |", spec.name, cells.join(" | "));
        }
        for (name, block) in self.deltas() {
            for (m, spec) in self.metrics.iter().enumerate() {
                let first = if m == 0 {
                    format!("**Finetuned {name}**")
                } else {
                    String::new()
                };
                let cells: Vec<String> = block[m].iter().map(Delta::render).collect();
                let _ = writeln!(out, "| {first} | Δ{} | {} |", spec.name, cells.join(" | "));
            }
        }
        for note in &self.notes {
            let _ = writeln!(out, "\n{note}");
        }
        out
    }
}

fn mean_std_cell(m: Option<&MeanStd>) -> String {
    match m {
        Some(m) => format!("{:.3} ± {:.3}", m.mean, m.std),
        None => "---".to_string(),
    }
}

/// SSIM per perturbation type and overall, one column per method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsimTable {
    pub methods: Vec<(String, SsimSummary)>,
}

impl SsimTable {
    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        let names: Vec<String> = self
            .methods
            .iter()
            .map(|(n, _)| format!("**{n}**"))
            .collect();
        let _ = writeln!(out, "| **Perturbation Type** | {} |", names.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(self.methods.len()));
        let types: Vec<PerturbationType> = [
            PerturbationType::IntraClass,
            PerturbationType::Insertion,
            PerturbationType::Deletion,
        ]
        .into_iter()
        .filter(|t| self.methods.iter().any(|(_, s)| s.per_type.contains_key(t)))
        .collect();
        for t in types {
            let cells: Vec<String> = self
                .methods
                .iter()
                .map(|(_, s)| mean_std_cell(s.per_type.get(&t)))
                .collect();
            let _ = writeln!(out, "| {} | {} |", t.display_name(), cells.join(" | "));
        }
        let overall: Vec<String> = self
            .methods
            .iter()
            .map(|(_, s)| format!("**{}**", mean_std_cell(Some(&s.overall))))
            .collect();
        let _ = writeln!(out, "| **Overall** | {} |", overall.join(" | "));
        out
    }
}

/// Mean ± std of each semantic score over a set of synthetic images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemanticSummary {
    pub jaccard: MeanStd,
    pub hamming: MeanStd,
    pub u_fp: MeanStd,
    pub u_fn: MeanStd,
}

impl SemanticSummary {
    pub fn of(scores: &[SemanticUncertainty]) -> Result<Self, MetricError> {
        let field = |f: fn(&SemanticUncertainty) -> f64| {
            let v: Vec<f64> = scores.iter().map(f).collect();
            MeanStd::of(&v).ok_or_else(|| MetricError::Empty("no semantic scores".into()))
        };
        Ok(Self {
            jaccard: field(|s| s.jaccard)?,
            hamming: field(|s| s.hamming_norm)?,
            u_fp: field(|s| s.u_fp)?,
            u_fn: field(|s| s.u_fn)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticTable {
    pub methods: Vec<(String, SemanticSummary)>,
}

impl SemanticTable {
    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "| | **Jaccard** | **Hamming** | **U_FP = 1 − Prec** | **U_FN = 1 − Rec** |"
        );
        let _ = writeln!(out, "|---|---|---|---|---|");
        for (name, s) in &self.methods {
            let _ = writeln!(
                out,
                "| **{name}** | {} | {} | {} | {} |",
                mean_std_cell(Some(&s.jaccard)),
                mean_std_cell(Some(&s.hamming)),
                mean_std_cell(Some(&s.u_fp)),
                mean_std_cell(Some(&s.u_fn)),
            );
        }
        out
    }
}

type ReviewRow = (&'static str, &'static str, fn(&RaterDistribution) -> f64);

/// Expert-review percentages: one column per (method, rater).
pub fn render_review_markdown(stats: &ReviewStats) -> String {
    let mut by_method: BTreeMap<&str, Vec<&RaterDistribution>> = BTreeMap::new();
    for d in &stats.distributions {
        by_method.entry(&d.method).or_default().push(d);
    }
    let columns: Vec<&RaterDistribution> = by_method.values().flatten().copied().collect();

    let mut out = String::new();
    let method_header: Vec<String> = columns
        .iter()
        .map(|d| {
            if d.method == ALL_METHODS {
                String::new()
            } else {
                format!("**{}**", d.method)
            }
        })
        .collect();
    let rater_header: Vec<String> = columns
        .iter()
        .map(|d| format!("**{}**", d.rater_id))
        .collect();
    let _ = writeln!(
        out,
        "| **Task** | **Assessment** | {} |",
        method_header.join(" | ")
    );
    let _ = writeln!(out, "|---|---|{}", "---|".repeat(columns.len()));
    let _ = writeln!(out, "| | | {} |", rater_header.join(" | "));
    let rows: [ReviewRow; 5] = [
        ("**Real/Synthetic**", "Real", |d| d.real_pct),
        ("", "Synthetic", |d| d.synthetic_pct),
        ("**Clinical Agreement**", "Fully Agree", |d| d.full_pct),
        ("", "Partial Agree", |d| d.partial_pct),
        ("", "Disagree", |d| d.disagree_pct),
    ];
    for (task, assessment, get) in rows {
        let cells: Vec<String> = columns.iter().map(|d| format!("{:.0}%", get(d))).collect();
        let _ = writeln!(out, "| {task} | {assessment} | {} |", cells.join(" | "));
    }
    let pct = |p: Option<f64>| p.map_or("n/a".to_string(), |v| format!("{v:.0}%"));
    let _ = writeln!(
        out,
        "\nInter-rater agreement over {} co-rated images: realism {}, clinical concepts {}.",
        stats.overall.co_rated,
        pct(stats.overall.realism_pct),
        pct(stats.overall.clinical_pct)
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_rendering() {
        assert_eq!(Delta::new(0.913, 0.916, true).render(), "**↑ 0.003**");
        assert_eq!(Delta::new(0.947, 0.940, true).render(), "↓ 0.007");
        assert_eq!(Delta::new(0.1, 0.088, false).render(), "**↓ 0.012**");
        assert_eq!(Delta::new(0.5, 0.5, true).render(), "0.000");
    }

    #[test]
    fn delta_table_shape() {
        let mut t = DeltaTable::new(
            &CLASSIFICATION_METRICS,
            vec!["A".into(), "B".into()],
            vec![vec![0.9, 0.8], vec![0.7, 0.6], vec![0.5, 0.4]],
        )
        .unwrap();
        t.add_variant("X", vec![vec![0.9, 0.8], vec![0.7, 0.6], vec![0.5, 0.4]])
            .unwrap();
        assert!(t.add_variant("bad", vec![vec![0.1]]).is_err());
        let md = t.render_markdown();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 2 + 3 + 3);
        assert!(lines[5].starts_with("| **Finetuned X** | ΔAUROC | 0.000 | 0.000 |"));
    }
}
