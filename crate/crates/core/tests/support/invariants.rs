//! Checks every structural guarantee of a perturbation set and reports
//! each violation as text.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use cars_core::concept::{AnnotatedRecord, ConceptVocabulary, DiagnosticLabel};
use cars_core::perturb::{build_prompt, PerturbationSet, PerturbationType, SkipKind};

pub fn violations(
    rec: &AnnotatedRecord,
    set: &PerturbationSet,
    vocab: &ConceptVocabulary,
) -> Vec<String> {
    let mut out = Vec::new();
    let id = rec.image_id();
    let orig = rec.pathology_labels();
    let mut per_type: std::collections::BTreeMap<PerturbationType, HashSet<String>> =
        Default::default();

    for r in &set.results {
        let tag = format!("{id}/{}#{}", r.ptype, r.sequence_index);
        if r.source_image_id != id {
            out.push(format!("{tag}: wrong source id"));
        }
        if let Err(e) = vocab.validate(&r.perturbed) {
            out.push(format!("{tag}: invalid vector: {e}"));
            continue;
        }
        match vocab.concepts_to_labels(&r.perturbed) {
            Ok(l) if l == r.perturbed_labels => {}
            _ => out.push(format!("{tag}: labels do not follow from concepts")),
        }
        if build_prompt(&r.perturbed, vocab).ok().as_deref() != Some(r.prompt.as_str()) {
            out.push(format!(
                "{tag}: prompt does not list the perturbed concepts"
            ));
        }
        if &r.perturbed == rec.concepts() {
            out.push(format!("{tag}: identical to the source vector"));
        }
        if !per_type
            .entry(r.ptype)
            .or_default()
            .insert(r.perturbed.to_bit_string())
        {
            out.push(format!("{tag}: duplicate vector"));
        }
        let new: BTreeSet<DiagnosticLabel> = r
            .perturbed_labels
            .iter()
            .copied()
            .filter(|l| l.is_pathology())
            .collect();
        match r.ptype {
            PerturbationType::IntraClass => {
                if &r.perturbed_labels != rec.labels() {
                    out.push(format!("{tag}: intra-class changed the label set"));
                }
            }
            PerturbationType::Insertion => {
                if !new.is_superset(&orig) || new.len() != orig.len() + 1 {
                    out.push(format!("{tag}: insertion must add exactly one label"));
                }
                let kept = rec
                    .concepts()
                    .ones()
                    .filter(|&i| i != vocab.unremarkable_index())
                    .all(|i| r.perturbed.get(i));
                if !kept {
                    out.push(format!("{tag}: insertion dropped a source concept"));
                }
            }
            PerturbationType::Deletion => {
                if orig.len() == 1 {
                    let nrf: BTreeSet<_> = [DiagnosticLabel::NoRelevantFinding].into();
                    if r.perturbed_labels != nrf {
                        out.push(format!(
                            "{tag}: single-label deletion must yield NoRelevantFinding"
                        ));
                    }
                } else if !new.is_subset(&orig) || new.len() + 1 != orig.len() {
                    out.push(format!("{tag}: deletion must remove exactly one label"));
                }
                if r.perturbed
                    .ones()
                    .any(|i| i != vocab.unremarkable_index() && !rec.concepts().get(i))
                {
                    out.push(format!("{tag}: deletion added a concept"));
                }
            }
        }
    }
    for (t, vs) in &per_type {
        if vs.len() > 2 {
            out.push(format!("{id}/{t}: more than two results"));
        }
    }

    let cardiomegaly_only = orig == [DiagnosticLabel::Cardiomegaly].into();
    if cardiomegaly_only {
        let undefined = set
            .skips
            .iter()
            .any(|s| s.ptype == PerturbationType::IntraClass && s.kind == SkipKind::Undefined);
        let produced = set
            .results
            .iter()
            .any(|r| r.ptype == PerturbationType::IntraClass);
        if produced || !undefined {
            out.push(format!(
                "{id}: cardiomegaly-only intra-class must be undefined"
            ));
        }
    }
    out
}
