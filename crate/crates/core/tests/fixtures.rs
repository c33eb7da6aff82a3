//! Golden fixtures: committed files must match what the library produces.
//! Set `CARS_BLESS=1` to rewrite them.

use std::collections::BTreeMap;
use std::path::PathBuf;

use cars_core::concept::{AnnotatedRecord, ConceptVocabulary};
use cars_core::dataset::{Manifest, Provenance};
use cars_core::editor::mock::stamp_contract;
use cars_core::io::{read_jsonl, write_jsonl, ReportRow};
use cars_core::synth::report_corpus;

const CORPUS_SIZE: usize = 240;
const CORPUS_SEED: u64 = 20240;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn bless() -> bool {
    std::env::var_os("CARS_BLESS").is_some()
}

#[test]
fn stamp_contract_matches_golden_file() {
    let vocab = ConceptVocabulary::bundled();
    let text = serde_json::to_string_pretty(&stamp_contract(&vocab)).unwrap() + "\n";
    let path = fixture("stamp_contract.json");
    if bless() {
        std::fs::write(&path, &text).unwrap();
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn corpus_matches_generator() {
    let vocab = ConceptVocabulary::bundled();
    let rows = report_corpus(&vocab, CORPUS_SIZE, "corpus", CORPUS_SEED);
    let path = fixture("corpus.jsonl");
    if bless() {
        write_jsonl(&path, &rows).unwrap();
    }
    assert_eq!(read_jsonl::<ReportRow>(&path).unwrap(), rows);
}

#[test]
fn hand_written_reports_match_tallied_counts() {
    let vocab = ConceptVocabulary::bundled();
    let rows: Vec<ReportRow> = read_jsonl(fixture("reports.jsonl")).unwrap();
    assert_eq!(rows.len(), 24);
    let records: Vec<AnnotatedRecord> = rows
        .iter()
        .map(|r| AnnotatedRecord::from_report(&r.image_id, &r.report_text, &vocab))
        .collect();
    let manifest = Manifest::new(records, Provenance::Real).unwrap();
    let want: BTreeMap<String, usize> = serde_json::from_str(
        &std::fs::read_to_string(fixture("reports_label_counts.json")).unwrap(),
    )
    .unwrap();
    let got: BTreeMap<String, usize> = manifest
        .label_counts()
        .into_iter()
        .map(|(l, n)| (l.to_string(), n))
        .collect();
    assert_eq!(got, want);
}
