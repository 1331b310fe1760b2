//! Fixture-driven checks for the rule labeler and the sentence segmenter.
//!
//! Both fixture files were written by hand before the labeler existed; the
//! labels are the reading a radiologist would give each sentence.

use std::collections::BTreeMap;

use cxrkit_core::labeler::segment_sentences;
use cxrkit_core::{AssertionLabel, Finding, Labeler};
use serde::Deserialize;

#[derive(Deserialize)]
struct LabelCase {
    text: String,
    expected: BTreeMap<String, AssertionLabel>,
}

#[derive(Deserialize)]
struct SegmentCase {
    text: String,
    sentences: Vec<String>,
}

fn load<T: for<'de> Deserialize<'de>>(src: &str) -> Vec<T> {
    src.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("fixture line"))
        .collect()
}

#[test]
fn fifty_sentence_corpus_matches_hand_labels() {
    let cases: Vec<LabelCase> = load(include_str!("fixtures/labeler_regression.jsonl"));
    assert_eq!(cases.len(), 50);
    let labeler = Labeler::default();
    let mut mismatches = Vec::new();
    for case in &cases {
        let got = labeler.label(&case.text);
        for finding in Finding::ALL {
            let want = case
                .expected
                .get(finding.name())
                .copied()
                .unwrap_or(AssertionLabel::NotMentioned);
            if got.get(finding) != want {
                mismatches.push(format!(
                    "{:?}: {finding} expected {want}, got {}",
                    case.text,
                    got.get(finding)
                ));
            }
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

#[test]
fn segmentation_fixtures() {
    let cases: Vec<SegmentCase> = load(include_str!("fixtures/segmentation.jsonl"));
    assert!(cases.len() >= 20);
    for case in &cases {
        let got: Vec<&str> = segment_sentences(&case.text)
            .iter()
            .map(|s| s.text)
            .collect();
        assert_eq!(got, case.sentences, "text: {:?}", case.text);
    }
}
