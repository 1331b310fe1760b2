use cxrkit_core::evaluation::{
    build_blinded_items, confusion_matrix, scan_for_provenance, CandidateReport, EvaluationCase,
    EvaluationRecord, Instrument, Provenance, RaterId, RecordLedger, Response, SourceGuess,
};
use cxrkit_core::CaseId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn paired_cases(n: usize, a: Provenance, b: Provenance) -> Vec<EvaluationCase> {
    (0..n)
        .map(|i| EvaluationCase {
            case_id: CaseId::new(format!("case-{i:04}")),
            candidates: vec![
                CandidateReport {
                    provenance: a,
                    text: format!("Report A for case {i}. No pneumothorax."),
                },
                CandidateReport {
                    provenance: b,
                    text: format!("Report B for case {i}. Heart size normal."),
                },
            ],
            reference: Some(format!("Reference for case {i}.")),
        })
        .collect()
}

/// 99% normal-approximation bounds on a binomial count.
fn binomial_bounds(n: usize, p: f64) -> (f64, f64) {
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (n as f64 * p - 2.576 * sd, n as f64 * p + 2.576 * sd)
}

#[test]
fn pairwise_order_is_balanced() {
    let cases = paired_cases(300, Provenance::AiGenerated, Provenance::Published);
    let (lo, hi) = binomial_bounds(300, 0.5);
    for seed in 0..20u64 {
        let batch = build_blinded_items(&cases, Instrument::PairwisePreference, seed).unwrap();
        assert_eq!(batch.items.len(), 300);
        let ai_first = batch
            .key
            .entries
            .values()
            .filter(|e| e.sources[0] == Provenance::AiGenerated)
            .count() as f64;
        assert!(ai_first >= lo && ai_first <= hi, "seed {seed}: {ai_first}");
        let payload = serde_json::to_value(&batch.items).unwrap();
        assert!(scan_for_provenance(&payload).is_empty());
    }
}

#[test]
fn every_instrument_batch_is_blind() {
    let arms = paired_cases(50, Provenance::AiAssisted, Provenance::StandardCare);
    let sources = paired_cases(50, Provenance::AiGenerated, Provenance::Published);
    for (cases, inst) in [
        (&arms, Instrument::LikertQuality),
        (&arms, Instrument::RadpeerAgreement),
        (&arms, Instrument::PairwisePreference),
        (&sources, Instrument::SourceGuess),
    ] {
        let batch = build_blinded_items(cases, inst, 77).unwrap();
        let text = serde_json::to_string(&batch.items).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(scan_for_provenance(&value).is_empty(), "{inst}");
        for p in ["ai-assisted", "standard-care", "ai-generated", "published"] {
            assert!(!text.contains(&format!("\"{p}\"")), "{inst} leaks {p}");
        }
    }
}

#[test]
fn detectability_recovered_from_guesses() {
    // Raters recognise the true source with probability 0.7.
    let cases = paired_cases(150, Provenance::AiGenerated, Provenance::Published);
    let batch = build_blinded_items(&cases, Instrument::SourceGuess, 5).unwrap();
    assert_eq!(batch.items.len(), 300);
    let mut ledger = RecordLedger::default();
    ledger.register(&batch.items);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for item in &batch.items {
        let truth = batch.key.entries[&item.item_id].sources[0];
        for r in 0..5 {
            let right = rng.random_bool(0.7);
            let guess = match (truth, right) {
                (Provenance::AiGenerated, true) | (Provenance::Published, false) => SourceGuess::Ai,
                _ => SourceGuess::Published,
            };
            ledger
                .submit(EvaluationRecord {
                    item_id: item.item_id.clone(),
                    rater_id: RaterId::new(format!("rater-{r}")),
                    response: Response::Guess(guess),
                    timestamp: 0,
                })
                .unwrap();
        }
    }
    let m = confusion_matrix(ledger.records(), &batch.key).unwrap();
    assert_eq!(m.total, 1500);
    let (lo, hi) = binomial_bounds(1500, 0.7);
    let correct = m.accuracy * 1500.0;
    assert!(correct >= lo && correct <= hi, "accuracy {}", m.accuracy);
}

#[test]
fn chance_guessing_is_near_half() {
    let cases = paired_cases(150, Provenance::AiGenerated, Provenance::Published);
    let batch = build_blinded_items(&cases, Instrument::SourceGuess, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let records: Vec<EvaluationRecord> = batch
        .items
        .iter()
        .flat_map(|it| {
            (0..5)
                .map(|r| EvaluationRecord {
                    item_id: it.item_id.clone(),
                    rater_id: RaterId::new(format!("rater-{r}")),
                    response: Response::Guess(if rng.random_bool(0.5) {
                        SourceGuess::Ai
                    } else {
                        SourceGuess::Published
                    }),
                    timestamp: 0,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let m = confusion_matrix(&records, &batch.key).unwrap();
    let (lo, hi) = binomial_bounds(1500, 0.5);
    assert!(m.accuracy * 1500.0 >= lo && m.accuracy * 1500.0 <= hi);
}
