//! Blinded rater instruments: Likert quality, RADPEER-style agreement,
//! pairwise preference and the "which report is AI" task.
//!
//! [`build_blinded_items`] produces items that carry report text only, plus
//! an [`UnblindingKey`] kept apart from the items. Responses go through a
//! [`RecordLedger`] and are summarized by joining back through the key.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{Arm, AuthorRole, CaseId};
use crate::stats::{self, KendallW, PreferenceOutcome, RatingMatrix, StatsError, Summary};

crate::string_id!(
    /// Evaluation item identifier; carries no provenance.
    ItemId
);
crate::string_id!(RaterId);

pub const DEFAULT_RATERS_PER_ITEM: usize = 5;
pub const LIKERT_MAX: u8 = 5;
pub const DEFAULT_AGREEMENT_MAX: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instrument {
    LikertQuality,
    RadpeerAgreement,
    PairwisePreference,
    SourceGuess,
}

impl Instrument {
    pub const ALL: [Instrument; 4] = [
        Instrument::LikertQuality,
        Instrument::RadpeerAgreement,
        Instrument::PairwisePreference,
        Instrument::SourceGuess,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::LikertQuality => "likert_quality",
            Instrument::RadpeerAgreement => "radpeer_agreement",
            Instrument::PairwisePreference => "pairwise_preference",
            Instrument::SourceGuess => "source_guess",
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a report under evaluation came from. Only the unblinding key
/// records this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AiAssisted,
    StandardCare,
    AiGenerated,
    Published,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::AiAssisted => "ai-assisted",
            Provenance::StandardCare => "standard-care",
            Provenance::AiGenerated => "ai-generated",
            Provenance::Published => "published",
        }
    }

    fn guess_class(self) -> Option<SourceGuess> {
        match self {
            Provenance::AiGenerated => Some(SourceGuess::Ai),
            Provenance::Published => Some(SourceGuess::Published),
            _ => None,
        }
    }
}

impl From<Arm> for Provenance {
    fn from(arm: Arm) -> Self {
        match arm {
            Arm::AiAssisted => Provenance::AiAssisted,
            Arm::StandardCare => Provenance::StandardCare,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub provenance: Provenance,
    pub text: String,
}

/// Reports available for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationCase {
    pub case_id: CaseId,
    pub candidates: Vec<CandidateReport>,
    /// Reference report for agreement scoring.
    #[serde(default)]
    pub reference: Option<String>,
}

/// What a rater sees. `texts` holds one report, or two for pairwise
/// preference and agreement scoring (for agreement the reference is first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationItem {
    pub item_id: ItemId,
    pub case_id: CaseId,
    pub instrument: Instrument,
    pub texts: Vec<String>,
    pub display_order_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub case_id: CaseId,
    pub instrument: Instrument,
    /// Provenance of each rated text, aligned with the item's texts. For
    /// agreement items the reference text is not listed.
    pub sources: Vec<Provenance>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnblindingKey {
    pub entries: BTreeMap<ItemId, KeyEntry>,
}

impl UnblindingKey {
    pub fn get(&self, item: &ItemId) -> Result<&KeyEntry, EvalError> {
        self.entries
            .get(item)
            .ok_or_else(|| EvalError::UnknownItem(item.clone()))
    }

    pub fn merge(&mut self, other: UnblindingKey) {
        self.entries.extend(other.entries);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedBatch {
    pub items: Vec<EvaluationItem>,
    pub key: UnblindingKey,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("case {case_id}: {reason}")]
    MissingReport { case_id: CaseId, reason: String },
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("duplicate record for item {item} by rater {rater}")]
    DuplicateRecord { item: ItemId, rater: RaterId },
    #[error("response {response} is not valid for {instrument}")]
    InvalidResponse {
        instrument: Instrument,
        response: String,
    },
    #[error("item {item} has {found} ratings, expected {expected}")]
    IncompleteCoverage {
        item: ItemId,
        found: usize,
        expected: usize,
    },
    #[error("{instrument}: rater {rater} did not rate item {item}")]
    IncompleteMatrix {
        instrument: Instrument,
        rater: RaterId,
        item: ItemId,
    },
    #[error("no records")]
    NoRecords,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Builds a deterministic blinded batch for one instrument.
///
/// Items are shuffled and numbered after shuffling so neither order nor id
/// reveals the source; pairwise items present their two texts in a seeded
/// random order.
pub fn build_blinded_items(
    cases: &[EvaluationCase],
    instrument: Instrument,
    seed: u64,
) -> Result<BlindedBatch, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drafts: Vec<(CaseId, Vec<String>, Vec<Provenance>)> = Vec::new();
    for case in cases {
        let missing = |reason: &str| EvalError::MissingReport {
            case_id: case.case_id.clone(),
            reason: reason.to_string(),
        };
        match instrument {
            Instrument::LikertQuality => {
                if case.candidates.is_empty() {
                    return Err(missing("no report to rate"));
                }
                for c in &case.candidates {
                    drafts.push((
                        case.case_id.clone(),
                        vec![c.text.clone()],
                        vec![c.provenance],
                    ));
                }
            }
            Instrument::SourceGuess => {
                if case.candidates.is_empty() {
                    return Err(missing("no report to rate"));
                }
                for c in &case.candidates {
                    if c.provenance.guess_class().is_none() {
                        return Err(missing(
                            "source guess needs ai-generated or published reports",
                        ));
                    }
                    drafts.push((
                        case.case_id.clone(),
                        vec![c.text.clone()],
                        vec![c.provenance],
                    ));
                }
            }
            Instrument::RadpeerAgreement => {
                let reference = case
                    .reference
                    .as_ref()
                    .ok_or_else(|| missing("agreement scoring needs a reference report"))?;
                if case.candidates.is_empty() {
                    return Err(missing("no report to compare"));
                }
                for c in &case.candidates {
                    drafts.push((
                        case.case_id.clone(),
                        vec![reference.clone(), c.text.clone()],
                        vec![c.provenance],
                    ));
                }
            }
            Instrument::PairwisePreference => {
                let [a, b] = case.candidates.as_slice() else {
                    return Err(missing("pairwise preference needs exactly two reports"));
                };
                let (first, second) = if rng.random_bool(0.5) { (b, a) } else { (a, b) };
                drafts.push((
                    case.case_id.clone(),
                    vec![first.text.clone(), second.text.clone()],
                    vec![first.provenance, second.provenance],
                ));
            }
        }
    }
    drafts.shuffle(&mut rng);

    let prefix = match instrument {
        Instrument::LikertQuality => "lq",
        Instrument::RadpeerAgreement => "ra",
        Instrument::PairwisePreference => "pp",
        Instrument::SourceGuess => "sg",
    };
    let mut items = Vec::with_capacity(drafts.len());
    let mut key = UnblindingKey::default();
    for (k, (case_id, texts, sources)) in drafts.into_iter().enumerate() {
        let item_id = ItemId::new(format!("{prefix}-{seed:016x}-{:05}", k + 1));
        key.entries.insert(
            item_id.clone(),
            KeyEntry {
                case_id: case_id.clone(),
                instrument,
                sources,
            },
        );
        items.push(EvaluationItem {
            item_id,
            case_id,
            instrument,
            texts,
            display_order_seed: rng.random(),
        });
    }
    Ok(BlindedBatch { items, key })
}

const FORBIDDEN_KEY_TOKENS: &[&str] = &[
    "arm",
    "ai",
    "author",
    "role",
    "model",
    "source",
    "provenance",
    "draft",
];

/// Paths in a serialized payload that could reveal provenance: object keys
/// containing a forbidden token (split on `_` and `-`), and string values
/// equal to an arm, author-role or provenance name.
pub fn scan_for_provenance(value: &serde_json::Value) -> Vec<String> {
    let forbidden_values: BTreeSet<&str> = Arm::BOTH
        .iter()
        .map(|a| a.as_str())
        .chain(
            [
                AuthorRole::AiModel,
                AuthorRole::Junior,
                AuthorRole::SeniorReleased,
            ]
            .iter()
            .map(|r| r.as_str()),
        )
        .chain(
            [
                Provenance::AiAssisted,
                Provenance::StandardCare,
                Provenance::AiGenerated,
                Provenance::Published,
            ]
            .iter()
            .map(|p| p.as_str()),
        )
        .collect();
    let mut hits = Vec::new();
    scan(value, "$", &forbidden_values, &mut hits);
    hits
}

fn scan(value: &serde_json::Value, path: &str, bad: &BTreeSet<&str>, hits: &mut Vec<String>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let here = format!("{path}.{k}");
                let lowered = k.to_lowercase();
                if lowered
                    .split(['_', '-'])
                    .any(|t| FORBIDDEN_KEY_TOKENS.contains(&t))
                {
                    hits.push(here.clone());
                }
                scan(v, &here, bad, hits);
            }
        }
        serde_json::Value::Array(xs) => {
            for (i, v) in xs.iter().enumerate() {
                scan(v, &format!("{path}[{i}]"), bad, hits);
            }
        }
        serde_json::Value::String(s) if bad.contains(s.to_lowercase().as_str()) => {
            hits.push(path.to_string());
        }
        _ => {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Position {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceGuess {
    Ai,
    Published,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Response {
    Likert(u8),
    Agreement(u8),
    Choice(Position),
    Guess(SourceGuess),
}

impl Response {
    /// Ordinal coding used for concordance.
    pub fn score(&self) -> f64 {
        match self {
            Response::Likert(v) | Response::Agreement(v) => f64::from(*v),
            Response::Choice(Position::First) | Response::Guess(SourceGuess::Ai) => 1.0,
            Response::Choice(Position::Second) | Response::Guess(SourceGuess::Published) => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub item_id: ItemId,
    pub rater_id: RaterId,
    pub response: Response,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Append-only store of responses; at most one record per (item, rater).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLedger {
    instruments: BTreeMap<ItemId, Instrument>,
    agreement_max: u8,
    seen: BTreeSet<(ItemId, RaterId)>,
    records: Vec<EvaluationRecord>,
}

impl RecordLedger {
    pub fn new(agreement_max: u8) -> Self {
        RecordLedger {
            instruments: BTreeMap::new(),
            agreement_max,
            seen: BTreeSet::new(),
            records: Vec::new(),
        }
    }

    pub fn register(&mut self, items: &[EvaluationItem]) {
        for it in items {
            self.instruments.insert(it.item_id.clone(), it.instrument);
        }
    }

    /// Validates a record without storing it.
    pub fn check(&self, record: &EvaluationRecord) -> Result<(), EvalError> {
        let instrument = *self
            .instruments
            .get(&record.item_id)
            .ok_or_else(|| EvalError::UnknownItem(record.item_id.clone()))?;
        let valid = match (instrument, record.response) {
            (Instrument::LikertQuality, Response::Likert(v)) => (1..=LIKERT_MAX).contains(&v),
            (Instrument::RadpeerAgreement, Response::Agreement(v)) => {
                (1..=self.agreement_max).contains(&v)
            }
            (Instrument::PairwisePreference, Response::Choice(_)) => true,
            (Instrument::SourceGuess, Response::Guess(_)) => true,
            _ => false,
        };
        if !valid {
            return Err(EvalError::InvalidResponse {
                instrument,
                response: format!("{:?}", record.response),
            });
        }
        let key = (record.item_id.clone(), record.rater_id.clone());
        if self.seen.contains(&key) {
            return Err(EvalError::DuplicateRecord {
                item: key.0,
                rater: key.1,
            });
        }
        Ok(())
    }

    pub fn submit(&mut self, record: EvaluationRecord) -> Result<(), EvalError> {
        self.check(&record)?;
        self.seen
            .insert((record.item_id.clone(), record.rater_id.clone()));
        self.records.push(record);
        Ok(())
    }

    pub fn instrument(&self, item: &ItemId) -> Option<Instrument> {
        self.instruments.get(item).copied()
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }
}

impl Default for RecordLedger {
    fn default() -> Self {
        RecordLedger::new(DEFAULT_AGREEMENT_MAX)
    }
}

/// Rows are the true source (ai, published), columns the guess.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceConfusion {
    pub counts: [[u64; 2]; 2],
    pub total: u64,
    pub accuracy: f64,
}

pub fn confusion_matrix(
    records: &[EvaluationRecord],
    key: &UnblindingKey,
) -> Result<SourceConfusion, EvalError> {
    let mut counts = [[0u64; 2]; 2];
    let idx = |g: SourceGuess| match g {
        SourceGuess::Ai => 0,
        SourceGuess::Published => 1,
    };
    for r in records {
        let entry = key.get(&r.item_id)?;
        if entry.instrument != Instrument::SourceGuess {
            continue;
        }
        let truth = entry.sources[0]
            .guess_class()
            .ok_or_else(|| EvalError::MissingReport {
                case_id: entry.case_id.clone(),
                reason: "item source is not ai-generated or published".into(),
            })?;
        let Response::Guess(guess) = r.response else {
            return Err(EvalError::InvalidResponse {
                instrument: Instrument::SourceGuess,
                response: format!("{:?}", r.response),
            });
        };
        counts[idx(truth)][idx(guess)] += 1;
    }
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return Err(EvalError::NoRecords);
    }
    Ok(SourceConfusion {
        counts,
        total,
        accuracy: (counts[0][0] + counts[1][1]) as f64 / total as f64,
    })
}

fn records_for<'a>(
    records: &'a [EvaluationRecord],
    key: &UnblindingKey,
    instrument: Instrument,
) -> Result<BTreeMap<ItemId, Vec<&'a EvaluationRecord>>, EvalError> {
    let mut by_item: BTreeMap<ItemId, Vec<&EvaluationRecord>> = BTreeMap::new();
    for r in records {
        if key.get(&r.item_id)?.instrument == instrument {
            by_item.entry(r.item_id.clone()).or_default().push(r);
        }
    }
    Ok(by_item)
}

/// Per-case score for single-report instruments: the mean over raters of
/// the item for that case and provenance.
pub fn per_case_scores(
    records: &[EvaluationRecord],
    key: &UnblindingKey,
    instrument: Instrument,
    raters_per_item: usize,
) -> Result<BTreeMap<Provenance, BTreeMap<CaseId, f64>>, EvalError> {
    let mut out: BTreeMap<Provenance, BTreeMap<CaseId, f64>> = BTreeMap::new();
    for (item, recs) in records_for(records, key, instrument)? {
        if recs.len() != raters_per_item {
            return Err(EvalError::IncompleteCoverage {
                item,
                found: recs.len(),
                expected: raters_per_item,
            });
        }
        let entry = key.get(&item)?;
        let mean = recs.iter().map(|r| r.response.score()).sum::<f64>() / recs.len() as f64;
        out.entry(entry.sources[0])
            .or_default()
            .insert(entry.case_id.clone(), mean);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub summary: Summary,
    /// Count of each raw rater score.
    pub distribution: BTreeMap<u8, usize>,
}

fn score_summary(
    records: &[EvaluationRecord],
    key: &UnblindingKey,
    instrument: Instrument,
    raters_per_item: usize,
) -> Result<BTreeMap<Provenance, ScoreSummary>, EvalError> {
    let cases = per_case_scores(records, key, instrument, raters_per_item)?;
    let mut dist: BTreeMap<Provenance, BTreeMap<u8, usize>> = BTreeMap::new();
    for r in records {
        let entry = key.get(&r.item_id)?;
        if entry.instrument != instrument {
            continue;
        }
        if let Response::Likert(v) | Response::Agreement(v) = r.response {
            *dist
                .entry(entry.sources[0])
                .or_default()
                .entry(v)
                .or_default() += 1;
        }
    }
    let mut out = BTreeMap::new();
    for (prov, scores) in cases {
        let values: Vec<f64> = scores.values().copied().collect();
        out.insert(
            prov,
            ScoreSummary {
                summary: stats::summarize(&values)?,
                distribution: dist.remove(&prov).unwrap_or_default(),
            },
        );
    }
    Ok(out)
}

pub fn radpeer_summary(
    records: &[EvaluationRecord],
    key: &UnblindingKey,
    raters_per_item: usize,
) -> Result<BTreeMap<Provenance, ScoreSummary>, EvalError> {
    score_summary(records, key, Instrument::RadpeerAgreement, raters_per_item)
}

pub fn likert_summary(
    records: &[EvaluationRecord],
    key: &UnblindingKey,
    raters_per_item: usize,
) -> Result<BTreeMap<Provenance, ScoreSummary>, EvalError> {
    score_summary(records, key, Instrument::LikertQuality, raters_per_item)
}

/// Pairwise choices resolved to provenance, one row per case.
pub fn preference_votes(
    records: &[EvaluationRecord],
    key: &UnblindingKey,
) -> Result<BTreeMap<CaseId, Vec<Option<Provenance>>>, EvalError> {
    let mut out: BTreeMap<CaseId, Vec<Option<Provenance>>> = BTreeMap::new();
    for (item, recs) in records_for(records, key, Instrument::PairwisePreference)? {
        let entry = key.get(&item)?;
        let votes = out.entry(entry.case_id.clone()).or_default();
        for r in recs {
            let Response::Choice(pos) = r.response else {
                return Err(EvalError::InvalidResponse {
                    instrument: Instrument::PairwisePreference,
                    response: format!("{:?}", r.response),
                });
            };
            let i = match pos {
                Position::First => 0,
                Position::Second => 1,
            };
            votes.push(entry.sources.get(i).copied());
        }
    }
    Ok(out)
}

pub fn preference_summary(
    records: &[EvaluationRecord],
    key: &UnblindingKey,
    threshold: usize,
) -> Result<PreferenceOutcome<Provenance>, EvalError> {
    let votes: Vec<Vec<Option<Provenance>>> =
        preference_votes(records, key)?.into_values().collect();
    Ok(stats::preference_majority(&votes, threshold)?)
}

/// Kendall's W per instrument over the complete rater × item matrix.
pub fn interrater_report(
    records: &[EvaluationRecord],
    key: &UnblindingKey,
) -> Result<BTreeMap<Instrument, KendallW>, EvalError> {
    let mut out = BTreeMap::new();
    for instrument in Instrument::ALL {
        let by_item = records_for(records, key, instrument)?;
        if by_item.is_empty() {
            continue;
        }
        let raters: BTreeSet<&RaterId> = by_item.values().flatten().map(|r| &r.rater_id).collect();
        let mut rows = Vec::with_capacity(raters.len());
        for rater in &raters {
            let mut row = Vec::with_capacity(by_item.len());
            for (item, recs) in &by_item {
                let r = recs.iter().find(|r| &r.rater_id == *rater).ok_or_else(|| {
                    EvalError::IncompleteMatrix {
                        instrument,
                        rater: (*rater).clone(),
                        item: item.clone(),
                    }
                })?;
                row.push(r.response.score());
            }
            rows.push(row);
        }
        out.insert(instrument, stats::kendalls_w(&RatingMatrix::new(rows)?)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cases(n: usize) -> Vec<EvaluationCase> {
        (0..n)
            .map(|i| EvaluationCase {
                case_id: CaseId::new(format!("c{i:03}")),
                candidates: vec![
                    CandidateReport {
                        provenance: Provenance::AiAssisted,
                        text: format!("assisted report {i}"),
                    },
                    CandidateReport {
                        provenance: Provenance::StandardCare,
                        text: format!("standard report {i}"),
                    },
                ],
                reference: Some(format!("reference {i}")),
            })
            .collect()
    }

    fn rec(item: &ItemId, rater: &str, response: Response) -> EvaluationRecord {
        EvaluationRecord {
            item_id: item.clone(),
            rater_id: RaterId::new(rater),
            response,
            timestamp: 0,
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let c = cases(20);
        for inst in [
            Instrument::LikertQuality,
            Instrument::RadpeerAgreement,
            Instrument::PairwisePreference,
        ] {
            assert_eq!(
                build_blinded_items(&c, inst, 9).unwrap(),
                build_blinded_items(&c, inst, 9).unwrap()
            );
        }
        assert_ne!(
            build_blinded_items(&c, Instrument::PairwisePreference, 9).unwrap(),
            build_blinded_items(&c, Instrument::PairwisePreference, 10).unwrap()
        );
    }

    #[test]
    fn items_pass_blinding_scan() {
        let c = cases(10);
        for inst in [
            Instrument::LikertQuality,
            Instrument::RadpeerAgreement,
            Instrument::PairwisePreference,
        ] {
            let batch = build_blinded_items(&c, inst, 1).unwrap();
            let v = serde_json::to_value(&batch.items).unwrap();
            assert!(scan_for_provenance(&v).is_empty(), "{inst}");
            // The key is exactly what the scan is meant to catch.
            assert!(!scan_for_provenance(&serde_json::to_value(&batch.key).unwrap()).is_empty());
        }
    }

    #[test]
    fn scan_flags_tokens_and_values() {
        let v = serde_json::json!({
            "author_role": "junior",
            "items": [{"text": "ok", "label": "ai-assisted"}],
            "ArmName": 1,
            "airway": "clear",
        });
        let hits = scan_for_provenance(&v);
        assert!(hits.contains(&"$.author_role".to_string()));
        assert!(hits.contains(&"$.items[0].label".to_string()));
        assert!(!hits.iter().any(|h| h.contains("airway")));
        assert!(!hits.iter().any(|h| h.contains("ArmName")));
    }

    #[test]
    fn agreement_items_put_reference_first() {
        let batch = build_blinded_items(&cases(3), Instrument::RadpeerAgreement, 4).unwrap();
        assert_eq!(batch.items.len(), 6);
        for it in &batch.items {
            assert!(it.texts[0].starts_with("reference"));
            assert_eq!(batch.key.entries[&it.item_id].sources.len(), 1);
        }
    }

    #[test]
    fn missing_reports_rejected() {
        let mut c = cases(2);
        c[1].reference = None;
        assert!(matches!(
            build_blinded_items(&c, Instrument::RadpeerAgreement, 0),
            Err(EvalError::MissingReport { .. })
        ));
        c[0].candidates.pop();
        assert!(build_blinded_items(&c, Instrument::PairwisePreference, 0).is_err());
        assert!(build_blinded_items(&cases(1), Instrument::SourceGuess, 0).is_err());
    }

    #[test]
    fn ledger_rejects_duplicates_and_bad_ranges() {
        let batch = build_blinded_items(&cases(1), Instrument::LikertQuality, 0).unwrap();
        let mut ledger = RecordLedger::default();
        ledger.register(&batch.items);
        let item = &batch.items[0].item_id;
        ledger.submit(rec(item, "r1", Response::Likert(4))).unwrap();
        assert!(matches!(
            ledger.submit(rec(item, "r1", Response::Likert(5))),
            Err(EvalError::DuplicateRecord { .. })
        ));
        assert!(matches!(
            ledger.submit(rec(item, "r2", Response::Likert(6))),
            Err(EvalError::InvalidResponse { .. })
        ));
        assert!(matches!(
            ledger.submit(rec(item, "r2", Response::Agreement(3))),
            Err(EvalError::InvalidResponse { .. })
        ));
        assert!(matches!(
            ledger.submit(rec(&ItemId::new("nope"), "r2", Response::Likert(3))),
            Err(EvalError::UnknownItem(_))
        ));
        assert_eq!(ledger.records().len(), 1);
    }

    #[test]
    fn radpeer_case_mean_and_summary() {
        let batch = build_blinded_items(&cases(1), Instrument::RadpeerAgreement, 0).unwrap();
        let mut records = Vec::new();
        for it in &batch.items {
            let prov = batch.key.entries[&it.item_id].sources[0];
            let scores = if prov == Provenance::AiAssisted {
                [4, 5, 5, 4, 4]
            } else {
                [5; 5]
            };
            for (k, s) in scores.into_iter().enumerate() {
                records.push(rec(&it.item_id, &format!("r{k}"), Response::Agreement(s)));
            }
        }
        let cs = per_case_scores(&records, &batch.key, Instrument::RadpeerAgreement, 5).unwrap();
        assert!((cs[&Provenance::AiAssisted][&CaseId::new("c000")] - 4.4).abs() < 1e-12);
        let s = radpeer_summary(&records, &batch.key, 5).unwrap();
        assert_eq!(
            s[&Provenance::StandardCare].summary.to_string(),
            "5.00±0.00"
        );
        assert_eq!(s[&Provenance::AiAssisted].distribution[&4], 3);
        assert!(matches!(
            radpeer_summary(&records[1..], &batch.key, 5),
            Err(EvalError::IncompleteCoverage { .. })
        ));
    }

    #[test]
    fn preference_resolves_positions() {
        let batch = build_blinded_items(&cases(1), Instrument::PairwisePreference, 3).unwrap();
        let item = &batch.items[0];
        let sources = &batch.key.entries[&item.item_id].sources;
        let assisted_pos = if sources[0] == Provenance::AiAssisted {
            Position::First
        } else {
            Position::Second
        };
        let other = if assisted_pos == Position::First {
            Position::Second
        } else {
            Position::First
        };
        let picks = [assisted_pos, assisted_pos, assisted_pos, other, other];
        let records: Vec<_> = picks
            .iter()
            .enumerate()
            .map(|(k, p)| rec(&item.item_id, &format!("r{k}"), Response::Choice(*p)))
            .collect();
        let out = preference_summary(&records, &batch.key, 3).unwrap();
        assert_eq!(out.per_case_winner, vec![Some(Provenance::AiAssisted)]);
    }

    #[test]
    fn source_guess_confusion() {
        let c: Vec<EvaluationCase> = (0..4)
            .map(|i| EvaluationCase {
                case_id: CaseId::new(format!("c{i}")),
                candidates: vec![
                    CandidateReport {
                        provenance: Provenance::AiGenerated,
                        text: format!("g{i}"),
                    },
                    CandidateReport {
                        provenance: Provenance::Published,
                        text: format!("p{i}"),
                    },
                ],
                reference: None,
            })
            .collect();
        let batch = build_blinded_items(&c, Instrument::SourceGuess, 2).unwrap();
        let records: Vec<_> = batch
            .items
            .iter()
            .map(|it| {
                let truth = batch.key.entries[&it.item_id].sources[0]
                    .guess_class()
                    .unwrap();
                rec(&it.item_id, "r1", Response::Guess(truth))
            })
            .collect();
        let m = confusion_matrix(&records, &batch.key).unwrap();
        assert_eq!(m.counts, [[4, 0], [0, 4]]);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn interrater_identical_and_reversed() {
        let batch = build_blinded_items(&cases(3), Instrument::LikertQuality, 0).unwrap();
        let items: Vec<&ItemId> = batch.items.iter().map(|i| &i.item_id).take(3).collect();
        let mut records = Vec::new();
        for (rater, scores) in [("a", [1, 2, 3]), ("b", [1, 2, 3]), ("c", [3, 2, 1])] {
            for (it, s) in items.iter().zip(scores) {
                records.push(rec(it, rater, Response::Likert(s)));
            }
        }
        let w = interrater_report(&records, &batch.key).unwrap();
        assert!((w[&Instrument::LikertQuality].w - 1.0 / 9.0).abs() < 1e-12);
        records.pop();
        assert!(matches!(
            interrater_report(&records, &batch.key),
            Err(EvalError::IncompleteMatrix { .. })
        ));
    }
}
