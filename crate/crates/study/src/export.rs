//! Per-case analysis dataset joined by case id.

use std::collections::BTreeMap;

use cxrkit_core::classification::PositivePolicy;
use cxrkit_core::evaluation::{
    interrater_report, preference_votes, EvaluationRecord, Instrument, Provenance, Response,
};
use cxrkit_core::stats::KendallW;
use cxrkit_core::{Arm, CaseId, Finding, Labeler, ReportId};
use serde::{Deserialize, Serialize};

use crate::error::StudyError;
use crate::ids::{ReaderId, SessionId, StudyId};
use crate::state::{SessionState, StudyState};

pub const EXPORT_FORMAT: &str = "cxrkit-study-export";
pub const EXPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReading {
    pub session_id: SessionId,
    pub reader_id: ReaderId,
    pub report_id: ReportId,
    pub reading_time_s: f64,
    pub used_ai_draft: bool,
    pub pneumonia_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub case_id: CaseId,
    pub released_report_id: ReportId,
    pub ai_assisted: ArmReading,
    pub standard_care: ArmReading,
    /// Mean Likert quality per rated source, over the raters who scored it.
    pub quality: BTreeMap<Provenance, f64>,
    /// Mean agreement with the released report per source.
    pub agreement: BTreeMap<Provenance, f64>,
    pub preference_votes: BTreeMap<Provenance, usize>,
    /// Majority source; absent on ties or without votes.
    pub preference_winner: Option<Provenance>,
    pub draft_pneumonia_positive: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenedAllocations {
    pub total: usize,
    pub opened: usize,
    pub ai_assisted: usize,
    pub standard_care: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyExport {
    pub format: String,
    pub version: u32,
    pub study_id: StudyId,
    pub events: u64,
    pub lexicon_version: String,
    pub positive_policy: PositivePolicy,
    pub allocation: OpenedAllocations,
    pub rows: Vec<ExportRow>,
    /// Kendall's W for instruments whose rater-by-item matrix is complete.
    pub interrater: BTreeMap<Instrument, KendallW>,
}

fn mean_by_case(
    records: &[EvaluationRecord],
    state: &StudyState,
    instrument: Instrument,
) -> BTreeMap<(CaseId, Provenance), f64> {
    let mut acc: BTreeMap<(CaseId, Provenance), (f64, usize)> = BTreeMap::new();
    for r in records {
        let Ok(entry) = state.key.get(&r.item_id) else {
            continue;
        };
        if entry.instrument != instrument {
            continue;
        }
        let value = match r.response {
            Response::Likert(v) | Response::Agreement(v) => f64::from(v),
            _ => continue,
        };
        let slot = acc
            .entry((entry.case_id.clone(), entry.sources[0]))
            .or_default();
        slot.0 += value;
        slot.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}

fn per_case(
    map: &BTreeMap<(CaseId, Provenance), f64>,
    case_id: &CaseId,
) -> BTreeMap<Provenance, f64> {
    map.range((case_id.clone(), Provenance::AiAssisted)..)
        .take_while(|((c, _), _)| c == case_id)
        .map(|((_, p), v)| (*p, *v))
        .collect()
}

/// Builds the export. Only released cases produce rows; a study without
/// any released case is an error.
pub fn export_study(state: &StudyState, labeler: &Labeler) -> Result<StudyExport, StudyError> {
    let policy = PositivePolicy::UNCERTAIN_POSITIVE;
    let pneumonia = |text: &str| policy.is_positive(labeler.label(text).get(Finding::Pneumonia));
    let records = state.ledger.records();
    let quality = mean_by_case(records, state, Instrument::LikertQuality);
    let agreement = mean_by_case(records, state, Instrument::RadpeerAgreement);
    let votes = preference_votes(records, &state.key)?;

    let mut rows = Vec::new();
    for (case_id, case) in &state.cases {
        let Some(released) = &case.released_report_id else {
            continue;
        };
        let reading = |arm: Arm| {
            let s = &state.sessions[&case.sessions[&arm]];
            debug_assert_eq!(s.state, SessionState::Finalized);
            let report_id = s
                .final_report()
                .expect("released implies finalized")
                .clone();
            ArmReading {
                session_id: s.session_id.clone(),
                reader_id: s.reader_id.clone(),
                pneumonia_positive: pneumonia(&state.reports[&report_id].text),
                report_id,
                reading_time_s: s.reading_time_s.expect("finalized"),
                used_ai_draft: state.drafts.contains_key(&s.session_id),
            }
        };
        let ai_assisted = reading(Arm::AiAssisted);
        let mut preference_votes = BTreeMap::new();
        for v in votes.get(case_id).into_iter().flatten().flatten() {
            *preference_votes.entry(*v).or_insert(0usize) += 1;
        }
        let ai = preference_votes
            .get(&Provenance::AiAssisted)
            .copied()
            .unwrap_or(0);
        let sc = preference_votes
            .get(&Provenance::StandardCare)
            .copied()
            .unwrap_or(0);
        let preference_winner = match ai.cmp(&sc) {
            std::cmp::Ordering::Greater => Some(Provenance::AiAssisted),
            std::cmp::Ordering::Less => Some(Provenance::StandardCare),
            std::cmp::Ordering::Equal => None,
        };
        rows.push(ExportRow {
            case_id: case_id.clone(),
            released_report_id: released.clone(),
            draft_pneumonia_positive: state
                .drafts
                .get(&ai_assisted.session_id)
                .map(|d| pneumonia(&d.report_text)),
            ai_assisted,
            standard_care: reading(Arm::StandardCare),
            quality: per_case(&quality, case_id),
            agreement: per_case(&agreement, case_id),
            preference_votes,
            preference_winner,
        });
    }
    if rows.is_empty() {
        return Err(StudyError::NothingToExport);
    }

    let opened: Vec<Arm> = state
        .allocations
        .iter()
        .filter_map(|a| a.arm().ok())
        .collect();
    Ok(StudyExport {
        format: EXPORT_FORMAT.to_string(),
        version: EXPORT_VERSION,
        study_id: state.study_id.clone(),
        events: state.last_seq,
        lexicon_version: labeler.lexicon_version().to_string(),
        positive_policy: policy,
        allocation: OpenedAllocations {
            total: state.allocations.len(),
            opened: opened.len(),
            ai_assisted: opened.iter().filter(|a| **a == Arm::AiAssisted).count(),
            standard_care: opened.iter().filter(|a| **a == Arm::StandardCare).count(),
        },
        rows,
        interrater: interrater_report(records, &state.key).unwrap_or_default(),
    })
}
