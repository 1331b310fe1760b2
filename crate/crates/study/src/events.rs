//! Study events and their on-disk log format.
//!
//! An event log is a JSON Lines file. The first line is a header
//! `{"format":"cxrkit-study-events","version":1,"study_id":...}`; every
//! following line is one [`EventEnvelope`] with a strictly increasing `seq`
//! starting at 1. Snapshots are a single JSON document
//! `{"format":"cxrkit-study-snapshot","version":1,"seq":N,"state":{...}}`
//! holding the state after event `N`.

use cxrkit_core::evaluation::{BlindedBatch, EvaluationRecord, Instrument};
use cxrkit_core::{CaseId, ReportId};
use serde::{Deserialize, Serialize};

use crate::ids::{BatchId, ReaderId, ReviewerId, SessionId, StudyId};
use crate::model::ModelDraft;
use crate::state::{CaseIntake, StudyConfig};

pub const LOG_FORMAT: &str = "cxrkit-study-events";
pub const SNAPSHOT_FORMAT: &str = "cxrkit-study-snapshot";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StudyEvent {
    StudyCreated {
        study_id: StudyId,
        config: StudyConfig,
    },
    /// The sequence itself is regenerated from these parameters on replay.
    AllocationGenerated {
        seed: u64,
        n: usize,
        block_size: usize,
    },
    ReaderAssigned {
        reader_id: ReaderId,
        sequence_index: usize,
    },
    CaseRegistered {
        case: CaseIntake,
    },
    SessionCreated {
        session_id: SessionId,
        case_id: CaseId,
        reader_id: ReaderId,
    },
    ReadingStarted {
        session_id: SessionId,
        at_us: u64,
    },
    DraftRecorded {
        session_id: SessionId,
        report_id: ReportId,
        draft: ModelDraft,
    },
    DraftFailed {
        session_id: SessionId,
        error: String,
    },
    SessionFinalized {
        session_id: SessionId,
        report_id: ReportId,
        text: String,
        at_us: u64,
    },
    ReportReleased {
        case_id: CaseId,
        report_id: ReportId,
        reviewer_id: ReviewerId,
        base_report_id: ReportId,
        text: String,
    },
    EvaluationBatchBuilt {
        batch_id: BatchId,
        instrument: Instrument,
        seed: u64,
        batch: BlindedBatch,
    },
    EvaluationRecorded {
        record: EvaluationRecord,
    },
}

impl StudyEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            StudyEvent::StudyCreated { .. } => "study_created",
            StudyEvent::AllocationGenerated { .. } => "allocation_generated",
            StudyEvent::ReaderAssigned { .. } => "reader_assigned",
            StudyEvent::CaseRegistered { .. } => "case_registered",
            StudyEvent::SessionCreated { .. } => "session_created",
            StudyEvent::ReadingStarted { .. } => "reading_started",
            StudyEvent::DraftRecorded { .. } => "draft_recorded",
            StudyEvent::DraftFailed { .. } => "draft_failed",
            StudyEvent::SessionFinalized { .. } => "session_finalized",
            StudyEvent::ReportReleased { .. } => "report_released",
            StudyEvent::EvaluationBatchBuilt { .. } => "evaluation_batch_built",
            StudyEvent::EvaluationRecorded { .. } => "evaluation_recorded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEnvelope {
    pub seq: u64,
    /// Wall-clock time of the append, for the audit trail only.
    pub wall_ms: u64,
    pub event: StudyEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub study_id: StudyId,
}

impl LogHeader {
    pub fn new(study_id: StudyId) -> Self {
        LogHeader {
            format: LOG_FORMAT.to_string(),
            version: LOG_VERSION,
            study_id,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_are_tagged() {
        let e = StudyEvent::ReaderAssigned {
            reader_id: "r1".into(),
            sequence_index: 0,
        };
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v["type"], e.kind());
        let back: StudyEvent = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);
    }
}
