use cxrkit_core::evaluation::{EvalError, ItemId};
use cxrkit_core::{Arm, CaseId, ReportId};
use thiserror::Error;

use crate::ids::{BatchId, ReaderId, ReviewerId, SessionId, StudyId};
use crate::model::ModelError;
use crate::state::SessionState;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown study {0}")]
    UnknownStudy(StudyId),
    #[error("study {0} already exists")]
    DuplicateStudy(StudyId),
    #[error("unknown case {0}")]
    UnknownCase(CaseId),
    #[error("unknown reader {0}")]
    UnknownReader(ReaderId),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("unknown reviewer {0}")]
    UnknownReviewer(ReviewerId),
    #[error("unknown report {0}")]
    UnknownReport(ReportId),
    #[error("unknown evaluation batch {0}")]
    UnknownBatch(BatchId),
    #[error("unknown evaluation item {0}")]
    UnknownItem(ItemId),

    #[error("allocation {sequence_index} is still sealed")]
    Concealed { sequence_index: usize },
    #[error("block size must be even and positive, got {0}")]
    OddBlockSize(usize),
    #[error("allocation needs at least one envelope")]
    EmptyAllocation,
    #[error("allocation sequence already generated")]
    AllocationExists,
    #[error("no allocation sequence generated yet")]
    NoAllocation,
    #[error("allocation sequence exhausted after {0} envelopes")]
    AllocationExhausted(usize),
    #[error("reader {0} already assigned")]
    ReaderAlreadyAssigned(ReaderId),

    #[error("case {0} already registered")]
    DuplicateCase(CaseId),
    #[error("case {case_id} is not admitted (image quality gate)")]
    CaseNotAdmitted { case_id: CaseId },
    #[error("case {case_id} already has a {arm} session")]
    DuplicateSession { case_id: CaseId, arm: Arm },
    #[error("reader {reader_id} already read case {case_id}")]
    SameReader {
        case_id: CaseId,
        reader_id: ReaderId,
    },
    #[error("session {session_id} is {from:?}; cannot {action}")]
    InvalidTransition {
        session_id: SessionId,
        from: SessionState,
        action: &'static str,
    },
    #[error("AI drafts are not available in the standard-care arm")]
    DraftForbidden,
    #[error("session {0} already has an AI draft")]
    DraftExists(SessionId),
    #[error("model request failed: {0}")]
    Model(#[from] ModelError),
    #[error("report text must not be empty")]
    EmptyReport,
    #[error("case {case_id} is not ready for review: {reason}")]
    ReviewNotReady { case_id: CaseId, reason: String },
    #[error("case {0} already released")]
    AlreadyReleased(CaseId),
    #[error("report {report_id} is not a finalized junior report of case {case_id}")]
    InvalidReviewBase {
        case_id: CaseId,
        report_id: ReportId,
    },

    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error("study has no released cases to export")]
    NothingToExport,

    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("event log: {0}")]
    Log(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
