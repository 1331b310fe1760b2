//! Study state as a fold over events.
//!
//! [`StudyState::validate`] decides whether an event is legal without
//! touching the state; [`StudyState::apply`] validates and then mutates.
//! Live commands and log replay share this path, so a replayed log yields
//! the same state as the run that wrote it.

use std::collections::BTreeMap;

use cxrkit_core::evaluation::{
    EvaluationItem, Instrument, RecordLedger, UnblindingKey, DEFAULT_AGREEMENT_MAX,
    DEFAULT_RATERS_PER_ITEM,
};
use cxrkit_core::{Arm, AuthorRole, CaseId, Report, ReportId};
use serde::{Deserialize, Serialize};

use crate::allocation::{generate_allocation, Allocation};
use crate::clock::us_to_secs;
use crate::error::StudyError;
use crate::events::{EventEnvelope, StudyEvent};
use crate::ids::{BatchId, ReaderId, ReviewerId, SessionId, StudyId};
use crate::model::{ModelDraft, DEFAULT_MODEL_TIMEOUT};

fn default_true() -> bool {
    true
}
fn default_timeout_ms() -> u64 {
    DEFAULT_MODEL_TIMEOUT.as_millis() as u64
}
fn default_raters() -> usize {
    DEFAULT_RATERS_PER_ITEM
}
fn default_agreement_max() -> u8 {
    DEFAULT_AGREEMENT_MAX
}
fn default_snapshot_every() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(default)]
    pub reviewers: Vec<ReviewerId>,
    /// Whether review packets name the arm behind each junior report.
    #[serde(default = "default_true")]
    pub reviewers_see_arm: bool,
    #[serde(default = "default_timeout_ms")]
    pub model_timeout_ms: u64,
    #[serde(default = "default_raters")]
    pub raters_per_item: usize,
    #[serde(default = "default_agreement_max")]
    pub agreement_max: u8,
    /// Write a snapshot after this many events (0 disables snapshots).
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            reviewers: Vec::new(),
            reviewers_see_arm: true,
            model_timeout_ms: default_timeout_ms(),
            raters_per_item: default_raters(),
            agreement_max: default_agreement_max(),
            snapshot_every: default_snapshot_every(),
        }
    }
}

/// Case data as registered at intake.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseIntake {
    pub case_id: CaseId,
    /// De-identified attributes only.
    #[serde(default)]
    pub patient_meta: BTreeMap<String, String>,
    pub image_refs: Vec<String>,
    #[serde(default)]
    pub history_note: String,
    /// Passed the technologist's image-quality check.
    #[serde(default = "default_true")]
    pub admitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub intake: CaseIntake,
    pub sessions: BTreeMap<Arm, SessionId>,
    pub released_report_id: Option<ReportId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    Reading,
    Finalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DraftSource {
    None,
    AiModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingSession {
    pub session_id: SessionId,
    pub case_id: CaseId,
    pub reader_id: ReaderId,
    pub arm: Arm,
    pub state: SessionState,
    pub started_at_us: Option<u64>,
    pub finalized_at_us: Option<u64>,
    pub draft_source: DraftSource,
    pub draft_failures: u32,
    pub report_versions: Vec<ReportId>,
    pub reading_time_s: Option<f64>,
}

impl ReadingSession {
    pub fn final_report(&self) -> Option<&ReportId> {
        match self.state {
            SessionState::Finalized => self.report_versions.last(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub reviewer_id: ReviewerId,
    pub signed_at_ms: u64,
}

/// Outbound notice that a case has an officially released report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Release {
    pub release_seq: u64,
    pub case_id: CaseId,
    pub report_id: ReportId,
    pub reviewer_id: ReviewerId,
    pub signed_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub instrument: Instrument,
    pub seed: u64,
    pub items: Vec<EvaluationItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyState {
    pub study_id: StudyId,
    pub config: StudyConfig,
    pub allocation_params: Option<(u64, usize, usize)>,
    pub allocations: Vec<Allocation>,
    pub readers: BTreeMap<ReaderId, usize>,
    pub cases: BTreeMap<CaseId, CaseRecord>,
    pub sessions: BTreeMap<SessionId, ReadingSession>,
    pub reports: BTreeMap<ReportId, Report>,
    pub drafts: BTreeMap<SessionId, ModelDraft>,
    pub signatures: BTreeMap<ReportId, Signature>,
    pub releases: Vec<Release>,
    pub batches: BTreeMap<BatchId, BatchRecord>,
    pub key: UnblindingKey,
    pub ledger: RecordLedger,
    pub last_seq: u64,
}

fn transition(
    s: &ReadingSession,
    want: SessionState,
    action: &'static str,
) -> Result<(), StudyError> {
    if s.state == want {
        Ok(())
    } else {
        Err(StudyError::InvalidTransition {
            session_id: s.session_id.clone(),
            from: s.state,
            action,
        })
    }
}

impl StudyState {
    pub fn new(study_id: StudyId, config: StudyConfig) -> Self {
        let ledger = RecordLedger::new(config.agreement_max);
        StudyState {
            study_id,
            config,
            allocation_params: None,
            allocations: Vec::new(),
            readers: BTreeMap::new(),
            cases: BTreeMap::new(),
            sessions: BTreeMap::new(),
            reports: BTreeMap::new(),
            drafts: BTreeMap::new(),
            signatures: BTreeMap::new(),
            releases: Vec::new(),
            batches: BTreeMap::new(),
            key: UnblindingKey::default(),
            ledger,
            last_seq: 0,
        }
    }

    /// Rebuilds state from a complete log.
    pub fn replay<'a>(
        events: impl IntoIterator<Item = &'a EventEnvelope>,
    ) -> Result<Self, StudyError> {
        let mut it = events.into_iter();
        let first = it
            .next()
            .ok_or_else(|| StudyError::Log("empty event log".into()))?;
        let mut state = match &first.event {
            StudyEvent::StudyCreated { study_id, config } => {
                StudyState::new(study_id.clone(), config.clone())
            }
            other => {
                return Err(StudyError::Log(format!(
                    "log must start with study_created, found {}",
                    other.kind()
                )))
            }
        };
        state.last_seq = first.seq;
        for env in it {
            state.apply(env)?;
        }
        Ok(state)
    }

    pub fn next_session_id(&self) -> SessionId {
        SessionId::new(format!("ses-{:06}", self.sessions.len() + 1))
    }

    pub fn next_report_id(&self) -> ReportId {
        ReportId::new(format!("rpt-{:06}", self.reports.len() + 1))
    }

    pub fn next_batch_id(&self) -> BatchId {
        BatchId::new(format!("batch-{:04}", self.batches.len() + 1))
    }

    pub fn case(&self, id: &CaseId) -> Result<&CaseRecord, StudyError> {
        self.cases
            .get(id)
            .ok_or_else(|| StudyError::UnknownCase(id.clone()))
    }

    pub fn session(&self, id: &SessionId) -> Result<&ReadingSession, StudyError> {
        self.sessions
            .get(id)
            .ok_or_else(|| StudyError::UnknownSession(id.clone()))
    }

    pub fn report(&self, id: &ReportId) -> Result<&Report, StudyError> {
        self.reports
            .get(id)
            .ok_or_else(|| StudyError::UnknownReport(id.clone()))
    }

    pub fn reader_arm(&self, reader: &ReaderId) -> Result<Arm, StudyError> {
        let idx = self
            .readers
            .get(reader)
            .ok_or_else(|| StudyError::UnknownReader(reader.clone()))?;
        self.allocations[*idx].arm()
    }

    /// Version chain of a report, oldest first.
    pub fn audit_chain(&self, id: &ReportId) -> Result<Vec<&Report>, StudyError> {
        let mut chain = vec![self.report(id)?];
        while let Some(parent) = &chain.last().unwrap().parent_report_id {
            if chain.len() > self.reports.len() {
                return Err(StudyError::Log(format!("cycle in version chain of {id}")));
            }
            chain.push(self.report(parent)?);
        }
        chain.reverse();
        Ok(chain)
    }

    fn fresh_report(&self, id: &ReportId) -> Result<(), StudyError> {
        if self.reports.contains_key(id) {
            return Err(StudyError::Log(format!("report id {id} reused")));
        }
        Ok(())
    }

    pub fn validate(&self, event: &StudyEvent) -> Result<(), StudyError> {
        match event {
            StudyEvent::StudyCreated { .. } => {
                Err(StudyError::Log("study_created may only open a log".into()))
            }
            StudyEvent::AllocationGenerated {
                seed,
                n,
                block_size,
            } => {
                if self.allocation_params.is_some() {
                    return Err(StudyError::AllocationExists);
                }
                generate_allocation(*seed, *n, *block_size).map(|_| ())
            }
            StudyEvent::ReaderAssigned {
                reader_id,
                sequence_index,
            } => {
                if self.allocations.is_empty() {
                    return Err(StudyError::NoAllocation);
                }
                if reader_id.as_str().is_empty() {
                    return Err(StudyError::InvalidRequest("empty reader_id".into()));
                }
                if self.readers.contains_key(reader_id) {
                    return Err(StudyError::ReaderAlreadyAssigned(reader_id.clone()));
                }
                let next = self.readers.len();
                if next >= self.allocations.len() {
                    return Err(StudyError::AllocationExhausted(self.allocations.len()));
                }
                if *sequence_index != next {
                    return Err(StudyError::Log(format!(
                        "envelope {sequence_index} opened out of order (next is {next})"
                    )));
                }
                Ok(())
            }
            StudyEvent::CaseRegistered { case } => {
                if case.case_id.as_str().is_empty() {
                    return Err(StudyError::InvalidRequest("empty case_id".into()));
                }
                if case.image_refs.is_empty() {
                    return Err(StudyError::InvalidRequest(
                        "image_refs must not be empty".into(),
                    ));
                }
                if self.cases.contains_key(&case.case_id) {
                    return Err(StudyError::DuplicateCase(case.case_id.clone()));
                }
                Ok(())
            }
            StudyEvent::SessionCreated {
                session_id,
                case_id,
                reader_id,
            } => {
                let case = self.case(case_id)?;
                let arm = self.reader_arm(reader_id)?;
                if !case.intake.admitted {
                    return Err(StudyError::CaseNotAdmitted {
                        case_id: case_id.clone(),
                    });
                }
                if case.released_report_id.is_some() {
                    return Err(StudyError::AlreadyReleased(case_id.clone()));
                }
                if case.sessions.contains_key(&arm) {
                    return Err(StudyError::DuplicateSession {
                        case_id: case_id.clone(),
                        arm,
                    });
                }
                for sid in case.sessions.values() {
                    if &self.sessions[sid].reader_id == reader_id {
                        return Err(StudyError::SameReader {
                            case_id: case_id.clone(),
                            reader_id: reader_id.clone(),
                        });
                    }
                }
                if self.sessions.contains_key(session_id) {
                    return Err(StudyError::Log(format!("session id {session_id} reused")));
                }
                Ok(())
            }
            StudyEvent::ReadingStarted { session_id, .. } => transition(
                self.session(session_id)?,
                SessionState::Created,
                "start reading",
            ),
            StudyEvent::DraftRecorded {
                session_id,
                report_id,
                ..
            } => {
                let s = self.session(session_id)?;
                if s.arm != Arm::AiAssisted {
                    return Err(StudyError::DraftForbidden);
                }
                transition(s, SessionState::Reading, "record a draft")?;
                if self.drafts.contains_key(session_id) {
                    return Err(StudyError::DraftExists(session_id.clone()));
                }
                self.fresh_report(report_id)
            }
            StudyEvent::DraftFailed { session_id, .. } => {
                let s = self.session(session_id)?;
                if s.arm != Arm::AiAssisted {
                    return Err(StudyError::DraftForbidden);
                }
                transition(s, SessionState::Reading, "request a draft")
            }
            StudyEvent::SessionFinalized {
                session_id,
                report_id,
                text,
                at_us,
            } => {
                let s = self.session(session_id)?;
                transition(s, SessionState::Reading, "finalize")?;
                if text.trim().is_empty() {
                    return Err(StudyError::EmptyReport);
                }
                let started = s.started_at_us.unwrap_or(0);
                if *at_us <= started {
                    return Err(StudyError::InvalidRequest(format!(
                        "finalize time {at_us}us is not after start {started}us"
                    )));
                }
                self.fresh_report(report_id)
            }
            StudyEvent::ReportReleased {
                case_id,
                report_id,
                reviewer_id,
                base_report_id,
                text,
            } => {
                if !self.config.reviewers.contains(reviewer_id) {
                    return Err(StudyError::UnknownReviewer(reviewer_id.clone()));
                }
                let case = self.case(case_id)?;
                if case.released_report_id.is_some() {
                    return Err(StudyError::AlreadyReleased(case_id.clone()));
                }
                let not_ready = |reason: String| StudyError::ReviewNotReady {
                    case_id: case_id.clone(),
                    reason,
                };
                let mut finals = Vec::new();
                for arm in Arm::BOTH {
                    let sid = case
                        .sessions
                        .get(&arm)
                        .ok_or_else(|| not_ready(format!("no {arm} session")))?;
                    let s = &self.sessions[sid];
                    finals.push(
                        s.final_report().ok_or_else(|| {
                            not_ready(format!("{arm} session {sid} not finalized"))
                        })?,
                    );
                }
                if !finals.contains(&base_report_id) {
                    return Err(StudyError::InvalidReviewBase {
                        case_id: case_id.clone(),
                        report_id: base_report_id.clone(),
                    });
                }
                if text.trim().is_empty() {
                    return Err(StudyError::EmptyReport);
                }
                self.fresh_report(report_id)
            }
            StudyEvent::EvaluationBatchBuilt {
                batch_id, batch, ..
            } => {
                if self.batches.contains_key(batch_id) {
                    return Err(StudyError::Log(format!("batch id {batch_id} reused")));
                }
                for item in &batch.items {
                    if self.key.entries.contains_key(&item.item_id) {
                        return Err(StudyError::Log(format!("item id {} reused", item.item_id)));
                    }
                }
                Ok(())
            }
            StudyEvent::EvaluationRecorded { record } => Ok(self.ledger.check(record)?),
        }
    }

    pub fn apply(&mut self, envelope: &EventEnvelope) -> Result<(), StudyError> {
        if envelope.seq != self.last_seq + 1 {
            return Err(StudyError::Log(format!(
                "expected seq {}, found {}",
                self.last_seq + 1,
                envelope.seq
            )));
        }
        self.validate(&envelope.event)?;
        self.mutate(envelope);
        self.last_seq = envelope.seq;
        Ok(())
    }

    fn mutate(&mut self, envelope: &EventEnvelope) {
        match envelope.event.clone() {
            StudyEvent::StudyCreated { .. } => unreachable!("rejected by validate"),
            StudyEvent::AllocationGenerated {
                seed,
                n,
                block_size,
            } => {
                self.allocation_params = Some((seed, n, block_size));
                self.allocations = generate_allocation(seed, n, block_size).expect("validated");
            }
            StudyEvent::ReaderAssigned {
                reader_id,
                sequence_index,
            } => {
                self.allocations[sequence_index].open(reader_id.clone(), envelope.wall_ms);
                self.readers.insert(reader_id, sequence_index);
            }
            StudyEvent::CaseRegistered { case } => {
                self.cases.insert(
                    case.case_id.clone(),
                    CaseRecord {
                        intake: case,
                        sessions: BTreeMap::new(),
                        released_report_id: None,
                    },
                );
            }
            StudyEvent::SessionCreated {
                session_id,
                case_id,
                reader_id,
            } => {
                let arm = self.reader_arm(&reader_id).expect("validated");
                self.cases
                    .get_mut(&case_id)
                    .unwrap()
                    .sessions
                    .insert(arm, session_id.clone());
                self.sessions.insert(
                    session_id.clone(),
                    ReadingSession {
                        session_id,
                        case_id,
                        reader_id,
                        arm,
                        state: SessionState::Created,
                        started_at_us: None,
                        finalized_at_us: None,
                        draft_source: DraftSource::None,
                        draft_failures: 0,
                        report_versions: Vec::new(),
                        reading_time_s: None,
                    },
                );
            }
            StudyEvent::ReadingStarted { session_id, at_us } => {
                let s = self.sessions.get_mut(&session_id).unwrap();
                s.state = SessionState::Reading;
                s.started_at_us = Some(at_us);
            }
            StudyEvent::DraftRecorded {
                session_id,
                report_id,
                draft,
            } => {
                let s = self.sessions.get_mut(&session_id).unwrap();
                let intake = &self.cases[&s.case_id].intake;
                let report = Report {
                    report_id: report_id.clone(),
                    case_id: s.case_id.clone(),
                    text: draft.report_text.clone(),
                    author_role: AuthorRole::AiModel,
                    arm: Some(s.arm),
                    parent_report_id: s.report_versions.last().cloned(),
                    image_refs: intake.image_refs.clone(),
                    history_note: intake.history_note.clone(),
                    labels: None,
                };
                s.draft_source = DraftSource::AiModel;
                s.report_versions.push(report_id.clone());
                self.reports.insert(report_id, report);
                self.drafts.insert(session_id, draft);
            }
            StudyEvent::DraftFailed { session_id, .. } => {
                self.sessions.get_mut(&session_id).unwrap().draft_failures += 1;
            }
            StudyEvent::SessionFinalized {
                session_id,
                report_id,
                text,
                at_us,
            } => {
                let s = self.sessions.get_mut(&session_id).unwrap();
                let intake = &self.cases[&s.case_id].intake;
                let report = Report {
                    report_id: report_id.clone(),
                    case_id: s.case_id.clone(),
                    text,
                    author_role: AuthorRole::Junior,
                    arm: Some(s.arm),
                    parent_report_id: s.report_versions.last().cloned(),
                    image_refs: intake.image_refs.clone(),
                    history_note: intake.history_note.clone(),
                    labels: None,
                };
                let started = s.started_at_us.expect("reading sessions have a start");
                s.state = SessionState::Finalized;
                s.finalized_at_us = Some(at_us);
                s.reading_time_s = Some(us_to_secs(at_us - started));
                s.report_versions.push(report_id.clone());
                self.reports.insert(report_id, report);
            }
            StudyEvent::ReportReleased {
                case_id,
                report_id,
                reviewer_id,
                base_report_id,
                text,
            } => {
                let base = &self.reports[&base_report_id];
                let report = Report {
                    report_id: report_id.clone(),
                    case_id: case_id.clone(),
                    text,
                    author_role: AuthorRole::SeniorReleased,
                    arm: base.arm,
                    parent_report_id: Some(base_report_id),
                    image_refs: base.image_refs.clone(),
                    history_note: base.history_note.clone(),
                    labels: None,
                };
                self.reports.insert(report_id.clone(), report);
                self.signatures.insert(
                    report_id.clone(),
                    Signature {
                        reviewer_id: reviewer_id.clone(),
                        signed_at_ms: envelope.wall_ms,
                    },
                );
                self.releases.push(Release {
                    release_seq: self.releases.len() as u64 + 1,
                    case_id: case_id.clone(),
                    report_id: report_id.clone(),
                    reviewer_id,
                    signed_at_ms: envelope.wall_ms,
                });
                self.cases.get_mut(&case_id).unwrap().released_report_id = Some(report_id);
            }
            StudyEvent::EvaluationBatchBuilt {
                batch_id,
                instrument,
                seed,
                batch,
            } => {
                self.ledger.register(&batch.items);
                self.key.merge(batch.key);
                self.batches.insert(
                    batch_id,
                    BatchRecord {
                        instrument,
                        seed,
                        items: batch.items,
                    },
                );
            }
            StudyEvent::EvaluationRecorded { record } => {
                self.ledger.submit(record).expect("validated");
            }
        }
    }
}
