//! One study: state, its event log and the commands that extend both.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use cxrkit_core::evaluation::{
    build_blinded_items, CandidateReport, EvaluationCase, EvaluationItem, EvaluationRecord,
    Instrument, ItemId, Provenance, RaterId, Response,
};
use cxrkit_core::{Arm, CaseId, Report, ReportId};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::allocation::AllocationView;
use crate::clock::{us_to_secs, Clock};
use crate::error::StudyError;
use crate::events::{EventEnvelope, StudyEvent};
use crate::ids::{BatchId, ReaderId, ReviewerId, SessionId, StudyId};
use crate::model::{ModelDraft, ModelError, ModelRequest};
use crate::state::{CaseIntake, ReadingSession, Release, SessionState, StudyConfig, StudyState};
use crate::store::EventLog;

const RELEASE_CHANNEL_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderAssignment {
    pub reader_id: ReaderId,
    pub sequence_index: usize,
    pub arm: Arm,
}

/// What a reader's workstation needs for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub session: ReadingSession,
    pub image_refs: Vec<String>,
    pub history_note: String,
    /// Server-side seconds since reading began, frozen at finalize.
    pub elapsed_s: Option<f64>,
    pub draft_available: bool,
    pub current_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCandidate {
    pub report_id: ReportId,
    pub reader_id: ReaderId,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewPacket {
    pub case_id: CaseId,
    pub image_refs: Vec<String>,
    pub history_note: String,
    pub ready: bool,
    pub candidates: Vec<ReviewCandidate>,
    pub released_report_id: Option<ReportId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyOverview {
    pub study_id: StudyId,
    pub allocations: usize,
    pub sealed: usize,
    pub opened: usize,
    pub readers_per_arm: Vec<(Arm, usize)>,
    pub cases: usize,
    pub sessions_per_arm: Vec<(Arm, usize)>,
    pub finalized_sessions: usize,
    pub released_cases: usize,
    pub evaluation_items: usize,
    pub evaluation_records: usize,
    pub events: u64,
}

#[derive(Debug)]
pub struct Study {
    state: StudyState,
    log: EventLog,
    clock: Arc<dyn Clock>,
    releases: broadcast::Sender<Release>,
}

impl Study {
    pub fn create(
        study_id: StudyId,
        config: StudyConfig,
        clock: Arc<dyn Clock>,
        mut log: EventLog,
    ) -> Result<Self, StudyError> {
        if study_id.as_str().is_empty()
            || !study_id
                .as_str()
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(StudyError::InvalidRequest(format!(
                "study id {study_id:?} must be non-empty ASCII letters, digits, '-' or '_'"
            )));
        }
        let env = EventEnvelope {
            seq: 1,
            wall_ms: clock.wall_ms(),
            event: StudyEvent::StudyCreated {
                study_id: study_id.clone(),
                config: config.clone(),
            },
        };
        log.append(&env)?;
        let mut state = StudyState::new(study_id, config);
        state.last_seq = 1;
        Ok(Study {
            state,
            log,
            clock,
            releases: broadcast::channel(RELEASE_CHANNEL_CAPACITY).0,
        })
    }

    /// Loads a persisted study, starting from its snapshot when present.
    pub fn open(dir: &Path, study_id: &StudyId, clock: Arc<dyn Clock>) -> Result<Self, StudyError> {
        let loaded = crate::store::EventLog::load(dir, study_id)?;
        let events = loaded.log.events();
        let state = match loaded.snapshot {
            Some(mut state) => {
                let from = state.last_seq as usize;
                for env in &events[from..] {
                    state.apply(env)?;
                }
                state
            }
            None => StudyState::replay(events)?,
        };
        Ok(Study {
            state,
            log: loaded.log,
            clock,
            releases: broadcast::channel(RELEASE_CHANNEL_CAPACITY).0,
        })
    }

    pub fn state(&self) -> &StudyState {
        &self.state
    }

    pub fn events(&self) -> &[EventEnvelope] {
        self.log.events()
    }

    pub fn id(&self) -> &StudyId {
        &self.state.study_id
    }

    /// Rebuilds state from the log alone.
    pub fn replayed_state(&self) -> Result<StudyState, StudyError> {
        StudyState::replay(self.log.events())
    }

    #[cfg(test)]
    pub(crate) fn state_mut(&mut self) -> &mut StudyState {
        &mut self.state
    }

    pub fn subscribe_releases(&self) -> broadcast::Receiver<Release> {
        self.releases.subscribe()
    }

    fn commit(&mut self, event: StudyEvent) -> Result<&EventEnvelope, StudyError> {
        self.state.validate(&event)?;
        let env = EventEnvelope {
            seq: self.state.last_seq + 1,
            wall_ms: self.clock.wall_ms(),
            event,
        };
        self.log.append(&env)?;
        self.state.apply(&env)?;
        if let StudyEvent::ReportReleased { .. } = env.event {
            // No subscribers is fine; the release list is the durable record.
            let _ = self
                .releases
                .send(self.state.releases.last().unwrap().clone());
        }
        let every = self.state.config.snapshot_every;
        if every > 0 && env.seq.is_multiple_of(every) {
            self.log.write_snapshot(&self.state)?;
        }
        Ok(self.log.events().last().unwrap())
    }

    pub fn generate_allocation(
        &mut self,
        seed: u64,
        n: usize,
        block_size: usize,
    ) -> Result<Vec<AllocationView>, StudyError> {
        self.commit(StudyEvent::AllocationGenerated {
            seed,
            n,
            block_size,
        })?;
        Ok(self.allocation_views())
    }

    pub fn allocation_views(&self) -> Vec<AllocationView> {
        self.state.allocations.iter().map(|a| a.view()).collect()
    }

    /// Opens the next sealed envelope for `reader_id`.
    pub fn assign_reader(&mut self, reader_id: ReaderId) -> Result<ReaderAssignment, StudyError> {
        let sequence_index = self.state.readers.len();
        self.commit(StudyEvent::ReaderAssigned {
            reader_id: reader_id.clone(),
            sequence_index,
        })?;
        Ok(ReaderAssignment {
            arm: self.state.reader_arm(&reader_id)?,
            reader_id,
            sequence_index,
        })
    }

    pub fn register_case(&mut self, case: CaseIntake) -> Result<CaseId, StudyError> {
        let id = case.case_id.clone();
        self.commit(StudyEvent::CaseRegistered { case })?;
        Ok(id)
    }

    pub fn create_session(
        &mut self,
        case_id: &CaseId,
        reader_id: &ReaderId,
    ) -> Result<SessionId, StudyError> {
        let session_id = self.state.next_session_id();
        self.commit(StudyEvent::SessionCreated {
            session_id: session_id.clone(),
            case_id: case_id.clone(),
            reader_id: reader_id.clone(),
        })?;
        Ok(session_id)
    }

    pub fn begin_reading(&mut self, session_id: &SessionId) -> Result<SessionView, StudyError> {
        let at_us = self.clock.monotonic_us();
        self.commit(StudyEvent::ReadingStarted {
            session_id: session_id.clone(),
            at_us,
        })?;
        self.session_view(session_id)
    }

    /// Creates a session and starts its timer in one step.
    pub fn start_session(
        &mut self,
        case_id: &CaseId,
        reader_id: &ReaderId,
    ) -> Result<SessionView, StudyError> {
        let sid = self.create_session(case_id, reader_id)?;
        self.begin_reading(&sid)
    }

    /// Checks the draft preconditions and builds the model request.
    pub fn draft_request(
        &self,
        session_id: &SessionId,
    ) -> Result<(ModelRequest, Duration), StudyError> {
        let s = self.state.session(session_id)?;
        if s.arm != Arm::AiAssisted {
            return Err(StudyError::DraftForbidden);
        }
        if s.state != SessionState::Reading {
            return Err(StudyError::InvalidTransition {
                session_id: session_id.clone(),
                from: s.state,
                action: "request a draft",
            });
        }
        if self.state.drafts.contains_key(session_id) {
            return Err(StudyError::DraftExists(session_id.clone()));
        }
        let intake = &self.state.case(&s.case_id)?.intake;
        Ok((
            ModelRequest {
                case_id: s.case_id.clone(),
                image_refs: intake.image_refs.clone(),
                history_note: intake.history_note.clone(),
            },
            Duration::from_millis(self.state.config.model_timeout_ms),
        ))
    }

    pub fn record_draft(
        &mut self,
        session_id: &SessionId,
        draft: ModelDraft,
    ) -> Result<ReportId, StudyError> {
        let report_id = self.state.next_report_id();
        self.commit(StudyEvent::DraftRecorded {
            session_id: session_id.clone(),
            report_id: report_id.clone(),
            draft,
        })?;
        Ok(report_id)
    }

    pub fn record_draft_failure(
        &mut self,
        session_id: &SessionId,
        error: &ModelError,
    ) -> Result<(), StudyError> {
        self.commit(StudyEvent::DraftFailed {
            session_id: session_id.clone(),
            error: error.to_string(),
        })?;
        Ok(())
    }

    pub fn finalize_session(
        &mut self,
        session_id: &SessionId,
        text: &str,
    ) -> Result<SessionView, StudyError> {
        let report_id = self.state.next_report_id();
        let at_us = self.clock.monotonic_us();
        self.commit(StudyEvent::SessionFinalized {
            session_id: session_id.clone(),
            report_id,
            text: text.to_string(),
            at_us,
        })?;
        self.session_view(session_id)
    }

    pub fn session_view(&self, session_id: &SessionId) -> Result<SessionView, StudyError> {
        let s = self.state.session(session_id)?;
        let intake = &self.state.case(&s.case_id)?.intake;
        let elapsed_s = match (s.state, s.started_at_us) {
            (SessionState::Finalized, _) => s.reading_time_s,
            (SessionState::Reading, Some(start)) => {
                Some(us_to_secs(self.clock.monotonic_us().saturating_sub(start)))
            }
            _ => None,
        };
        Ok(SessionView {
            session: s.clone(),
            image_refs: intake.image_refs.clone(),
            history_note: intake.history_note.clone(),
            elapsed_s,
            draft_available: s.arm == Arm::AiAssisted,
            current_text: s
                .report_versions
                .last()
                .map(|id| self.state.reports[id].text.clone()),
        })
    }

    pub fn review_packet(&self, case_id: &CaseId) -> Result<ReviewPacket, StudyError> {
        let case = self.state.case(case_id)?;
        let mut candidates = Vec::new();
        for sid in case.sessions.values() {
            let s = &self.state.sessions[sid];
            if let Some(rid) = s.final_report() {
                candidates.push(ReviewCandidate {
                    report_id: rid.clone(),
                    reader_id: s.reader_id.clone(),
                    text: self.state.reports[rid].text.clone(),
                    arm: self.state.config.reviewers_see_arm.then_some(s.arm),
                });
            }
        }
        Ok(ReviewPacket {
            case_id: case_id.clone(),
            image_refs: case.intake.image_refs.clone(),
            history_note: case.intake.history_note.clone(),
            ready: candidates.len() == 2 && case.released_report_id.is_none(),
            candidates,
            released_report_id: case.released_report_id.clone(),
        })
    }

    /// Signs and releases the case's report, built on `base_report_id`.
    /// Without `edits` the released text equals the base text.
    pub fn senior_review(
        &mut self,
        case_id: &CaseId,
        reviewer_id: &ReviewerId,
        base_report_id: &ReportId,
        edits: Option<String>,
    ) -> Result<Report, StudyError> {
        let text = match edits {
            Some(t) => t,
            None => self
                .state
                .reports
                .get(base_report_id)
                .map(|r| r.text.clone())
                .unwrap_or_default(),
        };
        let report_id = self.state.next_report_id();
        self.commit(StudyEvent::ReportReleased {
            case_id: case_id.clone(),
            report_id: report_id.clone(),
            reviewer_id: reviewer_id.clone(),
            base_report_id: base_report_id.clone(),
            text,
        })?;
        Ok(self.state.reports[&report_id].clone())
    }

    pub fn releases_after(&self, after: u64) -> Vec<Release> {
        self.state
            .releases
            .iter()
            .filter(|r| r.release_seq > after)
            .cloned()
            .collect()
    }

    fn evaluation_cases(
        &self,
        instrument: Instrument,
        include_drafts: bool,
    ) -> Vec<EvaluationCase> {
        let mut out = Vec::new();
        for (case_id, case) in &self.state.cases {
            let Some(released) = &case.released_report_id else {
                continue;
            };
            let session = |arm| &self.state.sessions[&case.sessions[&arm]];
            let final_text = |arm: Arm| {
                let rid = session(arm)
                    .final_report()
                    .expect("released cases are finalized");
                CandidateReport {
                    provenance: Provenance::from(arm),
                    text: self.state.reports[rid].text.clone(),
                }
            };
            let draft = self
                .state
                .drafts
                .get(&case.sessions[&Arm::AiAssisted])
                .map(|d| CandidateReport {
                    provenance: Provenance::AiGenerated,
                    text: d.report_text.clone(),
                });
            let candidates = match instrument {
                Instrument::SourceGuess => match draft {
                    Some(d) => vec![
                        d,
                        CandidateReport {
                            provenance: Provenance::Published,
                            text: self.state.reports[released].text.clone(),
                        },
                    ],
                    None => continue,
                },
                Instrument::LikertQuality if include_drafts => {
                    let mut c = vec![final_text(Arm::AiAssisted), final_text(Arm::StandardCare)];
                    c.extend(draft);
                    c
                }
                _ => vec![final_text(Arm::AiAssisted), final_text(Arm::StandardCare)],
            };
            out.push(EvaluationCase {
                case_id: case_id.clone(),
                candidates,
                reference: Some(self.state.reports[released].text.clone()),
            });
        }
        out
    }

    /// Blinded items over every released case. Agreement items use the
    /// released report as reference; source-guess items pair the AI draft
    /// with the released report.
    pub fn build_evaluation_batch(
        &mut self,
        instrument: Instrument,
        seed: u64,
        include_drafts: bool,
    ) -> Result<(BatchId, Vec<EvaluationItem>), StudyError> {
        let cases = self.evaluation_cases(instrument, include_drafts);
        if cases.is_empty() {
            return Err(StudyError::InvalidRequest(format!(
                "no released cases eligible for {instrument}"
            )));
        }
        let batch = build_blinded_items(&cases, instrument, seed)?;
        let items = batch.items.clone();
        let batch_id = self.state.next_batch_id();
        self.commit(StudyEvent::EvaluationBatchBuilt {
            batch_id: batch_id.clone(),
            instrument,
            seed,
            batch,
        })?;
        Ok((batch_id, items))
    }

    pub fn batch_items(&self, batch_id: &BatchId) -> Result<&[EvaluationItem], StudyError> {
        self.state
            .batches
            .get(batch_id)
            .map(|b| b.items.as_slice())
            .ok_or_else(|| StudyError::UnknownBatch(batch_id.clone()))
    }

    pub fn record_evaluation(
        &mut self,
        item_id: ItemId,
        rater_id: RaterId,
        response: Response,
    ) -> Result<EvaluationRecord, StudyError> {
        if rater_id.as_str().is_empty() {
            return Err(StudyError::InvalidRequest("empty rater_id".into()));
        }
        let record = EvaluationRecord {
            item_id,
            rater_id,
            response,
            timestamp: self.clock.wall_ms(),
        };
        self.commit(StudyEvent::EvaluationRecorded {
            record: record.clone(),
        })?;
        Ok(record)
    }

    pub fn overview(&self) -> StudyOverview {
        let s = &self.state;
        let count_arm =
            |arm: Arm, it: &mut dyn Iterator<Item = Arm>| it.filter(|a| *a == arm).count();
        let readers_per_arm = Arm::BOTH
            .iter()
            .map(|arm| {
                let mut it = s
                    .readers
                    .values()
                    .map(|i| s.allocations[*i].arm().expect("opened"));
                (*arm, count_arm(*arm, &mut it))
            })
            .collect();
        let sessions_per_arm = Arm::BOTH
            .iter()
            .map(|arm| {
                (
                    *arm,
                    count_arm(*arm, &mut s.sessions.values().map(|x| x.arm)),
                )
            })
            .collect();
        StudyOverview {
            study_id: s.study_id.clone(),
            allocations: s.allocations.len(),
            sealed: s.allocations.iter().filter(|a| a.sealed).count(),
            opened: s.readers.len(),
            readers_per_arm,
            cases: s.cases.len(),
            sessions_per_arm,
            finalized_sessions: s
                .sessions
                .values()
                .filter(|x| x.state == SessionState::Finalized)
                .count(),
            released_cases: s.releases.len(),
            evaluation_items: s.key.entries.len(),
            evaluation_records: s.ledger.records().len(),
            events: s.last_seq,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::mock::template_response;

    struct Fixture {
        study: Study,
        clock: Arc<ManualClock>,
        ai: ReaderId,
        sc: ReaderId,
    }

    fn intake(id: &str) -> CaseIntake {
        CaseIntake {
            case_id: id.into(),
            patient_meta: [("age_band".to_string(), "60-69".to_string())].into(),
            image_refs: vec![format!("{id}/pa.dcm"), format!("{id}/lateral.dcm")],
            history_note: "fever and productive cough for 3 days".into(),
            admitted: true,
        }
    }

    fn fixture() -> Fixture {
        let clock = Arc::new(ManualClock::new(1_000_000, 1_700_000_000_000));
        let config = StudyConfig {
            reviewers: vec!["senior-1".into()],
            ..StudyConfig::default()
        };
        let mut study =
            Study::create("s1".into(), config, clock.clone(), EventLog::in_memory()).unwrap();
        study.generate_allocation(7, 8, 4).unwrap();
        let mut ai = None;
        let mut sc = None;
        for i in 0..8 {
            let a = study.assign_reader(format!("reader-{i}").into()).unwrap();
            match a.arm {
                Arm::AiAssisted => ai.get_or_insert(a.reader_id),
                Arm::StandardCare => sc.get_or_insert(a.reader_id),
            };
        }
        study.register_case(intake("c1")).unwrap();
        Fixture {
            study,
            clock,
            ai: ai.unwrap(),
            sc: sc.unwrap(),
        }
    }

    fn draft(study: &Study, sid: &SessionId) -> ModelDraft {
        let (req, _) = study.draft_request(sid).unwrap();
        template_response(&req, 1).into_draft(3000).unwrap()
    }

    #[test]
    fn reading_time_from_monotonic_clock() {
        let mut f = fixture();
        let v = f.study.start_session(&"c1".into(), &f.ai).unwrap();
        assert_eq!(v.session.state, SessionState::Reading);
        assert_eq!(v.history_note, "fever and productive cough for 3 days");
        assert_eq!(v.image_refs.len(), 2);
        f.clock.advance(60.0);
        f.clock.set_wall(0);
        f.clock.advance(60.6);
        let done = f
            .study
            .finalize_session(&v.session.session_id, "No acute disease.")
            .unwrap();
        assert_eq!(done.session.reading_time_s, Some(120.6));
        assert_eq!(done.elapsed_s, Some(120.6));
    }

    #[test]
    fn draft_is_first_version_and_gated_by_arm() {
        let mut f = fixture();
        let a = f
            .study
            .start_session(&"c1".into(), &f.ai)
            .unwrap()
            .session
            .session_id;
        let s = f
            .study
            .start_session(&"c1".into(), &f.sc)
            .unwrap()
            .session
            .session_id;
        assert!(matches!(
            f.study.draft_request(&s),
            Err(StudyError::DraftForbidden)
        ));
        let d = draft(&f.study, &a);
        let rid = f.study.record_draft(&a, d.clone()).unwrap();
        let view = f.study.session_view(&a).unwrap();
        assert_eq!(view.session.report_versions, vec![rid.clone()]);
        assert_eq!(view.current_text.as_deref(), Some(d.report_text.as_str()));
        assert!(matches!(
            f.study.record_draft(&a, d),
            Err(StudyError::DraftExists(_))
        ));
        f.clock.advance(10.0);
        let done = f.study.finalize_session(&a, "Edited report.").unwrap();
        assert_eq!(done.session.report_versions.len(), 2);
        let last = &f.study.state().reports[&done.session.report_versions[1]];
        assert_eq!(last.parent_report_id, Some(rid));
        assert_eq!(last.author_role, cxrkit_core::AuthorRole::Junior);
    }

    #[test]
    fn session_rules() {
        let mut f = fixture();
        let case: CaseId = "c1".into();
        f.study.start_session(&case, &f.ai).unwrap();
        assert!(matches!(
            f.study.start_session(&case, &f.ai),
            Err(StudyError::DuplicateSession { .. })
        ));
        let other_ai = f
            .study
            .state()
            .readers
            .keys()
            .find(|r| **r != f.ai && f.study.state().reader_arm(r).unwrap() == Arm::AiAssisted)
            .unwrap()
            .clone();
        assert!(matches!(
            f.study.start_session(&case, &other_ai),
            Err(StudyError::DuplicateSession { .. })
        ));
        assert!(matches!(
            f.study.start_session(&"nope".into(), &f.sc),
            Err(StudyError::UnknownCase(_))
        ));
        assert!(matches!(
            f.study.start_session(&case, &"ghost".into()),
            Err(StudyError::UnknownReader(_))
        ));
        let s = f
            .study
            .start_session(&case, &f.sc)
            .unwrap()
            .session
            .session_id;
        assert!(matches!(
            f.study.finalize_session(&s, "  "),
            Err(StudyError::EmptyReport)
        ));
        f.clock.advance(1.0);
        f.study.finalize_session(&s, "ok").unwrap();
        assert!(matches!(
            f.study.finalize_session(&s, "again"),
            Err(StudyError::InvalidTransition { .. })
        ));
    }

    #[test]
    fn created_session_must_start_before_finalize() {
        let mut f = fixture();
        let sid = f.study.create_session(&"c1".into(), &f.ai).unwrap();
        assert_eq!(
            f.study.session_view(&sid).unwrap().session.state,
            SessionState::Created
        );
        assert!(f.study.finalize_session(&sid, "text").is_err());
        assert!(f.study.draft_request(&sid).is_err());
        f.study.begin_reading(&sid).unwrap();
        assert!(f.study.begin_reading(&sid).is_err());
    }

    #[test]
    fn allocation_and_reader_rules() {
        let mut f = fixture();
        assert!(matches!(
            f.study.assign_reader("late".into()),
            Err(StudyError::AllocationExhausted(8))
        ));
        assert!(matches!(
            f.study.assign_reader(f.ai.clone()),
            Err(StudyError::ReaderAlreadyAssigned(_))
        ));
        assert!(matches!(
            f.study.generate_allocation(1, 4, 4),
            Err(StudyError::AllocationExists)
        ));
        let mut fresh = Study::create(
            "s2".into(),
            StudyConfig::default(),
            f.clock.clone(),
            EventLog::in_memory(),
        )
        .unwrap();
        assert!(matches!(
            fresh.assign_reader("r".into()),
            Err(StudyError::NoAllocation)
        ));
        assert!(matches!(
            fresh.generate_allocation(1, 4, 3),
            Err(StudyError::OddBlockSize(3))
        ));
        let views = fresh.generate_allocation(1, 4, 4).unwrap();
        assert!(views.iter().all(|v| v.sealed && v.arm.is_none()));
        assert!(fresh.state().allocations[0].arm().is_err());
    }

    fn finalized_case(f: &mut Fixture) -> (ReportId, ReportId) {
        let case: CaseId = "c1".into();
        let a = f
            .study
            .start_session(&case, &f.ai)
            .unwrap()
            .session
            .session_id;
        let s = f
            .study
            .start_session(&case, &f.sc)
            .unwrap()
            .session
            .session_id;
        let d = draft(&f.study, &a);
        f.study.record_draft(&a, d).unwrap();
        f.clock.advance(100.0);
        let ra = f
            .study
            .finalize_session(&a, "Right lower lobe pneumonia.")
            .unwrap();
        let rs = f.study.finalize_session(&s, "Possible pneumonia.").unwrap();
        (
            ra.session.report_versions.last().unwrap().clone(),
            rs.session.report_versions.last().unwrap().clone(),
        )
    }

    #[test]
    fn review_requires_both_sessions() {
        let mut f = fixture();
        let case: CaseId = "c1".into();
        let a = f
            .study
            .start_session(&case, &f.ai)
            .unwrap()
            .session
            .session_id;
        f.clock.advance(5.0);
        let ra = f.study.finalize_session(&a, "Clear lungs.").unwrap();
        let base = ra.session.report_versions[0].clone();
        assert!(matches!(
            f.study
                .senior_review(&case, &"senior-1".into(), &base, None),
            Err(StudyError::ReviewNotReady { .. })
        ));
        assert!(!f.study.review_packet(&case).unwrap().ready);
    }

    #[test]
    fn edit_free_approval_and_audit_chain() {
        let mut f = fixture();
        let case: CaseId = "c1".into();
        let (ra, rs) = finalized_case(&mut f);
        assert!(matches!(
            f.study.senior_review(&case, &"intruder".into(), &ra, None),
            Err(StudyError::UnknownReviewer(_))
        ));
        assert!(matches!(
            f.study
                .senior_review(&case, &"senior-1".into(), &"rpt-000001".into(), None),
            Err(StudyError::InvalidReviewBase { .. })
        ));
        let packet = f.study.review_packet(&case).unwrap();
        assert!(packet.ready);
        assert!(packet.candidates.iter().all(|c| c.arm.is_some()));
        let mut rx = f.study.subscribe_releases();
        let released = f
            .study
            .senior_review(&case, &"senior-1".into(), &ra, None)
            .unwrap();
        assert_eq!(released.text, f.study.state().reports[&ra].text);
        assert_ne!(released.report_id, ra);
        assert_eq!(released.parent_report_id.as_ref(), Some(&ra));
        let chain = f.study.state().audit_chain(&released.report_id).unwrap();
        assert_eq!(chain.len(), 3);
        assert_eq!(chain[0].author_role, cxrkit_core::AuthorRole::AiModel);
        assert_eq!(chain[0].parent_report_id, None);
        assert_eq!(rx.try_recv().unwrap().report_id, released.report_id);
        assert_eq!(f.study.releases_after(0).len(), 1);
        assert!(f.study.releases_after(1).is_empty());
        assert!(matches!(
            f.study
                .senior_review(&case, &"senior-1".into(), &rs, Some("x".into())),
            Err(StudyError::AlreadyReleased(_))
        ));
    }

    #[test]
    fn reviewers_can_be_blinded_to_arm() {
        let mut f = fixture();
        f.study.state.config.reviewers_see_arm = false;
        finalized_case(&mut f);
        let packet = f.study.review_packet(&"c1".into()).unwrap();
        assert!(packet.candidates.iter().all(|c| c.arm.is_none()));
    }

    #[test]
    fn replay_matches_live_state() {
        let mut f = fixture();
        let (ra, _) = finalized_case(&mut f);
        f.study
            .senior_review(
                &"c1".into(),
                &"senior-1".into(),
                &ra,
                Some("Edited.".into()),
            )
            .unwrap();
        let (_, items) = f
            .study
            .build_evaluation_batch(Instrument::PairwisePreference, 3, false)
            .unwrap();
        f.study
            .record_evaluation(
                items[0].item_id.clone(),
                "rater-1".into(),
                Response::Choice(cxrkit_core::evaluation::Position::First),
            )
            .unwrap();
        assert!(f
            .study
            .record_evaluation(
                items[0].item_id.clone(),
                "rater-1".into(),
                Response::Choice(cxrkit_core::evaluation::Position::Second)
            )
            .is_err());
        assert_eq!(&f.study.replayed_state().unwrap(), f.study.state());
    }

    #[test]
    fn rejected_commands_leave_no_trace() {
        let mut f = fixture();
        let before = f.study.events().len();
        let snapshot = f.study.state().clone();
        let _ = f.study.start_session(&"nope".into(), &f.ai);
        let _ = f.study.assign_reader(f.ai.clone());
        assert_eq!(f.study.events().len(), before);
        assert_eq!(f.study.state(), &snapshot);
    }

    #[test]
    fn source_guess_batch_pairs_draft_with_release() {
        let mut f = fixture();
        assert!(f
            .study
            .build_evaluation_batch(Instrument::SourceGuess, 1, false)
            .is_err());
        let (ra, _) = finalized_case(&mut f);
        f.study
            .senior_review(&"c1".into(), &"senior-1".into(), &ra, None)
            .unwrap();
        let (_, items) = f
            .study
            .build_evaluation_batch(Instrument::SourceGuess, 1, false)
            .unwrap();
        assert_eq!(items.len(), 2);
        let (_, likert) = f
            .study
            .build_evaluation_batch(Instrument::LikertQuality, 1, true)
            .unwrap();
        assert_eq!(likert.len(), 3);
        let (_, radpeer) = f
            .study
            .build_evaluation_batch(Instrument::RadpeerAgreement, 1, false)
            .unwrap();
        assert!(radpeer.iter().all(|i| i.texts.len() == 2));
    }
}
