//! HTTP API over [`StudyService`].
//!
//! All bodies are JSON. Errors come back as `{"error": code, "message": text}`
//! with a 4xx/5xx status. Allocation listings never carry the arm of a sealed
//! envelope, and evaluation routes serve blinded items only.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cxrkit_core::evaluation::{
    EvalError, EvaluationItem, Instrument, ItemId, RaterId, Response as RaterResponse,
};
use cxrkit_core::{CaseId, Report, ReportId, ScoredLabelVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::StudyError;
use crate::ids::{BatchId, ReaderId, ReviewerId, SessionId, StudyId};
use crate::model::ModelError;
use crate::service::StudyService;
use crate::state::{CaseIntake, StudyConfig};

#[derive(Debug)]
pub struct ApiError(pub StudyError);

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        ApiError(e)
    }
}

/// HTTP status and stable error code for an error.
pub fn classify(e: &StudyError) -> (StatusCode, &'static str) {
    use StudyError::*;
    match e {
        UnknownStudy(_) | UnknownCase(_) | UnknownReader(_) | UnknownSession(_)
        | UnknownReport(_) | UnknownBatch(_) | UnknownItem(_) => {
            (StatusCode::NOT_FOUND, "not_found")
        }
        Evaluation(EvalError::UnknownItem(_)) => (StatusCode::NOT_FOUND, "not_found"),
        UnknownReviewer(_) => (StatusCode::FORBIDDEN, "unknown_reviewer"),
        Concealed { .. } => (StatusCode::FORBIDDEN, "concealed"),
        DraftForbidden => (StatusCode::FORBIDDEN, "draft_forbidden"),
        Model(ModelError::Timeout(_)) => (StatusCode::GATEWAY_TIMEOUT, "model_timeout"),
        Model(_) => (StatusCode::BAD_GATEWAY, "model_error"),
        DuplicateStudy(_)
        | DuplicateCase(_)
        | DuplicateSession { .. }
        | SameReader { .. }
        | ReaderAlreadyAssigned(_)
        | DraftExists(_)
        | AlreadyReleased(_)
        | Evaluation(EvalError::DuplicateRecord { .. }) => (StatusCode::CONFLICT, "duplicate"),
        AllocationExists | AllocationExhausted(_) | NoAllocation | CaseNotAdmitted { .. } => {
            (StatusCode::CONFLICT, "allocation_state")
        }
        InvalidTransition { .. } => (StatusCode::CONFLICT, "invalid_transition"),
        ReviewNotReady { .. } => (StatusCode::CONFLICT, "review_not_ready"),
        NothingToExport => (StatusCode::CONFLICT, "nothing_to_export"),
        OddBlockSize(_)
        | EmptyAllocation
        | EmptyReport
        | InvalidRequest(_)
        | InvalidReviewBase { .. }
        | Evaluation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
        Log(_) | Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = classify(&self.0);
        (
            status,
            Json(json!({ "error": code, "message": self.0.to_string() })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Svc = State<Arc<StudyService>>;

#[derive(Debug, Deserialize)]
pub struct CreateStudy {
    #[serde(default)]
    pub study_id: Option<StudyId>,
    #[serde(default)]
    pub config: StudyConfig,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedStudy {
    pub study_id: StudyId,
    pub config: StudyConfig,
}

#[derive(Debug, Deserialize)]
pub struct GenerateAllocation {
    pub seed: u64,
    pub n: usize,
    #[serde(default = "default_block")]
    pub block_size: usize,
}

fn default_block() -> usize {
    4
}

#[derive(Debug, Deserialize)]
pub struct AssignReader {
    pub reader_id: ReaderId,
}

#[derive(Debug, Deserialize)]
pub struct StartSession {
    pub case_id: CaseId,
    pub reader_id: ReaderId,
    /// Start the reading timer immediately (default true).
    #[serde(default = "default_true")]
    pub start: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
pub struct Finalize {
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct Review {
    pub reviewer_id: ReviewerId,
    pub base_report_id: ReportId,
    #[serde(default)]
    pub edits: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct BuildBatch {
    pub instrument: Instrument,
    pub seed: u64,
    /// Likert batches only: also rate the unedited AI drafts.
    #[serde(default)]
    pub include_drafts: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BatchView {
    pub batch_id: BatchId,
    pub items: Vec<EvaluationItem>,
}

#[derive(Debug, Deserialize)]
pub struct RecordEvaluation {
    pub item_id: ItemId,
    pub rater_id: RaterId,
    pub response: RaterResponse,
}

#[derive(Debug, Deserialize)]
pub struct AfterQuery {
    #[serde(default)]
    pub after: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DraftView {
    pub report_id: ReportId,
    pub report_text: String,
    pub finding_probabilities: ScoredLabelVector,
    pub latency_ms: u64,
    pub model_version: String,
}

async fn list_studies(State(svc): Svc) -> Json<Vec<StudyId>> {
    Json(svc.study_ids())
}

async fn create_study(
    State(svc): Svc,
    Json(body): Json<CreateStudy>,
) -> Result<(StatusCode, Json<CreatedStudy>), ApiError> {
    let id = svc.create_study(body.study_id, body.config.clone())?;
    Ok((
        StatusCode::CREATED,
        Json(CreatedStudy {
            study_id: id,
            config: body.config,
        }),
    ))
}

async fn overview(
    State(svc): Svc,
    Path(id): Path<StudyId>,
) -> ApiResult<crate::study::StudyOverview> {
    Ok(Json(svc.with_study(&id, |s| Ok(s.overview()))?))
}

async fn generate(
    State(svc): Svc,
    Path(id): Path<StudyId>,
    Json(b): Json<GenerateAllocation>,
) -> ApiResult<Vec<crate::allocation::AllocationView>> {
    Ok(Json(svc.with_study(&id, |s| {
        s.generate_allocation(b.seed, b.n, b.block_size)
    })?))
}

async fn allocations(
    State(svc): Svc,
    Path(id): Path<StudyId>,
) -> ApiResult<Vec<crate::allocation::AllocationView>> {
    Ok(Json(svc.with_study(&id, |s| Ok(s.allocation_views()))?))
}

async fn assign(
    State(svc): Svc,
    Path(id): Path<StudyId>,
    Json(b): Json<AssignReader>,
) -> ApiResult<crate::study::ReaderAssignment> {
    Ok(Json(svc.with_study(&id, |s| s.assign_reader(b.reader_id))?))
}

async fn register_case(
    State(svc): Svc,
    Path(id): Path<StudyId>,
    Json(b): Json<CaseIntake>,
) -> Result<(StatusCode, Json<crate::state::CaseRecord>), ApiError> {
    let rec = svc.with_study(&id, |s| {
        let cid = s.register_case(b)?;
        Ok(s.state().case(&cid)?.clone())
    })?;
    Ok((StatusCode::CREATED, Json(rec)))
}

async fn get_case(
    State(svc): Svc,
    Path((id, cid)): Path<(StudyId, CaseId)>,
) -> ApiResult<crate::state::CaseRecord> {
    Ok(Json(
        svc.with_study(&id, |s| Ok(s.state().case(&cid)?.clone()))?,
    ))
}

async fn create_session(
    State(svc): Svc,
    Path(id): Path<StudyId>,
    Json(b): Json<StartSession>,
) -> Result<(StatusCode, Json<crate::study::SessionView>), ApiError> {
    let view = svc.with_study(&id, |s| {
        let sid = s.create_session(&b.case_id, &b.reader_id)?;
        if b.start {
            s.begin_reading(&sid)
        } else {
            s.session_view(&sid)
        }
    })?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(
    State(svc): Svc,
    Path((id, sid)): Path<(StudyId, SessionId)>,
) -> ApiResult<crate::study::SessionView> {
    Ok(Json(svc.with_study(&id, |s| s.session_view(&sid))?))
}

async fn start_session(
    State(svc): Svc,
    Path((id, sid)): Path<(StudyId, SessionId)>,
) -> ApiResult<crate::study::SessionView> {
    Ok(Json(svc.with_study(&id, |s| s.begin_reading(&sid))?))
}

async fn draft(
    State(svc): Svc,
    Path((id, sid)): Path<(StudyId, SessionId)>,
) -> ApiResult<DraftView> {
    let (report_id, d) = svc.request_ai_draft(&id, &sid).await?;
    Ok(Json(DraftView {
        report_id,
        report_text: d.report_text,
        finding_probabilities: d.finding_probabilities,
        latency_ms: d.latency_ms,
        model_version: d.model_version,
    }))
}

async fn finalize(
    State(svc): Svc,
    Path((id, sid)): Path<(StudyId, SessionId)>,
    Json(b): Json<Finalize>,
) -> ApiResult<crate::study::SessionView> {
    Ok(Json(
        svc.with_study(&id, |s| s.finalize_session(&sid, &b.text))?,
    ))
}

async fn review_packet(
    State(svc): Svc,
    Path((id, cid)): Path<(StudyId, CaseId)>,
) -> ApiResult<crate::study::ReviewPacket> {
    Ok(Json(svc.with_study(&id, |s| s.review_packet(&cid))?))
}

async fn review(
    State(svc): Svc,
    Path((id, cid)): Path<(StudyId, CaseId)>,
    Json(b): Json<Review>,
) -> Result<(StatusCode, Json<Report>), ApiError> {
    let r = svc.with_study(&id, |s| {
        s.senior_review(&cid, &b.reviewer_id, &b.base_report_id, b.edits)
    })?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn report_chain(
    State(svc): Svc,
    Path((id, rid)): Path<(StudyId, ReportId)>,
) -> ApiResult<Vec<Report>> {
    Ok(Json(svc.with_study(&id, |s| {
        Ok(s.state().audit_chain(&rid)?.into_iter().cloned().collect())
    })?))
}

async fn releases(
    State(svc): Svc,
    Path(id): Path<StudyId>,
    Query(q): Query<AfterQuery>,
) -> ApiResult<Vec<crate::state::Release>> {
    Ok(Json(
        svc.with_study(&id, |s| Ok(s.releases_after(q.after)))?,
    ))
}

async fn build_batch(
    State(svc): Svc,
    Path(id): Path<StudyId>,
    Json(b): Json<BuildBatch>,
) -> Result<(StatusCode, Json<BatchView>), ApiError> {
    let (batch_id, items) = svc.with_study(&id, |s| {
        s.build_evaluation_batch(b.instrument, b.seed, b.include_drafts)
    })?;
    Ok((StatusCode::CREATED, Json(BatchView { batch_id, items })))
}

async fn get_batch(
    State(svc): Svc,
    Path((id, bid)): Path<(StudyId, BatchId)>,
) -> ApiResult<BatchView> {
    let items = svc.with_study(&id, |s| Ok(s.batch_items(&bid)?.to_vec()))?;
    Ok(Json(BatchView {
        batch_id: bid,
        items,
    }))
}

async fn record_evaluation(
    State(svc): Svc,
    Path(id): Path<StudyId>,
    Json(b): Json<RecordEvaluation>,
) -> Result<(StatusCode, Json<cxrkit_core::evaluation::EvaluationRecord>), ApiError> {
    let r = svc.with_study(&id, |s| {
        s.record_evaluation(b.item_id, b.rater_id, b.response)
    })?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn export(State(svc): Svc, Path(id): Path<StudyId>) -> ApiResult<crate::export::StudyExport> {
    Ok(Json(svc.export(&id)?))
}

pub fn router(service: Arc<StudyService>) -> Router {
    Router::new()
        .route("/studies", get(list_studies).post(create_study))
        .route("/studies/{id}", get(overview))
        .route("/studies/{id}/allocations", get(allocations).post(generate))
        .route("/studies/{id}/readers", post(assign))
        .route("/studies/{id}/cases", post(register_case))
        .route("/studies/{id}/cases/{case_id}", get(get_case))
        .route(
            "/studies/{id}/cases/{case_id}/review-packet",
            get(review_packet),
        )
        .route("/studies/{id}/cases/{case_id}/review", post(review))
        .route("/studies/{id}/sessions", post(create_session))
        .route("/studies/{id}/sessions/{session_id}", get(get_session))
        .route(
            "/studies/{id}/sessions/{session_id}/start",
            post(start_session),
        )
        .route("/studies/{id}/sessions/{session_id}/draft", post(draft))
        .route(
            "/studies/{id}/sessions/{session_id}/finalize",
            post(finalize),
        )
        .route("/studies/{id}/reports/{report_id}/chain", get(report_chain))
        .route("/studies/{id}/releases", get(releases))
        .route("/studies/{id}/evaluation-batches", post(build_batch))
        .route(
            "/studies/{id}/evaluation-batches/{batch_id}",
            get(get_batch),
        )
        .route("/studies/{id}/evaluations", post(record_evaluation))
        .route("/studies/{id}/export", get(export))
        .with_state(service)
}
