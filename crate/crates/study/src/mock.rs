//! In-repo stand-ins for the report model and the labeling service, with
//! configurable latency and fault injection.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use cxrkit_core::{CaseId, Finding, LabelVector, Labeler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::clock::ManualClock;
use crate::labeler_client::{LabelRequest, LabelResponse};
use crate::model::{FindingProbability, ModelClient, ModelError, ModelRequest, ModelResponse};

pub const MOCK_MODEL_VERSION: &str = "mock-template-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// HTTP 500.
    ServerError,
    /// 200 with a body that is not the expected JSON.
    MalformedBody,
    /// Valid JSON with the wrong number of findings or labels.
    WrongShape,
    /// Never answers.
    Hang,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FaultSchedule {
    Never,
    /// Every n-th request by arrival order (the n-th, 2n-th, ...).
    EveryNth {
        n: u64,
        kind: FaultKind,
    },
    /// Requests whose key (case or report id) is listed.
    Keys {
        keys: BTreeSet<String>,
        kind: FaultKind,
    },
    /// Each request independently, from a seeded stream.
    Rate {
        rate: f64,
        seed: u64,
        kind: FaultKind,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultPlan {
    pub latency: Duration,
    pub schedule: FaultSchedule,
}

impl Default for FaultPlan {
    fn default() -> Self {
        FaultPlan {
            latency: Duration::ZERO,
            schedule: FaultSchedule::Never,
        }
    }
}

#[derive(Debug)]
pub struct FaultInjector {
    plan: FaultPlan,
    arrivals: AtomicU64,
    rng: Mutex<ChaCha8Rng>,
}

impl FaultInjector {
    pub fn new(plan: FaultPlan) -> Self {
        let seed = match plan.schedule {
            FaultSchedule::Rate { seed, .. } => seed,
            _ => 0,
        };
        FaultInjector {
            plan,
            arrivals: AtomicU64::new(0),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn latency(&self) -> Duration {
        self.plan.latency
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals.load(Ordering::SeqCst)
    }

    /// Registers one arrival and decides its fault.
    pub fn decide(&self, key: &str) -> Option<FaultKind> {
        let k = self.arrivals.fetch_add(1, Ordering::SeqCst) + 1;
        match &self.plan.schedule {
            FaultSchedule::Never => None,
            FaultSchedule::EveryNth { n, kind } => {
                (*n > 0 && k.is_multiple_of(*n)).then_some(*kind)
            }
            FaultSchedule::Keys { keys, kind } => keys.contains(key).then_some(*kind),
            FaultSchedule::Rate { rate, kind, .. } => self
                .rng
                .lock()
                .unwrap()
                .random_bool(rate.clamp(0.0, 1.0))
                .then_some(*kind),
        }
    }
}

fn case_seed(seed: u64, case_id: &CaseId) -> u64 {
    // FNV-1a over the id, folded into the seed.
    case_id
        .as_str()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325 ^ seed, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        })
}

fn prevalence(finding: Finding, history_note: &str) -> f64 {
    let infective = ["fever", "cough", "sputum"]
        .iter()
        .any(|w| history_note.to_lowercase().contains(w));
    match finding {
        Finding::Pneumonia if infective => 0.55,
        Finding::Pneumonia => 0.3,
        Finding::LungOpacity | Finding::SupportDevices => 0.3,
        Finding::PleuralEffusion => 0.25,
        Finding::Atelectasis => 0.2,
        Finding::Cardiomegaly => 0.15,
        Finding::Edema | Finding::Consolidation => 0.1,
        _ => 0.04,
    }
}

fn sentence(finding: Finding) -> &'static str {
    match finding {
        Finding::Atelectasis => "Bibasilar atelectasis.",
        Finding::Cardiomegaly => "The heart is enlarged.",
        Finding::Consolidation => "Right lower lobe consolidation.",
        Finding::Edema => "Mild pulmonary edema.",
        Finding::EnlargedCardiomediastinum => "Widened mediastinum.",
        Finding::Fracture => "Healing left rib fracture.",
        Finding::LungLesion => "A 1 cm nodule in the left upper lobe.",
        Finding::LungOpacity => "Patchy opacity at the right lung base.",
        Finding::NoFinding => "No acute cardiopulmonary process.",
        Finding::PleuralEffusion => "Small left pleural effusion.",
        Finding::PleuralOther => "Apical pleural thickening.",
        Finding::Pneumonia => "Right lower lobe pneumonia.",
        Finding::Pneumothorax => "Small right apical pneumothorax.",
        Finding::SupportDevices => "Endotracheal tube in standard position.",
    }
}

/// Deterministic template report for a case.
pub fn template_response(request: &ModelRequest, seed: u64) -> ModelResponse {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed(seed, &request.case_id));
    let mut present = Vec::new();
    let mut findings = Vec::with_capacity(Finding::ALL.len());
    for f in Finding::ALL
        .iter()
        .copied()
        .filter(|f| *f != Finding::NoFinding)
    {
        let u: f64 = rng.random();
        let positive = u < prevalence(f, &request.history_note);
        let probability = if positive {
            0.5 + 0.5 * rng.random::<f64>()
        } else {
            0.5 * rng.random::<f64>()
        };
        if positive {
            present.push(f);
        }
        findings.push(FindingProbability {
            finding: f,
            probability,
        });
    }
    let normal = !present.iter().any(|f| f.is_pathology());
    findings.push(FindingProbability {
        finding: Finding::NoFinding,
        probability: if normal { 0.9 } else { 0.05 },
    });
    findings.sort_by_key(|f| f.finding);

    let mut text: Vec<&str> = present.iter().map(|f| sentence(*f)).collect();
    if normal {
        text.push(sentence(Finding::NoFinding));
    }
    if !present.contains(&Finding::Pneumothorax) {
        text.push("No pneumothorax.");
    }
    ModelResponse {
        report_text: text.join(" "),
        findings,
        model_version: MOCK_MODEL_VERSION.to_string(),
    }
}

fn wrong_shape(mut r: ModelResponse) -> ModelResponse {
    r.findings.pop();
    r
}

/// Model client that generates templates in-process.
///
/// With a [`ManualClock`] attached, latency advances that clock instead of
/// sleeping, so simulated studies run at full speed.
#[derive(Debug)]
pub struct InProcessModel {
    seed: u64,
    injector: FaultInjector,
    manual_clock: Option<Arc<ManualClock>>,
}

impl InProcessModel {
    pub fn new(seed: u64, plan: FaultPlan) -> Self {
        InProcessModel {
            seed,
            injector: FaultInjector::new(plan),
            manual_clock: None,
        }
    }

    pub fn with_manual_clock(mut self, clock: Arc<ManualClock>) -> Self {
        self.manual_clock = Some(clock);
        self
    }

    pub fn calls(&self) -> u64 {
        self.injector.arrivals()
    }
}

#[async_trait]
impl ModelClient for InProcessModel {
    async fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, ModelError> {
        let fault = self.injector.decide(request.case_id.as_str());
        let latency = self.injector.latency();
        match &self.manual_clock {
            Some(c) => c.advance(latency.as_secs_f64()),
            None if !latency.is_zero() => tokio::time::sleep(latency).await,
            None => {}
        }
        let response = template_response(request, self.seed);
        match fault {
            None => Ok(response),
            Some(FaultKind::ServerError) => Err(ModelError::Status(500)),
            Some(FaultKind::MalformedBody) => {
                Err(ModelError::Malformed("expected value at line 1".into()))
            }
            Some(FaultKind::WrongShape) => Ok(wrong_shape(response)),
            Some(FaultKind::Hang) => std::future::pending().await,
        }
    }
}

/// A spawned HTTP server; aborted on drop.
#[derive(Debug)]
pub struct MockServer {
    pub addr: SocketAddr,
    handle: JoinHandle<()>,
}

impl MockServer {
    pub async fn spawn(router: Router) -> std::io::Result<MockServer> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let handle = tokio::spawn(async move {
            let _ = axum::serve(listener, router).await;
        });
        Ok(MockServer { addr, handle })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

async fn apply_fault<T: serde::Serialize>(
    fault: Option<FaultKind>,
    ok: T,
    wrong: impl FnOnce(T) -> T,
) -> Response {
    match fault {
        None => Json(ok).into_response(),
        Some(FaultKind::ServerError) => {
            (StatusCode::INTERNAL_SERVER_ERROR, "injected fault").into_response()
        }
        Some(FaultKind::MalformedBody) => (StatusCode::OK, "{\"report_text\": ").into_response(),
        Some(FaultKind::WrongShape) => Json(wrong(ok)).into_response(),
        Some(FaultKind::Hang) => std::future::pending().await,
    }
}

struct ModelServerState {
    seed: u64,
    injector: FaultInjector,
}

async fn generate_handler(
    State(state): State<Arc<ModelServerState>>,
    Json(request): Json<ModelRequest>,
) -> Response {
    let fault = state.injector.decide(request.case_id.as_str());
    if !state.injector.latency().is_zero() {
        tokio::time::sleep(state.injector.latency()).await;
    }
    apply_fault(fault, template_response(&request, state.seed), wrong_shape).await
}

/// `POST /generate` following the model wire contract.
pub fn model_router(seed: u64, plan: FaultPlan) -> Router {
    let state = Arc::new(ModelServerState {
        seed,
        injector: FaultInjector::new(plan),
    });
    Router::new()
        .route("/generate", post(generate_handler))
        .with_state(state)
}

#[derive(Debug, Clone)]
pub enum LabelerMode {
    /// Same vector for every report.
    Fixed(LabelVector),
    /// The rule-based labeler.
    Rules(Box<Labeler>),
}

struct LabelerServerState {
    mode: LabelerMode,
    injector: FaultInjector,
}

async fn label_handler(
    State(state): State<Arc<LabelerServerState>>,
    Json(request): Json<LabelRequest>,
) -> Response {
    let fault = state.injector.decide(request.report_id.as_str());
    if !state.injector.latency().is_zero() {
        tokio::time::sleep(state.injector.latency()).await;
    }
    let labels = match &state.mode {
        LabelerMode::Fixed(v) => *v,
        LabelerMode::Rules(l) => l.label(&request.text),
    };
    let response = LabelResponse {
        report_id: request.report_id,
        labels: labels
            .as_slice()
            .iter()
            .map(|l| l.as_str().to_string())
            .collect(),
    };
    apply_fault(fault, response, |mut r: LabelResponse| {
        r.labels.pop();
        r
    })
    .await
}

/// `POST /label` following the labeler wire contract.
pub fn labeler_router(mode: LabelerMode, plan: FaultPlan) -> Router {
    let state = Arc::new(LabelerServerState {
        mode,
        injector: FaultInjector::new(plan),
    });
    Router::new()
        .route("/label", post(label_handler))
        .with_state(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cxrkit_core::AssertionLabel;

    fn request(i: usize, note: &str) -> ModelRequest {
        ModelRequest {
            case_id: CaseId::new(format!("case-{i:04}")),
            image_refs: vec!["pa.dcm".into()],
            history_note: note.into(),
        }
    }

    #[test]
    fn templates_are_deterministic_and_valid() {
        for i in 0..200 {
            let r = request(i, "cough and fever");
            let a = template_response(&r, 3);
            assert_eq!(a, template_response(&r, 3));
            a.into_draft(0).unwrap();
        }
    }

    #[test]
    fn template_text_agrees_with_probabilities() {
        let labeler = Labeler::default();
        for i in 0..300 {
            let r = template_response(&request(i, ""), 11);
            let labels = labeler.label(&r.report_text);
            for fp in &r.findings {
                let positive = labels.get(fp.finding) == AssertionLabel::Positive;
                assert_eq!(
                    positive,
                    fp.probability > 0.5,
                    "{} in {:?}",
                    fp.finding,
                    r.report_text
                );
            }
        }
    }

    #[test]
    fn every_nth_counts_arrivals() {
        let inj = FaultInjector::new(FaultPlan {
            latency: Duration::ZERO,
            schedule: FaultSchedule::EveryNth {
                n: 20,
                kind: FaultKind::ServerError,
            },
        });
        let faults = (0..100)
            .filter(|i| inj.decide(&i.to_string()).is_some())
            .count();
        assert_eq!(faults, 5);
        assert_eq!(inj.arrivals(), 100);
    }

    #[test]
    fn keyed_and_rate_faults() {
        let keys = FaultInjector::new(FaultPlan {
            latency: Duration::ZERO,
            schedule: FaultSchedule::Keys {
                keys: ["r7".to_string()].into(),
                kind: FaultKind::Hang,
            },
        });
        assert_eq!(keys.decide("r7"), Some(FaultKind::Hang));
        assert_eq!(keys.decide("r8"), None);
        let rate = |seed| {
            let inj = FaultInjector::new(FaultPlan {
                latency: Duration::ZERO,
                schedule: FaultSchedule::Rate {
                    rate: 0.3,
                    seed,
                    kind: FaultKind::WrongShape,
                },
            });
            (0..1000)
                .map(|_| inj.decide("x").is_some())
                .collect::<Vec<_>>()
        };
        let hits = rate(5).iter().filter(|b| **b).count();
        assert!((240..=360).contains(&hits), "{hits}");
        assert_eq!(rate(5), rate(5));
    }

    #[tokio::test]
    async fn in_process_model_advances_manual_clock() {
        let clock = Arc::new(ManualClock::new(0, 0));
        let model = InProcessModel::new(
            1,
            FaultPlan {
                latency: Duration::from_secs(3),
                schedule: FaultSchedule::Never,
            },
        )
        .with_manual_clock(clock.clone());
        let r = model.generate(&request(1, "")).await.unwrap();
        assert_eq!(r.model_version, MOCK_MODEL_VERSION);
        use crate::clock::Clock;
        assert_eq!(clock.monotonic_us(), 3_000_000);
    }
}
