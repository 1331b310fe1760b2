//! Runs the study HTTP API.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use cxrkit_core::Labeler;
use cxrkit_study::mock::{FaultPlan, InProcessModel};
use cxrkit_study::model::HttpModelClient;
use cxrkit_study::store::list_studies;
use cxrkit_study::{api, Clock, ManualClock, ModelClient, Study, StudyService, SystemClock};

use crate::error::CliError;

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "CXRKIT_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Persist studies here and reload them on start.
    #[arg(long, env = "CXRKIT_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Report-generation service; the in-process mock model when unset.
    #[arg(long, env = "CXRKIT_MODEL_URL")]
    pub model_url: Option<String>,
    /// Seed of the mock model.
    #[arg(long, default_value_t = 0)]
    pub mock_seed: u64,
}

pub fn build_service(args: &ServeArgs, labeler: Labeler) -> Result<StudyService, CliError> {
    let model: Arc<dyn ModelClient> = match &args.model_url {
        Some(url) => Arc::new(HttpModelClient::new(url)),
        None => Arc::new(InProcessModel::new(args.mock_seed, FaultPlan::default())),
    };
    let service = match &args.data_dir {
        Some(dir) => {
            let clock: Arc<dyn Clock> = Arc::new(SystemClock::resume_from(resume_point(dir)?));
            StudyService::with_data_dir(model, clock, dir)?
        }
        None => StudyService::new(model, Arc::new(SystemClock::new())),
    };
    Ok(service.with_labeler(labeler))
}

/// Just past the latest monotonic timestamp stored under `dir`, so sessions
/// open across a restart keep non-negative reading times.
fn resume_point(dir: &Path) -> Result<u64, CliError> {
    let probe: Arc<dyn Clock> = Arc::new(ManualClock::new(0, 0));
    let mut latest = 0;
    for id in list_studies(dir)? {
        let study = Study::open(dir, &id, probe.clone())?;
        for s in study.state().sessions.values() {
            latest = latest.max(s.started_at_us.unwrap_or(0));
            latest = latest.max(s.finalized_at_us.unwrap_or(0));
        }
    }
    Ok(latest + 1)
}

pub async fn run_serve(args: &ServeArgs, labeler: Labeler) -> Result<(), CliError> {
    let service = Arc::new(build_service(args, labeler)?);
    let listener = tokio::net::TcpListener::bind(args.bind)
        .await
        .map_err(|e| CliError::Invalid(format!("cannot bind {}: {e}", args.bind)))?;
    eprintln!("cxrkit: serving study API on http://{}", args.bind);
    axum::serve(listener, api::router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::io(Path::new("<server>"), e))
}
