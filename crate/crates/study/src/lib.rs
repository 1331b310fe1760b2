//! Prospective reader-study workflow.
//!
//! A study owns a sealed permuted-block allocation sequence, reading sessions
//! timed on a monotonic clock, AI drafts from a model client, senior review
//! and release, blinded evaluation batches, and an append-only event log that
//! replays to identical state. [`api`] exposes all of it over HTTP.

pub mod allocation;
pub mod api;
pub mod clock;
pub mod error;
pub mod events;
pub mod export;
pub mod ids;
pub mod labeler_client;
pub mod mock;
pub mod model;
pub mod service;
pub mod state;
pub mod store;
pub mod study;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use allocation::{generate_allocation, unblind, Allocation, AllocationView};
pub use clock::{Clock, ManualClock, SystemClock};
pub use error::StudyError;
pub use events::{EventEnvelope, StudyEvent};
pub use export::{ExportRow, StudyExport};
pub use ids::{BatchId, ReaderId, ReviewerId, SessionId, StudyId};
pub use model::{ModelClient, ModelDraft, ModelError, ModelRequest, ModelResponse};
pub use service::StudyService;
pub use state::{CaseIntake, ReadingSession, SessionState, StudyConfig, StudyState};
pub use study::Study;
