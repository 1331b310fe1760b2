use thiserror::Error;

use crate::taxonomy::Finding;

/// Errors from the shared domain types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("unknown finding `{0}`")]
    UnknownFinding(String),
    #[error("unknown assertion label `{0}`")]
    UnknownLabel(String),
    #[error("probability {value} for {finding} is outside [0, 1]")]
    ProbabilityOutOfRange { finding: Finding, value: f64 },
    #[error("finding {0} listed more than once")]
    DuplicateFinding(Finding),
    #[error("no value for finding {0}")]
    MissingFinding(Finding),
    #[error("invalid report {report_id}: {reason}")]
    InvalidReport { report_id: String, reason: String },
}
