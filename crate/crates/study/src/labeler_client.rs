//! Client for an external labeling service.
//!
//! Wire contract: POST `{base}/label` with `{report_id, text}`; the reply is
//! `{report_id, labels}` with 14 label strings in canonical finding order.

use std::time::Duration;

use cxrkit_core::{AssertionLabel, LabelVector, ReportId};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_LABEL_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_PARALLELISM: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub report_id: ReportId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub report_id: ReportId,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteLabelError {
    #[error("{0}: no response within {1:?}")]
    Timeout(ReportId, Duration),
    #[error("{0}: transport: {1}")]
    Transport(ReportId, String),
    #[error("{0}: labeler returned HTTP {1}")]
    Status(ReportId, u16),
    #[error("{0}: schema violation: {1}")]
    Schema(ReportId, String),
}

impl RemoteLabelError {
    pub fn report_id(&self) -> &ReportId {
        match self {
            RemoteLabelError::Timeout(id, _)
            | RemoteLabelError::Transport(id, _)
            | RemoteLabelError::Status(id, _)
            | RemoteLabelError::Schema(id, _) => id,
        }
    }
}

/// Checks one reply against the request it answers.
pub fn validate_response(
    request: &LabelRequest,
    response: &LabelResponse,
) -> Result<LabelVector, RemoteLabelError> {
    let schema = |msg: String| RemoteLabelError::Schema(request.report_id.clone(), msg);
    if response.report_id != request.report_id {
        return Err(schema(format!(
            "reply is for report {}",
            response.report_id
        )));
    }
    let labels = response
        .labels
        .iter()
        .map(|s| s.parse::<AssertionLabel>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| schema(e.to_string()))?;
    LabelVector::try_from_slice(&labels).map_err(|v| {
        schema(
            v.violations
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        )
    })
}

#[derive(Debug, Clone)]
pub struct RemoteLabeler {
    client: reqwest::Client,
    endpoint: String,
    pub timeout: Duration,
    pub parallelism: usize,
}

impl RemoteLabeler {
    pub fn new(base_url: &str) -> Self {
        RemoteLabeler {
            client: reqwest::Client::new(),
            endpoint: format!("{}/label", base_url.trim_end_matches('/')),
            timeout: DEFAULT_LABEL_TIMEOUT,
            parallelism: DEFAULT_PARALLELISM,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub async fn label_one(&self, request: &LabelRequest) -> Result<LabelVector, RemoteLabelError> {
        let id = || request.report_id.clone();
        let call = async {
            let resp = self
                .client
                .post(&self.endpoint)
                .json(request)
                .send()
                .await
                .map_err(|e| RemoteLabelError::Transport(id(), e.to_string()))?;
            if !resp.status().is_success() {
                return Err(RemoteLabelError::Status(id(), resp.status().as_u16()));
            }
            let body = resp
                .bytes()
                .await
                .map_err(|e| RemoteLabelError::Transport(id(), e.to_string()))?;
            serde_json::from_slice::<LabelResponse>(&body)
                .map_err(|e| RemoteLabelError::Schema(id(), e.to_string()))
        };
        let response = tokio::time::timeout(self.timeout, call)
            .await
            .map_err(|_| RemoteLabelError::Timeout(id(), self.timeout))??;
        validate_response(request, &response)
    }

    /// Labels every request; results come back in input order and one
    /// failure never affects another report.
    pub async fn label_all(
        &self,
        requests: &[LabelRequest],
    ) -> Vec<Result<LabelVector, RemoteLabelError>> {
        stream::iter(requests)
            .map(|r| self.label_one(r))
            .buffered(self.parallelism)
            .collect()
            .await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> LabelRequest {
        LabelRequest {
            report_id: "r1".into(),
            text: "No pneumothorax.".into(),
        }
    }

    fn labels(n: usize) -> Vec<String> {
        vec!["not-mentioned".to_string(); n]
    }

    #[test]
    fn accepts_fourteen_labels() {
        let resp = LabelResponse {
            report_id: "r1".into(),
            labels: labels(14),
        };
        assert_eq!(
            validate_response(&req(), &resp).unwrap(),
            LabelVector::not_mentioned()
        );
    }

    #[test]
    fn rejects_wrong_shape() {
        let resp = LabelResponse {
            report_id: "r1".into(),
            labels: labels(13),
        };
        let err = validate_response(&req(), &resp).unwrap_err();
        assert!(
            err.to_string().contains("expected 14 labels, found 13"),
            "{err}"
        );
        assert_eq!(err.report_id().as_str(), "r1");
    }

    #[test]
    fn rejects_unknown_label_and_wrong_id() {
        let mut l = labels(14);
        l[3] = "maybe".into();
        let bad = LabelResponse {
            report_id: "r1".into(),
            labels: l,
        };
        assert!(validate_response(&req(), &bad).is_err());
        let other = LabelResponse {
            report_id: "r2".into(),
            labels: labels(14),
        };
        assert!(validate_response(&req(), &other).is_err());
    }
}
