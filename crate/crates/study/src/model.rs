//! Report-generation model client and its wire contract.

use std::time::Duration;

use async_trait::async_trait;
use cxrkit_core::{CaseId, Finding, ScoredLabelVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;

pub const DEFAULT_MODEL_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub case_id: CaseId,
    pub image_refs: Vec<String>,
    pub history_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingProbability {
    pub finding: Finding,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub report_text: String,
    pub findings: Vec<FindingProbability>,
    pub model_version: String,
}

/// A validated model response with its measured round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDraft {
    pub report_text: String,
    pub finding_probabilities: ScoredLabelVector,
    pub latency_ms: u64,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("transport: {0}")]
    Transport(String),
    #[error("model returned HTTP {0}")]
    Status(u16),
    #[error("malformed model response: {0}")]
    Malformed(String),
}

impl ModelResponse {
    pub fn into_draft(self, latency_ms: u64) -> Result<ModelDraft, ModelError> {
        if self.report_text.trim().is_empty() {
            return Err(ModelError::Malformed("empty report_text".into()));
        }
        if self.model_version.is_empty() {
            return Err(ModelError::Malformed("empty model_version".into()));
        }
        let finding_probabilities =
            ScoredLabelVector::from_pairs(self.findings.iter().map(|f| (f.finding, f.probability)))
                .map_err(|e| ModelError::Malformed(e.to_string()))?;
        Ok(ModelDraft {
            report_text: self.report_text,
            finding_probabilities,
            latency_ms,
            model_version: self.model_version,
        })
    }
}

#[async_trait]
pub trait ModelClient: Send + Sync {
    async fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, ModelError>;
}

/// POSTs the request as JSON to `{base_url}/generate`.
#[derive(Debug, Clone)]
pub struct HttpModelClient {
    client: reqwest::Client,
    endpoint: String,
}

impl HttpModelClient {
    pub fn new(base_url: &str) -> Self {
        HttpModelClient {
            client: reqwest::Client::new(),
            endpoint: format!("{}/generate", base_url.trim_end_matches('/')),
        }
    }
}

#[async_trait]
impl ModelClient for HttpModelClient {
    async fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, ModelError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(request)
            .send()
            .await
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ModelError::Status(resp.status().as_u16()));
        }
        let body = resp
            .bytes()
            .await
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        serde_json::from_slice(&body).map_err(|e| ModelError::Malformed(e.to_string()))
    }
}

/// Calls the model under `timeout` and validates the response.
pub async fn request_draft(
    client: &dyn ModelClient,
    request: &ModelRequest,
    timeout: Duration,
    clock: &dyn Clock,
) -> Result<ModelDraft, ModelError> {
    let start = clock.monotonic_us();
    let response = tokio::time::timeout(timeout, client.generate(request))
        .await
        .map_err(|_| ModelError::Timeout(timeout))??;
    let latency_ms = clock.monotonic_us().saturating_sub(start) / 1000;
    response.into_draft(latency_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response(n: usize) -> ModelResponse {
        ModelResponse {
            report_text: "Heart size normal.".into(),
            findings: Finding::ALL
                .iter()
                .take(n)
                .map(|f| FindingProbability {
                    finding: *f,
                    probability: 0.1,
                })
                .collect(),
            model_version: "m1".into(),
        }
    }

    #[test]
    fn needs_all_fourteen_findings() {
        assert!(response(14).into_draft(3000).is_ok());
        assert!(matches!(
            response(13).into_draft(0),
            Err(ModelError::Malformed(_))
        ));
    }

    #[test]
    fn probability_range_checked() {
        let mut r = response(14);
        r.findings[0].probability = 1.5;
        assert!(r.into_draft(0).is_err());
    }

    #[test]
    fn wire_format() {
        let json = serde_json::to_value(response(1)).unwrap();
        assert_eq!(json["findings"][0]["finding"], "Atelectasis");
        assert_eq!(json["findings"][0]["probability"], 0.1);
        let req: ModelRequest = serde_json::from_str(
            r#"{"case_id":"c1","image_refs":["pa.dcm","lat.dcm"],"history_note":"fever"}"#,
        )
        .unwrap();
        assert_eq!(req.image_refs.len(), 2);
    }
}
