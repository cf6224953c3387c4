//! Minimal JSON-over-HTTP transport shared by the embedding, reranking and
//! LLM clients. Tests substitute their own [`Transport`] to replay recorded
//! exchanges without a network.

use serde_json::Value;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("network failure: {0}")]
    Network(String),
    #[error("malformed response body: {0}")]
    Malformed(String),
}

pub trait Transport: Send + Sync {
    /// POSTs `body` as JSON and returns the parsed JSON response of a 2xx reply.
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError>;
}

/// Blocking transport backed by `ureq`.
#[derive(Debug, Default, Clone)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send(body.to_string().as_bytes())
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))
    }
}

/// Reads a credential through environment-variable indirection.
pub(crate) fn credential_from_env(var: Option<&str>) -> Result<Option<String>, String> {
    match var {
        None | Some("") => Ok(None),
        Some(name) => std::env::var(name)
            .map(Some)
            .map_err(|_| format!("credential variable {name} is not set")),
    }
}
