use super::{EmbedBackend, EmbedError, ProviderConfig};
use crate::http::{credential_from_env, Transport};
use serde::Deserialize;
use serde_json::json;
use std::sync::Arc;
use std::time::Duration;

/// Client for `POST {endpoint}` with `{"model", "input"}` bodies.
pub struct HttpBackend {
    endpoint: String,
    model_id: String,
    api_key_env: Option<String>,
    timeout: Duration,
    transport: Arc<dyn Transport>,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

impl HttpBackend {
    pub fn new(cfg: &ProviderConfig, transport: Arc<dyn Transport>) -> Self {
        Self {
            endpoint: cfg.endpoint_url.clone(),
            model_id: cfg.model_id.clone(),
            api_key_env: cfg.api_key_env.clone(),
            timeout: Duration::from_millis(cfg.timeout_ms),
            transport,
        }
    }
}

impl EmbedBackend for HttpBackend {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let key = credential_from_env(self.api_key_env.as_deref())
            .map_err(EmbedError::ProviderUnavailable)?;
        let body = json!({ "model": self.model_id, "input": texts });
        let value = self
            .transport
            .post_json(&self.endpoint, key.as_deref(), &body, self.timeout)
            .map_err(|e| EmbedError::ProviderUnavailable(e.to_string()))?;
        let mut parsed: EmbeddingsResponse = serde_json::from_value(value)
            .map_err(|e| EmbedError::ProviderUnavailable(format!("malformed response: {e}")))?;
        // Servers may answer out of order.
        parsed.data.sort_by_key(|item| item.index);
        let in_order = parsed.data.iter().enumerate().all(|(i, item)| item.index == i);
        if parsed.data.len() != texts.len() || !in_order {
            return Err(EmbedError::ProviderUnavailable(format!(
                "response indices do not cover 0..{}",
                texts.len()
            )));
        }
        Ok(parsed.data.into_iter().map(|item| item.embedding).collect())
    }
}
