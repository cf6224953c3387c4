use super::RagError;
use crate::fnv::{fnv1a64, hex64};
use crate::http::{credential_from_env, Transport, UreqTransport};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::sync::Arc;
use std::time::Duration;

/// Text generator behind the answer step.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, RagError>;
}

/// `"MOCK:"` followed by the FNV-1a-64 hex digest of the prompt.
pub fn mock_llm(prompt: &str) -> String {
    format!("MOCK:{}", hex64(fnv1a64(prompt.as_bytes())))
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MockLlm;

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &str) -> Result<String, RagError> {
        Ok(mock_llm(prompt))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub kind: LlmKind,
    pub endpoint_url: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            kind: LlmKind::Mock,
            endpoint_url: None,
            model: String::new(),
            api_key_env: None,
            timeout_ms: 60_000,
        }
    }
}

impl LlmConfig {
    pub fn build(&self) -> Result<Arc<dyn LlmClient>, RagError> {
        self.build_with_transport(Arc::new(UreqTransport))
    }

    pub fn build_with_transport(&self, transport: Arc<dyn Transport>) -> Result<Arc<dyn LlmClient>, RagError> {
        match self.kind {
            LlmKind::Mock => Ok(Arc::new(MockLlm)),
            LlmKind::Http => {
                let endpoint = self
                    .endpoint_url
                    .clone()
                    .filter(|u| !u.is_empty())
                    .ok_or_else(|| RagError::InvalidConfig("http llm needs endpoint_url".into()))?;
                if self.model.is_empty() {
                    return Err(RagError::InvalidConfig("http llm needs a model".into()));
                }
                Ok(Arc::new(HttpLlm {
                    endpoint,
                    model: self.model.clone(),
                    api_key_env: self.api_key_env.clone(),
                    timeout: Duration::from_millis(self.timeout_ms),
                    transport,
                }))
            }
        }
    }
}

/// Chat-completions style client: posts a single user message and reads
/// `choices[0].message.content`.
pub struct HttpLlm {
    endpoint: String,
    model: String,
    api_key_env: Option<String>,
    timeout: Duration,
    transport: Arc<dyn Transport>,
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &str) -> Result<String, RagError> {
        let key = credential_from_env(self.api_key_env.as_deref()).map_err(RagError::LlmUnavailable)?;
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let reply = self
            .transport
            .post_json(&self.endpoint, key.as_deref(), &body, self.timeout)
            .map_err(|e| RagError::LlmUnavailable(e.to_string()))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| RagError::LlmUnavailable("reply has no choices[0].message.content".into()))
    }
}
