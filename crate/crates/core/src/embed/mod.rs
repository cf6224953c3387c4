//! Text-to-embedding providers.
//!
//! Two backends sit behind one [`Embedder`]: the offline feature-hashing
//! embedder and a remote client for the common `{"model", "input"}` →
//! `{"data": [{"index", "embedding"}]}` HTTP shape. [`CachedEmbedder`]
//! fronts either with an on-disk vector cache.
//!
//! Credentials are never read from configuration files; a config only names
//! the environment variable that holds the key.

mod cache;
mod hash;
mod remote;

pub use cache::{cache_key, decode_cache_record, encode_cache_record, CachedEmbedder};
pub use hash::{hash_embed, hash_features, hash_model_id, hash_tokens, DEFAULT_HASH_DIM};
pub use remote::HttpBackend;

use crate::http::UreqTransport;
use crate::vector::{Embedding, VectorError};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("text at index {index} is empty")]
    EmptyInput { index: usize },
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("provider returned dimension {actual}, expected {expected}")]
    DimensionDrift { expected: usize, actual: usize },
    #[error("cache record corrupt: {0}")]
    CacheCorrupt(String),
    #[error("cache I/O: {0}")]
    Io(String),
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Hash,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Optional for `hash`, where it is always `hash-v1-{dim}`.
    #[serde(default)]
    pub model_id: String,
    pub dim: usize,
    #[serde(default)]
    pub endpoint_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_batch_size() -> usize {
    32
}
fn default_max_parallel() -> usize {
    4
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    2
}

impl ProviderConfig {
    pub fn hash(dim: usize) -> Self {
        Self {
            kind: ProviderKind::Hash,
            model_id: hash_model_id(dim),
            dim,
            endpoint_url: String::new(),
            api_key_env: None,
            batch_size: default_batch_size(),
            max_parallel: default_max_parallel(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }

    pub fn http(model_id: impl Into<String>, dim: usize, endpoint_url: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::Http,
            model_id: model_id.into(),
            endpoint_url: endpoint_url.into(),
            ..Self::hash(dim)
        }
    }

    /// Checks invariants and fills in the hash model id.
    pub fn validated(mut self) -> Result<Self, EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.batch_size == 0 || self.max_parallel == 0 || self.timeout_ms == 0 {
            return bad("batch_size, max_parallel and timeout_ms must be positive");
        }
        match self.kind {
            ProviderKind::Hash => {
                let expected = hash_model_id(self.dim);
                if self.model_id.is_empty() {
                    self.model_id = expected;
                } else if self.model_id != expected {
                    return Err(EmbedError::InvalidConfig(format!(
                        "hash provider model_id must be {expected}"
                    )));
                }
            }
            ProviderKind::Http => {
                if self.endpoint_url.trim().is_empty() {
                    return bad("http provider requires endpoint_url");
                }
                if self.model_id.is_empty() {
                    return bad("http provider requires model_id");
                }
            }
        }
        Ok(self)
    }
}

/// A validated, nonempty list of texts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedRequest {
    texts: Vec<String>,
}

impl EmbedRequest {
    pub fn new<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Result<Self, EmbedError> {
        let texts: Vec<String> = texts.into_iter().map(Into::into).collect();
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput { index: 0 });
        }
        if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyInput { index });
        }
        Ok(Self { texts })
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }
}

/// One round trip to a model. Implementations return raw vectors in input order.
pub trait EmbedBackend: Send + Sync {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Anything that turns texts into embeddings of a fixed model and dimension.
pub trait TextEmbedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<Embedding, EmbedError> {
        let mut out = self.embed(&[text.to_string()])?;
        Ok(out.remove(0))
    }
}

struct HashBackend {
    dim: usize,
}

impl EmbedBackend for HashBackend {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| match hash_embed(t, self.dim) {
                Ok(e) => Ok(e.into_values()),
                Err(EmbedError::EmptyInput { .. }) => Err(EmbedError::EmptyInput { index: i }),
                Err(e) => Err(e),
            })
            .collect()
    }
}

/// Batching, retrying front end over an [`EmbedBackend`].
pub struct Embedder {
    cfg: ProviderConfig,
    backend: Arc<dyn EmbedBackend>,
    retry_backoff: Duration,
    calls: AtomicUsize,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("cfg", &self.cfg)
            .field("calls", &self.calls())
            .finish()
    }
}

impl Embedder {
    pub fn from_config(cfg: ProviderConfig) -> Result<Self, EmbedError> {
        let cfg = cfg.validated()?;
        let backend: Arc<dyn EmbedBackend> = match cfg.kind {
            ProviderKind::Hash => Arc::new(HashBackend { dim: cfg.dim }),
            ProviderKind::Http => Arc::new(HttpBackend::new(&cfg, Arc::new(UreqTransport))),
        };
        Ok(Self::assemble(cfg, backend))
    }

    pub fn with_backend(
        cfg: ProviderConfig,
        backend: Arc<dyn EmbedBackend>,
    ) -> Result<Self, EmbedError> {
        Ok(Self::assemble(cfg.validated()?, backend))
    }

    fn assemble(cfg: ProviderConfig, backend: Arc<dyn EmbedBackend>) -> Self {
        let retry_backoff = match cfg.kind {
            ProviderKind::Hash => Duration::ZERO,
            ProviderKind::Http => Duration::from_millis(200),
        };
        Self {
            cfg,
            backend,
            retry_backoff,
            calls: AtomicUsize::new(0),
        }
    }

    /// Base delay between retries; doubles after each failure.
    pub fn with_retry_backoff(mut self, backoff: Duration) -> Self {
        self.retry_backoff = backoff;
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    /// Number of backend round trips made so far, including retries.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Embeds every text, preserving order. Requests larger than
    /// `batch_size` are split and up to `max_parallel` batches run at once.
    pub fn embed_batch(&self, req: &EmbedRequest) -> Result<Vec<Embedding>, EmbedError> {
        let batches: Vec<&[String]> = req.texts().chunks(self.cfg.batch_size).collect();
        let slots: Vec<Mutex<Option<Result<Vec<Embedding>, EmbedError>>>> =
            batches.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.cfg.max_parallel.min(batches.len()).max(1);

        let work = || loop {
            let i = next.fetch_add(1, Ordering::SeqCst);
            if i >= batches.len() {
                break;
            }
            let offset = i * self.cfg.batch_size;
            let res = self.embed_one_batch(batches[i]).map_err(|e| match e {
                EmbedError::EmptyInput { index } => EmbedError::EmptyInput {
                    index: index + offset,
                },
                other => other,
            });
            *slots[i].lock().expect("slot lock") = Some(res);
        };

        if workers == 1 {
            work();
        } else {
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(work);
                }
            });
        }

        let mut out = Vec::with_capacity(req.texts().len());
        for slot in slots {
            let res = slot
                .into_inner()
                .expect("slot lock")
                .expect("every batch is processed");
            out.extend(res?);
        }
        Ok(out)
    }

    fn embed_one_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        let mut attempt = 0u32;
        loop {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.embed_raw(texts) {
                Ok(raw) => return self.wrap(texts.len(), raw),
                Err(EmbedError::ProviderUnavailable(msg)) => {
                    if attempt >= self.cfg.retries {
                        return Err(EmbedError::ProviderUnavailable(msg));
                    }
                    log::warn!("embedding attempt {} failed: {msg}", attempt + 1);
                    if !self.retry_backoff.is_zero() {
                        std::thread::sleep(self.retry_backoff * 2u32.saturating_pow(attempt));
                    }
                    attempt += 1;
                }
                Err(other) => return Err(other),
            }
        }
    }

    fn wrap(&self, expected: usize, raw: Vec<Vec<f64>>) -> Result<Vec<Embedding>, EmbedError> {
        if raw.len() != expected {
            return Err(EmbedError::ProviderUnavailable(format!(
                "provider returned {} vectors for {expected} texts",
                raw.len()
            )));
        }
        raw.into_iter()
            .map(|values| {
                if values.len() != self.cfg.dim {
                    return Err(EmbedError::DimensionDrift {
                        expected: self.cfg.dim,
                        actual: values.len(),
                    });
                }
                Ok(Embedding::new(values, self.cfg.model_id.clone())?)
            })
            .collect()
    }
}

impl TextEmbedder for Embedder {
    fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        self.embed_batch(&EmbedRequest::new(texts.iter().cloned())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    /// Fails the first `failures` calls, then answers with `[len, index]` vectors.
    struct Flaky {
        failures: Mutex<u32>,
        seen: Mutex<Vec<Vec<String>>>,
    }

    impl Flaky {
        fn new(failures: u32) -> Arc<Self> {
            Arc::new(Self {
                failures: Mutex::new(failures),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl EmbedBackend for Flaky {
        fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
            self.seen.lock().unwrap().push(texts.to_vec());
            let mut f = self.failures.lock().unwrap();
            if *f > 0 {
                *f -= 1;
                return Err(EmbedError::ProviderUnavailable("stub outage".into()));
            }
            Ok(texts
                .iter()
                .map(|t| vec![t.len() as f64, t.parse::<f64>().unwrap_or(1.0)])
                .collect())
        }
    }

    fn stub_cfg() -> ProviderConfig {
        ProviderConfig::http("stub", 2, "http://unused")
    }

    #[test]
    fn hash_provider_is_deterministic() {
        let e = Embedder::from_config(ProviderConfig::hash(256)).unwrap();
        let req = EmbedRequest::new(["hello"]).unwrap();
        let a = e.embed_batch(&req).unwrap();
        let b = e.embed_batch(&req).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].dim(), 256);
        assert!((a[0].length() - 1.0).abs() < 1e-12);
        assert_eq!(a, b);
        for (x, y) in a[0].values().iter().zip(b[0].values()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn blank_text_is_rejected_with_index() {
        assert_eq!(EmbedRequest::new(["a", ""]), Err(EmbedError::EmptyInput { index: 1 }));
        assert_eq!(EmbedRequest::new(["a", "b", "  \t"]), Err(EmbedError::EmptyInput { index: 2 }));
        assert!(EmbedRequest::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn hash_token_free_text_reports_global_index() {
        let mut cfg = ProviderConfig::hash(16);
        cfg.batch_size = 2;
        let e = Embedder::from_config(cfg).unwrap();
        let req = EmbedRequest::new(["a", "b", "c", "?!"]).unwrap();
        assert_eq!(e.embed_batch(&req), Err(EmbedError::EmptyInput { index: 3 }));
    }

    #[test]
    fn order_preserved_across_parallel_batches() {
        let mut cfg = stub_cfg();
        cfg.batch_size = 3;
        cfg.max_parallel = 4;
        let backend = Flaky::new(0);
        let e = Embedder::with_backend(cfg, backend.clone()).unwrap();
        let texts: Vec<String> = (0..50).map(|i| i.to_string()).collect();
        let out = e.embed_batch(&EmbedRequest::new(texts.clone()).unwrap()).unwrap();
        assert_eq!(out.len(), 50);
        for (i, emb) in out.iter().enumerate() {
            assert_eq!(emb.values()[1], i as f64);
            assert_eq!(emb.model_id(), "stub");
        }
        assert_eq!(backend.seen.lock().unwrap().len(), 17);
        assert!(backend.seen.lock().unwrap().iter().all(|b| b.len() <= 3));
    }

    #[test]
    fn retries_then_succeeds() {
        for failures in 0..=2 {
            let e = Embedder::with_backend(stub_cfg(), Flaky::new(failures))
                .unwrap()
                .with_retry_backoff(Duration::ZERO);
            let out = e.embed_batch(&EmbedRequest::new(["7"]).unwrap()).unwrap();
            assert_eq!(out[0].values(), &[1.0, 7.0]);
            assert_eq!(e.calls(), failures as usize + 1);
        }
    }

    #[test]
    fn exhausting_retries_is_unavailable() {
        let e = Embedder::with_backend(stub_cfg(), Flaky::new(3))
            .unwrap()
            .with_retry_backoff(Duration::ZERO);
        let err = e.embed_batch(&EmbedRequest::new(["7"]).unwrap()).unwrap_err();
        assert!(matches!(err, EmbedError::ProviderUnavailable(_)));
        assert_eq!(e.calls(), 3);
    }

    #[test]
    fn wrong_dimension_is_drift() {
        let mut cfg = stub_cfg();
        cfg.dim = 3;
        let e = Embedder::with_backend(cfg, Flaky::new(0)).unwrap();
        assert_eq!(
            e.embed_batch(&EmbedRequest::new(["x"]).unwrap()),
            Err(EmbedError::DimensionDrift { expected: 3, actual: 2 })
        );
    }

    #[test]
    fn config_validation() {
        assert!(ProviderConfig::http("m", 8, "  ").validated().is_err());
        let mut h = ProviderConfig::hash(64);
        h.model_id.clear();
        assert_eq!(h.validated().unwrap().model_id, "hash-v1-64");
        let mut wrong = ProviderConfig::hash(64);
        wrong.model_id = "other".into();
        assert!(wrong.validated().is_err());
        let parsed: ProviderConfig = toml::from_str("kind = \"hash\"\ndim = 32\n").unwrap();
        let parsed = parsed.validated().unwrap();
        assert_eq!(parsed.batch_size, 32);
        assert_eq!(parsed.max_parallel, 4);
        assert_eq!(parsed.timeout_ms, 30_000);
        assert_eq!(parsed.retries, 2);
    }
}
