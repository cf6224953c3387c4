//! Application configuration, read from TOML.
//!
//! ```toml
//! index_path = "data/corpus.semk"
//! cache_dir = "data/cache"
//!
//! [provider]
//! kind = "hash"
//! dim = 256
//!
//! [chunk_policy]
//! strategy = "recursive"
//! max_tokens = 256
//!
//! [search]
//! hnsw_threshold = 50000
//!
//! [rag]
//! top_k = 4
//! min_score = 0.3
//!
//! [server]
//! bind = "127.0.0.1"
//! port = 8080
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use crate::chunking::{ChunkError, ChunkPolicy};
use crate::embed::{CachedEmbedder, EmbedError, Embedder, ProviderConfig};
use crate::index::{HnswParams, HttpReranker, LexicalOverlap, RerankScorer};
use crate::rag::{RagConfig, RagError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Provider(#[from] EmbedError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Rag(#[from] RagError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankKind {
    #[default]
    Lexical,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankConfig {
    pub kind: RerankKind,
    pub endpoint_url: Option<String>,
    pub timeout_ms: u64,
    /// Number of retrieved hits handed to the scorer.
    pub top_m: usize,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            kind: RerankKind::Lexical,
            endpoint_url: None,
            timeout_ms: 10_000,
            top_m: 50,
        }
    }
}

impl RerankConfig {
    pub fn scorer(&self) -> Result<Box<dyn RerankScorer>, ConfigError> {
        match self.kind {
            RerankKind::Lexical => Ok(Box::new(LexicalOverlap)),
            RerankKind::Http => {
                let url = self
                    .endpoint_url
                    .as_deref()
                    .filter(|u| !u.is_empty())
                    .ok_or_else(|| ConfigError::Invalid("http reranker needs endpoint_url".into()))?;
                Ok(Box::new(HttpReranker::new(url, Duration::from_millis(self.timeout_ms))))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Live-record count above which queries use HNSW instead of a full scan.
    pub hnsw_threshold: usize,
    pub hnsw: HnswParams,
    pub rerank: RerankConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            hnsw_threshold: 50_000,
            hnsw: HnswParams::default(),
            rerank: RerankConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub provider: ProviderConfig,
    pub chunk_policy: ChunkPolicy,
    pub index_path: PathBuf,
    /// Embedding cache; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    pub search: SearchConfig,
    pub rag: RagConfig,
    pub server: ServerConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            provider: ProviderConfig::hash(crate::embed::DEFAULT_HASH_DIM),
            chunk_policy: ChunkPolicy::default(),
            index_path: PathBuf::from("semlens.semk"),
            cache_dir: Some(PathBuf::from(".semlens-cache")),
            search: SearchConfig::default(),
            rag: RagConfig::default(),
            server: ServerConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_at(text, Path::new("<inline>"))
    }

    fn parse_at(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        cfg.validated()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse_at(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.index_path = base.join(&cfg.index_path);
        cfg.cache_dir = cfg.cache_dir.map(|d| base.join(d));
        Ok(cfg)
    }

    /// Checks every section and fills derived fields.
    pub fn validated(mut self) -> Result<Self, ConfigError> {
        self.provider = self.provider.validated()?;
        self.chunk_policy.validate()?;
        self.rag.hnsw_threshold = self.search.hnsw_threshold;
        self.rag.validate()?;
        let h = &self.search.hnsw;
        if h.m < 2 || h.ef_construction == 0 || h.ef_search == 0 {
            return Err(ConfigError::Invalid("hnsw needs m >= 2 and positive ef values".into()));
        }
        if self.search.rerank.top_m == 0 {
            return Err(ConfigError::Invalid("rerank top_m must be positive".into()));
        }
        if self.index_path.as_os_str().is_empty() {
            return Err(ConfigError::Invalid("index_path is empty".into()));
        }
        Ok(self)
    }

    /// The configured provider, wrapped in the on-disk cache when one is set.
    pub fn embedder(&self) -> Result<Box<dyn crate::TextEmbedder>, ConfigError> {
        let base = Embedder::from_config(self.provider.clone())?;
        Ok(match &self.cache_dir {
            Some(dir) => Box::new(CachedEmbedder::new(base, dir)?),
            None => Box::new(base),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::ChunkStrategy;
    use crate::embed::ProviderKind;

    #[test]
    fn empty_file_gives_defaults() {
        let c = AppConfig::parse("").unwrap();
        assert_eq!(c.server.port, 8080);
        assert_eq!(c.provider.model_id, "hash-v1-256");
        assert_eq!(c.search.hnsw_threshold, 50_000);
        assert_eq!(c.rag.top_k, 4);
    }

    #[test]
    fn sections_override() {
        let c = AppConfig::parse(
            r#"
            index_path = "x.semk"
            [provider]
            kind = "hash"
            dim = 64
            [chunk_policy]
            strategy = "sliding"
            max_tokens = 50
            overlap_tokens = 10
            [search]
            hnsw_threshold = 10
            [search.hnsw]
            m = 8
            [rag]
            min_score = 0.1
            [server]
            port = 9000
            "#,
        )
        .unwrap();
        assert_eq!(c.provider.kind, ProviderKind::Hash);
        assert_eq!(c.provider.model_id, "hash-v1-64");
        assert_eq!(c.chunk_policy.strategy, ChunkStrategy::Sliding);
        assert_eq!(c.search.hnsw.m, 8);
        assert_eq!(c.search.hnsw.ef_search, 100);
        assert_eq!(c.rag.hnsw_threshold, 10);
        assert_eq!(c.rag.min_score, 0.1);
        assert_eq!(c.server.port, 9000);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(AppConfig::parse("bogus = 1"), Err(ConfigError::Parse { .. })));
        assert!(AppConfig::parse("[provider]\nkind = \"http\"\ndim = 8\n").is_err());
        assert!(AppConfig::parse("[chunk_policy]\nmax_tokens = 0\n").is_err());
        assert!(AppConfig::parse("[rag]\nprompt_template = \"{context}\"\n").is_err());
        assert!(AppConfig::parse("[search.hnsw]\nm = 1\n").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("semlens.toml");
        std::fs::write(&path, "index_path = \"idx.semk\"\ncache_dir = \"cache\"\n").unwrap();
        let c = AppConfig::load(&path).unwrap();
        assert_eq!(c.index_path, dir.path().join("idx.semk"));
        assert_eq!(c.cache_dir, Some(dir.path().join("cache")));
        assert!(matches!(
            AppConfig::load(dir.path().join("missing.toml")),
            Err(ConfigError::Io { .. })
        ));
    }

    #[test]
    fn http_rerank_needs_url() {
        let r = RerankConfig {
            kind: RerankKind::Http,
            ..RerankConfig::default()
        };
        assert!(r.scorer().is_err());
        assert_eq!(RerankConfig::default().scorer().unwrap().name(), "lexical-overlap");
    }
}
