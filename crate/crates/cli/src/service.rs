//! Request handling shared by the CLI subcommands and the HTTP endpoints.

use crate::display::format_percent;
use semlens_core::analysis::{
    best_fit_classify, build_categories, interpret, kmeans_cluster, load_category_specs, AnalysisError, BandScale,
    CentroidMode, KMeansConfig,
};
use semlens_core::config::{AppConfig, ConfigError};
use semlens_core::index::{rerank, IndexError, RerankCandidate, RerankScorer, SearchMode, VectorIndex};
use semlens_core::ingest::{ingest_file, open_index, IngestError, IngestReport};
use semlens_core::rag::{self, meta, LlmClient, RagError};
use semlens_core::tsne::{tsne_embed, LayoutRow, TsneConfig, TsneError};
use semlens_core::{EmbedError, Embedder, Embedding, TextEmbedder};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use thiserror::Error;

pub const DEFAULT_TOP_N: usize = 20;
pub const MAX_TOP_N: usize = 1000;
/// Exact t-SNE is quadratic; larger corpora should be sampled first.
pub const MAX_TSNE_POINTS: usize = 5000;
/// Metadata key used to colour t-SNE points.
pub const LABEL_KEY: &str = "label";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    ModelMismatch(String),
    #[error("{0}")]
    ProviderUnavailable(String),
    #[error("{0}")]
    LlmUnavailable(String),
    #[error("the index is being rebuilt; retry shortly")]
    Reindexing,
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::ModelMismatch(_) => "model_mismatch",
            ServiceError::ProviderUnavailable(_) => "provider_unavailable",
            ServiceError::LlmUnavailable(_) => "llm_unavailable",
            ServiceError::Reindexing => "reindexing",
            ServiceError::Internal(_) => "internal",
        }
    }
}

impl From<EmbedError> for ServiceError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::EmptyInput { .. } => ServiceError::BadRequest(e.to_string()),
            EmbedError::InvalidConfig(_) => ServiceError::Internal(e.to_string()),
            other => ServiceError::ProviderUnavailable(other.to_string()),
        }
    }
}

impl From<IndexError> for ServiceError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::ModelMismatch { .. } => ServiceError::ModelMismatch(e.to_string()),
            IndexError::ScorerUnavailable(_) => ServiceError::ProviderUnavailable(e.to_string()),
            IndexError::InvalidK | IndexError::InvalidRerank(_) | IndexError::ZeroVector => {
                ServiceError::BadRequest(e.to_string())
            }
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<RagError> for ServiceError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::ModelMismatch { .. } => ServiceError::ModelMismatch(e.to_string()),
            RagError::LlmUnavailable(_) => ServiceError::LlmUnavailable(e.to_string()),
            RagError::Embed(inner) => inner.into(),
            RagError::Index(inner) => inner.into(),
            RagError::TemplateInvalid(_) | RagError::InvalidConfig(_) => ServiceError::Internal(e.to_string()),
        }
    }
}

impl From<AnalysisError> for ServiceError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Embed(inner) => inner.into(),
            other => ServiceError::BadRequest(other.to_string()),
        }
    }
}

impl From<TsneError> for ServiceError {
    fn from(e: TsneError) -> Self {
        match e {
            TsneError::Io { .. } => ServiceError::Internal(e.to_string()),
            other => ServiceError::BadRequest(other.to_string()),
        }
    }
}

impl From<IngestError> for ServiceError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => ServiceError::BadRequest(e.to_string()),
            IngestError::Provider(inner) => ServiceError::ProviderUnavailable(inner.to_string()),
            IngestError::Index(inner) => inner.into(),
            IngestError::Chunk(inner) => ServiceError::Internal(inner.to_string()),
        }
    }
}

impl From<ConfigError> for ServiceError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Provider(inner) => inner.into(),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default)]
    pub rerank: bool,
}

fn default_top_n() -> usize {
    DEFAULT_TOP_N
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub rank: usize,
    /// Decimal string: ids use all 64 bits.
    pub item_id: String,
    pub doc_id: String,
    pub chunk_id: String,
    /// Raw cosine similarity.
    pub score: f64,
    /// `score` as a percentage, for display only.
    pub display: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rerank_score: Option<f64>,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub mode: String,
    pub reranked: bool,
    pub results: Vec<SearchHit>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ClassifyRequest {
    pub text: String,
    pub categories_file: PathBuf,
    #[serde(default)]
    pub scale: Option<String>,
    #[serde(default)]
    pub centroid: CentroidMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category_id: String,
    pub score: f64,
    pub display: String,
    pub band: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub category_id: String,
    pub score: f64,
    pub display: String,
    pub band: String,
    pub scale: BandScale,
    pub margin: f64,
    pub runner_up: Option<String>,
    pub tie: bool,
    pub scores: Vec<CategoryScore>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ClusterRequest {
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub item_id: String,
    pub doc_id: String,
    pub chunk_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGroup {
    pub cluster: usize,
    pub size: usize,
    /// Closest to the centroid first.
    pub members: Vec<ClusterMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResponse {
    pub k: usize,
    pub inertia: f64,
    pub iterations: usize,
    pub clusters: Vec<ClusterGroup>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TsneRequest {
    #[serde(default = "default_perplexity")]
    pub perplexity: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub iterations: Option<usize>,
}

fn default_perplexity() -> f64 {
    TsneConfig::default().perplexity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneResponse {
    /// Perplexity actually used after clamping to the point count.
    pub perplexity: f64,
    pub kl_divergence: Option<f64>,
    pub points: Vec<LayoutRow>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AskRequest {
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskSource {
    pub doc_id: String,
    pub chunk_id: String,
    pub score: f64,
    pub display: String,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub answer: String,
    pub sources: Vec<AskSource>,
    pub prompt_used: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct IngestRequest {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub records: usize,
    pub model_id: Option<String>,
}

/// Loaded configuration, providers and index. Readers share the index; a
/// rebuild swaps in a fresh copy and rejects work while it runs.
pub struct Service {
    cfg: AppConfig,
    ingest_embedder: Box<dyn TextEmbedder>,
    query_embedder: Embedder,
    llm: Arc<dyn LlmClient>,
    reranker: Box<dyn RerankScorer>,
    index: RwLock<Arc<VectorIndex>>,
    reindexing: AtomicBool,
}

/// Clears the rebuild flag when dropped.
pub struct ReindexGuard<'a>(&'a AtomicBool);

impl Drop for ReindexGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

impl Service {
    pub fn open(cfg: AppConfig) -> Result<Self, ServiceError> {
        let index = open_index(&cfg)?;
        Self::with_index(cfg, index)
    }

    pub fn with_index(cfg: AppConfig, index: VectorIndex) -> Result<Self, ServiceError> {
        let llm = cfg.rag.llm.build()?;
        Self::with_parts(cfg, index, llm)
    }

    pub fn with_parts(cfg: AppConfig, index: VectorIndex, llm: Arc<dyn LlmClient>) -> Result<Self, ServiceError> {
        Ok(Self {
            ingest_embedder: cfg.embedder()?,
            query_embedder: Embedder::from_config(cfg.provider.clone())?,
            reranker: cfg.search.rerank.scorer()?,
            llm,
            index: RwLock::new(Arc::new(index)),
            reindexing: AtomicBool::new(false),
            cfg,
        })
    }

    pub fn config(&self) -> &AppConfig {
        &self.cfg
    }

    pub fn index(&self) -> Arc<VectorIndex> {
        self.index.read().expect("index lock poisoned").clone()
    }

    pub fn is_reindexing(&self) -> bool {
        self.reindexing.load(Ordering::SeqCst)
    }

    /// Marks a rebuild in progress; `None` if one is already running.
    pub fn begin_reindex(&self) -> Option<ReindexGuard<'_>> {
        self.reindexing
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .ok()
            .map(|_| ReindexGuard(&self.reindexing))
    }

    fn reader(&self) -> Result<Arc<VectorIndex>, ServiceError> {
        if self.is_reindexing() {
            return Err(ServiceError::Reindexing);
        }
        Ok(self.index())
    }

    pub fn health(&self) -> Health {
        let index = self.index();
        Health {
            status: "ok".into(),
            records: index.len(),
            model_id: index.model_id().map(str::to_string),
        }
    }

    fn check_model(&self, index: &VectorIndex) -> Result<(), ServiceError> {
        match index.model_id() {
            Some(m) if m != self.query_embedder.model_id() => Err(ServiceError::ModelMismatch(format!(
                "index was built with {m:?} but the provider is {:?}",
                self.query_embedder.model_id()
            ))),
            _ => Ok(()),
        }
    }

    pub fn search(&self, req: &SearchRequest) -> Result<SearchResponse, ServiceError> {
        if req.query.trim().is_empty() {
            return Err(ServiceError::BadRequest("query is empty".into()));
        }
        if req.top_n == 0 || req.top_n > MAX_TOP_N {
            return Err(ServiceError::BadRequest(format!("top_n must be in 1..={MAX_TOP_N}")));
        }
        let index = self.reader()?;
        self.check_model(&index)?;
        let mode = index.mode_for(self.cfg.search.hnsw_threshold);
        let mode_name = match mode {
            SearchMode::Flat => "flat",
            SearchMode::Hnsw => "hnsw",
        };
        if index.is_empty() {
            return Ok(SearchResponse {
                query: req.query.clone(),
                mode: mode_name.into(),
                reranked: req.rerank,
                results: Vec::new(),
            });
        }
        let q = self.query_embedder.embed_one(&req.query)?;
        let fetch = if req.rerank {
            req.top_n.max(self.cfg.search.rerank.top_m)
        } else {
            req.top_n
        };
        let hits = index.search(&q, fetch, mode)?;
        let scored: Vec<(u64, f64, Option<f64>)> = if req.rerank && !hits.is_empty() {
            let candidates: Vec<RerankCandidate> = hits
                .iter()
                .map(|h| RerankCandidate {
                    hit: h.clone(),
                    text: meta_field(&index, h.item_id, meta::TEXT),
                })
                .collect();
            rerank(&req.query, &candidates, self.reranker.as_ref(), req.top_n)?
                .into_iter()
                .map(|r| (r.item_id, r.retrieval_score, Some(r.rerank_score)))
                .collect()
        } else {
            hits.iter().map(|h| (h.item_id, h.score, None)).collect()
        };
        let results = scored
            .into_iter()
            .enumerate()
            .map(|(i, (id, score, rerank_score))| {
                let all = index.metadata(id).cloned().unwrap_or_default();
                SearchHit {
                    rank: i + 1,
                    item_id: id.to_string(),
                    doc_id: all.get(meta::DOC_ID).cloned().unwrap_or_default(),
                    chunk_id: all.get(meta::CHUNK_ID).cloned().unwrap_or_else(|| id.to_string()),
                    score,
                    display: format_percent(score),
                    rerank_score,
                    text: all.get(meta::TEXT).cloned().unwrap_or_default(),
                    metadata: public_metadata(all),
                }
            })
            .collect();
        Ok(SearchResponse {
            query: req.query.clone(),
            mode: mode_name.into(),
            reranked: req.rerank,
            results,
        })
    }

    pub fn classify(&self, req: &ClassifyRequest) -> Result<ClassifyResponse, ServiceError> {
        if req.text.trim().is_empty() {
            return Err(ServiceError::BadRequest("text is empty".into()));
        }
        if self.is_reindexing() {
            return Err(ServiceError::Reindexing);
        }
        let scale: BandScale = match &req.scale {
            Some(s) => s.parse()?,
            None => BandScale::Cohen,
        };
        let specs = load_category_specs(&req.categories_file)?;
        let categories = build_categories(&specs, &self.query_embedder, req.centroid)?;
        let doc = self.query_embedder.embed_one(&req.text)?;
        let fit = best_fit_classify(&doc, &categories)?;
        let band = |s: f64| interpret(s, scale).map(str::to_string);
        Ok(ClassifyResponse {
            band: band(fit.score)?,
            display: format_percent(fit.score),
            scores: fit
                .scores
                .iter()
                .map(|(id, s)| {
                    Ok(CategoryScore {
                        category_id: id.clone(),
                        score: *s,
                        display: format_percent(*s),
                        band: band(*s)?,
                    })
                })
                .collect::<Result<_, AnalysisError>>()?,
            category_id: fit.category_id,
            score: fit.score,
            scale,
            margin: fit.margin,
            runner_up: fit.runner_up,
            tie: fit.tie,
        })
    }

    fn live_vectors(index: &VectorIndex) -> Vec<(u64, Embedding)> {
        index.ids().filter_map(|id| index.get(id).map(|r| (id, r.vector))).collect()
    }

    pub fn cluster(&self, req: &ClusterRequest) -> Result<ClusterResponse, ServiceError> {
        let index = self.reader()?;
        let items = Self::live_vectors(&index);
        let mut cfg = KMeansConfig::new(req.k, req.seed);
        if let Some(r) = req.restarts {
            cfg.restarts = r;
        }
        let result = kmeans_cluster(&items, &cfg)?;
        let mut groups: Vec<ClusterGroup> = (0..req.k)
            .map(|cluster| ClusterGroup {
                cluster,
                size: 0,
                members: Vec::new(),
            })
            .collect();
        for a in &result.assignments {
            let g = &mut groups[a.cluster];
            g.size += 1;
            g.members.push(ClusterMember {
                item_id: a.item_id.to_string(),
                doc_id: meta_field(&index, a.item_id, meta::DOC_ID),
                chunk_id: meta_field(&index, a.item_id, meta::CHUNK_ID),
                distance: a.distance_to_centroid,
            });
        }
        for g in &mut groups {
            g.members
                .sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.item_id.cmp(&b.item_id)));
        }
        Ok(ClusterResponse {
            k: req.k,
            inertia: result.inertia,
            iterations: result.iterations,
            clusters: groups,
        })
    }

    pub fn tsne(&self, req: &TsneRequest) -> Result<TsneResponse, ServiceError> {
        let index = self.reader()?;
        let items = Self::live_vectors(&index);
        if items.len() > MAX_TSNE_POINTS {
            return Err(ServiceError::BadRequest(format!(
                "{} points exceed the t-SNE limit of {MAX_TSNE_POINTS}",
                items.len()
            )));
        }
        let mut cfg = TsneConfig {
            perplexity: req.perplexity,
            seed: req.seed,
            ..TsneConfig::default()
        };
        if let Some(it) = req.iterations {
            cfg.iterations = it;
        }
        let points: Vec<Embedding> = items.iter().map(|(_, v)| v.clone()).collect();
        let layout = tsne_embed(&points, &cfg)?
            .with_item_ids(items.iter().map(|(id, _)| {
                index
                    .metadata(*id)
                    .and_then(|m| m.get(meta::CHUNK_ID))
                    .cloned()
                    .unwrap_or_else(|| id.to_string())
            }))
            .with_labels(items.iter().map(|(id, _)| meta_field(&index, *id, LABEL_KEY)));
        Ok(TsneResponse {
            perplexity: layout.perplexity,
            kl_divergence: layout.kl_trace.last().copied(),
            points: layout.rows(),
        })
    }

    pub fn ask(&self, req: &AskRequest) -> Result<AskResponse, ServiceError> {
        if req.question.trim().is_empty() {
            return Err(ServiceError::BadRequest("question is empty".into()));
        }
        let index = self.reader()?;
        let answer = rag::ask(&req.question, &index, &self.query_embedder, self.llm.as_ref(), &self.cfg.rag)?;
        Ok(AskResponse {
            answer: answer.answer_text,
            sources: answer
                .sources
                .into_iter()
                .map(|s| AskSource {
                    display: format_percent(s.score),
                    doc_id: s.doc_id,
                    chunk_id: s.chunk_id,
                    score: s.score,
                    excerpt: s.text,
                })
                .collect(),
            prompt_used: answer.prompt_used,
        })
    }

    /// Ingests a JSONL file into a copy of the index, persists it and swaps
    /// it in. Other requests are rejected until this returns.
    pub fn ingest(&self, path: &std::path::Path) -> Result<IngestReport, ServiceError> {
        let _guard = self.begin_reindex().ok_or(ServiceError::Reindexing)?;
        let mut next = (*self.index()).clone();
        let report = ingest_file(&mut next, path, &self.cfg.chunk_policy, self.ingest_embedder.as_ref())?;
        next.save(&self.cfg.index_path)?;
        *self.index.write().expect("index lock poisoned") = Arc::new(next);
        Ok(report)
    }
}

fn meta_field(index: &VectorIndex, id: u64, key: &str) -> String {
    index
        .metadata(id)
        .and_then(|m| m.get(key))
        .cloned()
        .unwrap_or_default()
}

/// Document metadata without the fields the index adds for its own use.
fn public_metadata(mut all: BTreeMap<String, String>) -> BTreeMap<String, String> {
    for k in [meta::TEXT, meta::DOC_ID, meta::CHUNK_ID, meta::CHAR_START, meta::CHAR_END] {
        all.remove(k);
    }
    all
}
