//! Id-addressed vector store with exact and HNSW search, a binary file
//! format and a retrieve-then-rerank stage.
//!
//! Vectors are stored unit-normalised as `f32`; similarities are accumulated
//! in `f64`. Removal tombstones a record: it disappears from results but its
//! graph node keeps routing traffic until the index is rebuilt.

mod hnsw;
mod persist;
mod rerank;

pub use hnsw::{HnswParams, MAX_LEVEL};
pub use persist::{INDEX_MAGIC, INDEX_VERSION};
pub use rerank::{
    jaccard_overlap, rerank, HttpReranker, LexicalOverlap, RerankCandidate, RerankScorer,
    RerankedHit,
};

use crate::vector::{rank_scored, Embedding, SimilarityResult, VectorError, ZERO_NORM_EPS};
use hnsw::{HnswGraph, Similarity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("item {0} already present")]
    DuplicateId(u64),
    #[error("item {0} not found")]
    NotFound(u64),
    #[error("dimension mismatch: index holds {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("model mismatch: index built with {index:?}, got {other:?}")]
    ModelMismatch { index: String, other: String },
    #[error("zero vector")]
    ZeroVector,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corrupt index file: {0}")]
    CorruptFile(String),
    #[error("unsupported index file version {0}")]
    VersionUnsupported(u8),
    #[error("reranker unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("invalid rerank request: {0}")]
    InvalidRerank(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<VectorError> for IndexError {
    fn from(e: VectorError) -> Self {
        match e {
            VectorError::DimensionMismatch { expected, actual } => {
                IndexError::DimensionMismatch { expected, actual }
            }
            _ => IndexError::ZeroVector,
        }
    }
}

/// What callers insert and get back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub item_id: u64,
    pub vector: Embedding,
    /// Source id, character span, display text and similar.
    pub metadata: BTreeMap<String, String>,
}

impl IndexRecord {
    pub fn new(item_id: u64, vector: Embedding) -> Self {
        Self {
            item_id,
            vector,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Slot {
    pub id: u64,
    pub original_norm: f32,
    pub metadata: BTreeMap<String, String>,
    pub tombstone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Flat,
    Hnsw,
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: Option<usize>,
    model_id: Option<String>,
    params: HnswParams,
    slots: Vec<Slot>,
    /// Flat `slots.len() * dim` array of unit vectors.
    data: Vec<f32>,
    /// f64 length of each stored f32 vector (1 up to rounding).
    lengths: Vec<f64>,
    by_id: HashMap<u64, u32>,
    graph: HnswGraph,
    rng: ChaCha8Rng,
    live: usize,
}

impl Default for VectorIndex {
    fn default() -> Self {
        Self::new(HnswParams::default())
    }
}

/// Similarity of stored slots to an external unit query.
struct QuerySim<'a> {
    index: &'a VectorIndex,
    query: &'a [f64],
    query_len: f64,
}

impl Similarity for QuerySim<'_> {
    fn to_query(&self, slot: u32) -> f64 {
        self.index.score_slot(self.query, self.query_len, slot)
    }
    fn between(&self, a: u32, b: u32) -> f64 {
        self.index.score_pair(a, b)
    }
}

/// Similarity to a stored slot, used while linking it.
struct SlotSim<'a> {
    index: &'a VectorIndex,
    slot: u32,
}

impl Similarity for SlotSim<'_> {
    fn to_query(&self, other: u32) -> f64 {
        self.index.score_pair(self.slot, other)
    }
    fn between(&self, a: u32, b: u32) -> f64 {
        self.index.score_pair(a, b)
    }
}

impl VectorIndex {
    pub fn new(params: HnswParams) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Self {
            dim: None,
            model_id: None,
            params,
            slots: Vec::new(),
            data: Vec::new(),
            lengths: Vec::new(),
            by_id: HashMap::new(),
            graph: HnswGraph::default(),
            rng,
            live: 0,
        }
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    /// Fixed by the first insert.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Model of the first inserted vector; later inserts must agree.
    pub fn model_id(&self) -> Option<&str> {
        self.model_id.as_deref()
    }

    /// Live (non-tombstoned) records.
    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn contains(&self, item_id: u64) -> bool {
        self.by_id
            .get(&item_id)
            .is_some_and(|&s| !self.slots[s as usize].tombstone)
    }

    /// Live ids in insertion order.
    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.slots.iter().filter(|s| !s.tombstone).map(|s| s.id)
    }

    /// Layer assigned to each slot, in insertion order (tombstones included).
    pub fn levels(&self) -> Vec<usize> {
        (0..self.slots.len() as u32).map(|s| self.graph.level_of(s)).collect()
    }

    fn vector(&self, slot: u32) -> &[f32] {
        let d = self.dim.unwrap_or(0);
        let start = slot as usize * d;
        &self.data[start..start + d]
    }

    fn score_slot(&self, query: &[f64], query_len: f64, slot: u32) -> f64 {
        let v = self.vector(slot);
        let mut acc = 0.0f64;
        for (a, b) in query.iter().zip(v) {
            acc += a * f64::from(*b);
        }
        (acc / (query_len * self.lengths[slot as usize])).clamp(-1.0, 1.0)
    }

    fn score_pair(&self, a: u32, b: u32) -> f64 {
        let (va, vb) = (self.vector(a), self.vector(b));
        let mut acc = 0.0f64;
        for (x, y) in va.iter().zip(vb) {
            acc += f64::from(*x) * f64::from(*y);
        }
        (acc / (self.lengths[a as usize] * self.lengths[b as usize])).clamp(-1.0, 1.0)
    }

    fn check_vector(&self, v: &Embedding) -> Result<(), IndexError> {
        if let Some(d) = self.dim {
            if v.dim() != d {
                return Err(IndexError::DimensionMismatch {
                    expected: d,
                    actual: v.dim(),
                });
            }
        }
        if let Some(m) = &self.model_id {
            if m != v.model_id() {
                return Err(IndexError::ModelMismatch {
                    index: m.clone(),
                    other: v.model_id().to_string(),
                });
            }
        }
        Ok(())
    }

    fn unit_f32(v: &Embedding) -> Result<(Vec<f32>, f64), IndexError> {
        let unit = v.normalize()?;
        let stored: Vec<f32> = unit.values().iter().map(|&x| x as f32).collect();
        let len = stored.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if len < ZERO_NORM_EPS {
            return Err(IndexError::ZeroVector);
        }
        Ok((stored, len))
    }

    fn draw_level(&mut self) -> usize {
        let u = loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                break u;
            }
        };
        self.params.level_for(u)
    }

    /// Inserts a new record and links it into the graph.
    pub fn add(&mut self, record: IndexRecord) -> Result<(), IndexError> {
        if self.by_id.contains_key(&record.item_id) {
            return Err(IndexError::DuplicateId(record.item_id));
        }
        self.check_vector(&record.vector)?;
        let (stored, len) = Self::unit_f32(&record.vector)?;
        if self.dim.is_none() {
            self.dim = Some(stored.len());
            self.model_id = Some(record.vector.model_id().to_string());
        }

        let level = self.draw_level();
        let slot = self.graph.push_node(level);
        self.data.extend_from_slice(&stored);
        self.lengths.push(len);
        self.slots.push(Slot {
            id: record.item_id,
            original_norm: record.vector.norm() as f32,
            metadata: record.metadata,
            tombstone: false,
        });
        self.by_id.insert(record.item_id, slot);
        self.live += 1;

        let mut graph = std::mem::take(&mut self.graph);
        graph.connect(&SlotSim { index: self, slot }, slot, &self.params);
        self.graph = graph;
        Ok(())
    }

    /// Adds, or replaces the vector and metadata of an existing (possibly
    /// tombstoned) id in place. A changed vector is re-linked at its old level.
    pub fn upsert(&mut self, record: IndexRecord) -> Result<(), IndexError> {
        let Some(&slot) = self.by_id.get(&record.item_id) else {
            return self.add(record);
        };
        self.check_vector(&record.vector)?;
        let (stored, len) = Self::unit_f32(&record.vector)?;
        let d = stored.len();
        let s = slot as usize;
        let changed = self.data[s * d..(s + 1) * d] != stored[..];
        let entry = &mut self.slots[s];
        if entry.tombstone {
            entry.tombstone = false;
            self.live += 1;
        }
        entry.original_norm = record.vector.norm() as f32;
        entry.metadata = record.metadata;
        if changed {
            self.data[s * d..(s + 1) * d].copy_from_slice(&stored);
            self.lengths[s] = len;
            let mut graph = std::mem::take(&mut self.graph);
            for layer in graph.links[s].iter_mut() {
                layer.clear();
            }
            graph.connect(&SlotSim { index: self, slot }, slot, &self.params);
            self.graph = graph;
        }
        Ok(())
    }

    /// Tombstones a record.
    pub fn remove(&mut self, item_id: u64) -> Result<(), IndexError> {
        match self.by_id.get(&item_id) {
            Some(&s) if !self.slots[s as usize].tombstone => {
                self.slots[s as usize].tombstone = true;
                self.live -= 1;
                Ok(())
            }
            _ => Err(IndexError::NotFound(item_id)),
        }
    }

    /// Stored (unit, f32-precision) vector with its original norm and metadata.
    pub fn get(&self, item_id: u64) -> Option<IndexRecord> {
        let &slot = self.by_id.get(&item_id)?;
        let s = &self.slots[slot as usize];
        if s.tombstone {
            return None;
        }
        let values = self.vector(slot).iter().map(|&x| f64::from(x)).collect();
        let vector = Embedding::with_norm(
            values,
            self.model_id.clone().unwrap_or_default(),
            f64::from(s.original_norm),
        )
        .ok()?;
        Some(IndexRecord {
            item_id,
            vector,
            metadata: s.metadata.clone(),
        })
    }

    pub fn metadata(&self, item_id: u64) -> Option<&BTreeMap<String, String>> {
        let &slot = self.by_id.get(&item_id)?;
        let s = &self.slots[slot as usize];
        (!s.tombstone).then_some(&s.metadata)
    }

    fn prepare_query<'a>(&'a self, query: &'a Embedding, k: usize) -> Result<Option<QuerySim<'a>>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let query_len = query.length();
        if query_len < ZERO_NORM_EPS {
            return Err(IndexError::ZeroVector);
        }
        let Some(dim) = self.dim else {
            return Ok(None);
        };
        if query.dim() != dim {
            return Err(IndexError::DimensionMismatch {
                expected: dim,
                actual: query.dim(),
            });
        }
        Ok(Some(QuerySim {
            index: self,
            query: query.values(),
            query_len,
        }))
    }

    /// Exact top-k by cosine; ties go to the smaller id.
    pub fn search_flat(&self, query: &Embedding, k: usize) -> Result<Vec<SimilarityResult>, IndexError> {
        let Some(sim) = self.prepare_query(query, k)? else {
            return Ok(Vec::new());
        };
        let scored = (0..self.slots.len() as u32)
            .filter(|&s| !self.slots[s as usize].tombstone)
            .map(|s| (self.slots[s as usize].id, sim.to_query(s)))
            .collect();
        Ok(rank_scored(scored, k))
    }

    /// Approximate top-k via the graph. The beam is widened to `k` when
    /// `ef_search` is smaller.
    pub fn search_hnsw(
        &self,
        query: &Embedding,
        k: usize,
        ef_search: usize,
    ) -> Result<Vec<SimilarityResult>, IndexError> {
        let Some(sim) = self.prepare_query(query, k)? else {
            return Ok(Vec::new());
        };
        let beam = self.graph.search(&sim, ef_search.max(k));
        let scored = beam
            .into_iter()
            .filter(|s| !self.slots[s.slot as usize].tombstone)
            .map(|s| (self.slots[s.slot as usize].id, s.sim))
            .collect();
        Ok(rank_scored(scored, k))
    }

    /// Flat search up to `hnsw_threshold` live records, HNSW beyond.
    pub fn mode_for(&self, hnsw_threshold: usize) -> SearchMode {
        if self.live > hnsw_threshold {
            SearchMode::Hnsw
        } else {
            SearchMode::Flat
        }
    }

    pub fn search(&self, query: &Embedding, k: usize, mode: SearchMode) -> Result<Vec<SimilarityResult>, IndexError> {
        match mode {
            SearchMode::Flat => self.search_flat(query, k),
            SearchMode::Hnsw => self.search_hnsw(query, k, self.params.ef_search),
        }
    }
}
