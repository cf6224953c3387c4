//! JSONL corpus ingestion: one `{"doc_id", "text", "metadata"}` object per
//! line, cleaned, chunked, embedded and upserted into the vector index.

use crate::chunking::{chunk_document, ChunkError, ChunkPolicy};
use crate::config::AppConfig;
use crate::embed::{EmbedError, TextEmbedder};
use crate::fnv::Fnv1a64;
use crate::index::{IndexError, IndexRecord, VectorIndex};
use crate::rag::meta;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Provider(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLine {
    /// 1-based line number in the input file.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub docs: usize,
    pub chunks: usize,
    pub skipped: Vec<SkippedLine>,
}

/// Stable record id of the `ordinal`-th chunk of `doc_id`.
pub fn chunk_item_id(doc_id: &str, ordinal: usize) -> u64 {
    Fnv1a64::new()
        .update(doc_id.as_bytes())
        .update(&[0x1f])
        .update(ordinal.to_string().as_bytes())
        .finish()
}

/// Parses JSONL, collecting malformed lines instead of failing. Blank lines
/// are ignored; a repeated `doc_id` keeps the first occurrence.
pub fn read_corpus(reader: impl BufRead) -> std::io::Result<(Vec<CorpusRecord>, Vec<SkippedLine>)> {
    let mut docs = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let skip = |reason: String| SkippedLine { line: i + 1, reason };
        match serde_json::from_str::<CorpusRecord>(&line) {
            Err(e) => skipped.push(skip(format!("malformed record: {e}"))),
            Ok(r) if r.doc_id.is_empty() => skipped.push(skip("empty doc_id".into())),
            Ok(r) if r.text.trim().is_empty() => skipped.push(skip("empty text".into())),
            Ok(r) if !seen.insert(r.doc_id.clone()) => skipped.push(skip(format!("duplicate doc_id {:?}", r.doc_id))),
            Ok(r) => docs.push(r),
        }
    }
    Ok((docs, skipped))
}

/// Chunks and embeds `docs` and upserts them into `index`. Chunks left over
/// from an earlier, longer version of a document are removed. Documents that
/// clean down to nothing are reported in `skipped` with line 0.
pub fn ingest_records(
    index: &mut VectorIndex,
    docs: &[CorpusRecord],
    policy: &ChunkPolicy,
    embedder: &dyn TextEmbedder,
) -> Result<IngestReport, IngestError> {
    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let mut texts = Vec::new();
    let mut fresh: BTreeSet<u64> = BTreeSet::new();
    let mut touched: BTreeSet<&str> = BTreeSet::new();
    for doc in docs {
        let chunked = chunk_document(&doc.doc_id, &doc.text, policy)?;
        if chunked.chunks.is_empty() {
            report.skipped.push(SkippedLine {
                line: 0,
                reason: format!("{:?} has no text after noise removal", doc.doc_id),
            });
            continue;
        }
        report.docs += 1;
        touched.insert(&doc.doc_id);
        for (ordinal, chunk) in chunked.chunks.into_iter().enumerate() {
            let id = chunk_item_id(&doc.doc_id, ordinal);
            fresh.insert(id);
            let mut meta_map = doc.metadata.clone();
            meta_map.insert(meta::DOC_ID.into(), doc.doc_id.clone());
            meta_map.insert(meta::CHUNK_ID.into(), chunk.chunk_id);
            meta_map.insert(meta::CHAR_START.into(), chunk.char_start.to_string());
            meta_map.insert(meta::CHAR_END.into(), chunk.char_end.to_string());
            meta_map.insert(meta::TEXT.into(), chunk.text.clone());
            texts.push(chunk.text);
            records.push((id, meta_map));
        }
    }
    report.chunks = records.len();
    if records.is_empty() {
        return Ok(report);
    }

    let vectors = embedder.embed(&texts)?;

    let stale: Vec<u64> = index
        .ids()
        .filter(|id| !fresh.contains(id))
        .filter(|&id| {
            index
                .metadata(id)
                .and_then(|m| m.get(meta::DOC_ID))
                .is_some_and(|d| touched.contains(d.as_str()))
        })
        .collect();
    for id in stale {
        index.remove(id)?;
    }
    for ((id, metadata), vector) in records.into_iter().zip(vectors) {
        index.upsert(IndexRecord {
            item_id: id,
            vector,
            metadata,
        })?;
    }
    Ok(report)
}

/// Reads `path`, merges it into the index at `cfg.index_path` (created when
/// missing) and saves the result. Nothing is written if any step fails.
pub fn ingest_corpus(path: impl AsRef<Path>, cfg: &AppConfig) -> Result<IngestReport, IngestError> {
    let embedder = cfg.embedder().map_err(|e| match e {
        crate::config::ConfigError::Provider(p) => IngestError::Provider(p),
        other => IngestError::Provider(EmbedError::InvalidConfig(other.to_string())),
    })?;
    let mut index = open_index(cfg)?;
    let report = ingest_file(&mut index, path, &cfg.chunk_policy, embedder.as_ref())?;
    if report.chunks > 0 || !cfg.index_path.exists() {
        index.save(&cfg.index_path)?;
    }
    Ok(report)
}

/// Like [`ingest_corpus`] but leaves persistence to the caller.
pub fn ingest_file(
    index: &mut VectorIndex,
    path: impl AsRef<Path>,
    policy: &ChunkPolicy,
    embedder: &dyn TextEmbedder,
) -> Result<IngestReport, IngestError> {
    let path = path.as_ref();
    let io = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let (docs, mut skipped) = read_corpus(std::io::BufReader::new(file)).map_err(io)?;
    let mut report = ingest_records(index, &docs, policy, embedder)?;
    skipped.append(&mut report.skipped);
    report.skipped = skipped;
    Ok(report)
}

/// The index at `cfg.index_path`, or an empty one when the file is absent.
pub fn open_index(cfg: &AppConfig) -> Result<VectorIndex, IndexError> {
    if cfg.index_path.exists() {
        VectorIndex::load(&cfg.index_path, cfg.search.hnsw.clone())
    } else {
        Ok(VectorIndex::new(cfg.search.hnsw.clone()))
    }
}

/// Groups live records by document, in id order within each document.
pub fn records_by_doc(index: &VectorIndex) -> HashMap<String, Vec<u64>> {
    let mut out: HashMap<String, Vec<u64>> = HashMap::new();
    for id in index.ids() {
        if let Some(doc) = index.metadata(id).and_then(|m| m.get(meta::DOC_ID)) {
            out.entry(doc.clone()).or_default().push(id);
        }
    }
    out
}
