use super::{EmbedError, EmbedRequest, Embedder, TextEmbedder};
use crate::fnv::{fnv1a64, hex64, Fnv1a64};
use crate::vector::Embedding;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

const MAGIC: &[u8; 4] = b"SEMC";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4;

/// `hex(FNV-1a-64(model_id ++ 0x1F ++ text))`.
pub fn cache_key(model_id: &str, text: &str) -> String {
    let mut h = Fnv1a64::new();
    h.update(model_id.as_bytes()).update(&[0x1f]).update(text.as_bytes());
    hex64(h.finish())
}

pub fn encode_cache_record(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + values.len() * 4 + 8);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    let start = out.len();
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let checksum = fnv1a64(&out[start..]);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

pub fn decode_cache_record(bytes: &[u8]) -> Result<Vec<f32>, EmbedError> {
    let corrupt = |m: &str| EmbedError::CacheCorrupt(m.to_string());
    if bytes.len() < HEADER_LEN + 8 || &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic or truncated header"));
    }
    if bytes[4] != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let dim = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let body_end = HEADER_LEN + dim * 4;
    if bytes.len() != body_end + 8 {
        return Err(corrupt("length does not match dimension"));
    }
    let body = &bytes[HEADER_LEN..body_end];
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("8 bytes"));
    if fnv1a64(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

/// Disk cache in front of an embedder, one file per (model, text) key.
///
/// Vectors are stored as f32, so a miss returns the same rounded values a
/// later hit will; callers never see a difference between the two paths.
pub struct CachedEmbedder<E = Embedder> {
    inner: E,
    dir: PathBuf,
    provider_calls: AtomicUsize,
}

impl<E: TextEmbedder> CachedEmbedder<E> {
    pub fn new(inner: E, dir: impl Into<PathBuf>) -> Result<Self, EmbedError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| EmbedError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            inner,
            dir,
            provider_calls: AtomicUsize::new(0),
        })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Number of times the wrapped embedder was asked for vectors.
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::SeqCst)
    }

    /// Removes every cached record.
    pub fn clear(&self) -> Result<(), EmbedError> {
        let entries = fs::read_dir(&self.dir).map_err(|e| EmbedError::Io(e.to_string()))?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().is_some_and(|x| x == "semc") {
                fs::remove_file(&path).map_err(|e| EmbedError::Io(e.to_string()))?;
            }
        }
        Ok(())
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.semc"))
    }

    fn lookup(&self, key: &str) -> Option<Vec<f32>> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        match decode_cache_record(&bytes) {
            Ok(values) if values.len() == self.inner.dim() => Some(values),
            Ok(values) => {
                log::warn!("cache record {key} has dim {}, ignoring", values.len());
                None
            }
            Err(e) => {
                log::warn!("cache record {key}: {e}; recomputing");
                None
            }
        }
    }

    fn store(&self, key: &str, values: &[f32]) -> Result<(), EmbedError> {
        let path = self.path_for(key);
        let tmp = self.dir.join(format!("{key}.{}.tmp", std::process::id()));
        let io = |e: std::io::Error| EmbedError::Io(format!("{}: {e}", path.display()));
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&encode_cache_record(values)).map_err(io)?;
        drop(f);
        fs::rename(&tmp, &path).map_err(io)
    }

    pub fn cached_embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        // Validate up front so blank input fails the same way on hits.
        EmbedRequest::new(texts.iter().cloned())?;
        let model = self.inner.model_id().to_string();
        let keys: Vec<String> = texts.iter().map(|t| cache_key(&model, t)).collect();
        let mut found: Vec<Option<Vec<f32>>> = keys.iter().map(|k| self.lookup(k)).collect();

        let misses: Vec<usize> = (0..texts.len()).filter(|&i| found[i].is_none()).collect();
        if !misses.is_empty() {
            let miss_texts: Vec<String> = misses.iter().map(|&i| texts[i].clone()).collect();
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            let fresh = self.inner.embed(&miss_texts).map_err(|e| match e {
                EmbedError::EmptyInput { index } => EmbedError::EmptyInput {
                    index: misses[index],
                },
                other => other,
            })?;
            for (&i, emb) in misses.iter().zip(fresh) {
                let values: Vec<f32> = emb.values().iter().map(|&v| v as f32).collect();
                self.store(&keys[i], &values)?;
                found[i] = Some(values);
            }
        }

        found
            .into_iter()
            .map(|v| Ok(Embedding::from_f32(&v.expect("filled"), model.clone())?))
            .collect()
    }
}

impl<E: TextEmbedder> TextEmbedder for CachedEmbedder<E> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        self.cached_embed(texts)
    }
}
