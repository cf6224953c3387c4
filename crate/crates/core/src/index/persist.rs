//! Binary index file.
//!
//! ```text
//! "SEMK" u8 version u32 dim u64 count
//! count x { u64 id, u8 tombstone, f32[dim], f32 original_norm, u32 len, JSON metadata }
//! u64 entry id (u64::MAX when empty), u8 max_layer
//! count x { u8 level, (level + 1) x { u32 n, u64[n] neighbour ids } }
//! u64 FNV-1a of everything above
//! ```
//! All integers and floats little-endian. The model id travels inside each
//! record's metadata under [`MODEL_KEY`].

use super::hnsw::HnswGraph;
use super::{HnswParams, IndexError, Slot, VectorIndex};
use crate::fnv::fnv1a64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

pub const INDEX_MAGIC: &[u8; 4] = b"SEMK";
pub const INDEX_VERSION: u8 = 1;
const MODEL_KEY: &str = "semlens.model_id";

fn corrupt(msg: impl Into<String>) -> IndexError {
    IndexError::CorruptFile(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, IndexError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl VectorIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim.unwrap_or(0);
        let mut out = Vec::with_capacity(32 + self.slots.len() * (dim * 4 + 64));
        out.extend_from_slice(INDEX_MAGIC);
        out.push(INDEX_VERSION);
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.slots.len() as u64).to_le_bytes());

        for (i, slot) in self.slots.iter().enumerate() {
            out.extend_from_slice(&slot.id.to_le_bytes());
            out.push(u8::from(slot.tombstone));
            for v in self.vector(i as u32) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&slot.original_norm.to_le_bytes());
            let mut meta = slot.metadata.clone();
            if let Some(m) = &self.model_id {
                meta.insert(MODEL_KEY.to_string(), m.clone());
            }
            let json = serde_json::to_vec(&meta).expect("string map serialises");
            out.extend_from_slice(&(json.len() as u32).to_le_bytes());
            out.extend_from_slice(&json);
        }

        let entry = self.graph.entry.map_or(u64::MAX, |s| self.slots[s as usize].id);
        out.extend_from_slice(&entry.to_le_bytes());
        out.push(self.graph.max_layer as u8);
        for layers in &self.graph.links {
            out.push((layers.len() - 1) as u8);
            for layer in layers {
                out.extend_from_slice(&(layer.len() as u32).to_le_bytes());
                for &n in layer {
                    out.extend_from_slice(&self.slots[n as usize].id.to_le_bytes());
                }
            }
        }
        let checksum = fnv1a64(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        out
    }

    /// Rebuilds an index; `params` govern later inserts and default searches.
    pub fn from_bytes(bytes: &[u8], params: HnswParams) -> Result<Self, IndexError> {
        if bytes.len() < 4 + 1 + 8 || &bytes[..4] != INDEX_MAGIC {
            return Err(corrupt("bad magic"));
        }
        if bytes[4] != INDEX_VERSION {
            return Err(IndexError::VersionUnsupported(bytes[4]));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a64(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(corrupt("checksum mismatch"));
        }

        let mut r = Reader { buf: body, pos: 5 };
        let dim = r.u32()? as usize;
        let count = usize::try_from(r.u64()?).map_err(|_| corrupt("record count overflow"))?;
        if count > 0 && dim == 0 {
            return Err(corrupt("records without a dimension"));
        }

        let mut idx = VectorIndex::new(params);
        let mut model_id: Option<String> = None;
        for _ in 0..count {
            let id = r.u64()?;
            let tombstone = match r.u8()? {
                0 => false,
                1 => true,
                t => return Err(corrupt(format!("tombstone flag {t}"))),
            };
            let mut len = 0.0f64;
            for _ in 0..dim {
                let v = r.f32()?;
                len += f64::from(v) * f64::from(v);
                idx.data.push(v);
            }
            let original_norm = r.f32()?;
            let meta_len = r.u32()? as usize;
            let mut metadata: BTreeMap<String, String> = serde_json::from_slice(r.take(meta_len)?)
                .map_err(|e| corrupt(format!("metadata of {id}: {e}")))?;
            if let Some(m) = metadata.remove(MODEL_KEY) {
                match &model_id {
                    Some(prev) if *prev != m => return Err(corrupt("mixed model ids")),
                    _ => model_id = Some(m),
                }
            }
            if idx.by_id.insert(id, idx.slots.len() as u32).is_some() {
                return Err(corrupt(format!("duplicate id {id}")));
            }
            idx.lengths.push(len.sqrt());
            idx.slots.push(Slot {
                id,
                original_norm,
                metadata,
                tombstone,
            });
            if !tombstone {
                idx.live += 1;
            }
        }

        let resolve = |id: u64, by_id: &HashMap<u64, u32>| {
            by_id
                .get(&id)
                .copied()
                .ok_or_else(|| corrupt(format!("link to unknown id {id}")))
        };
        let entry = r.u64()?;
        let mut graph = HnswGraph {
            entry: if entry == u64::MAX {
                None
            } else {
                Some(resolve(entry, &idx.by_id)?)
            },
            max_layer: r.u8()? as usize,
            links: Vec::with_capacity(count),
        };
        for _ in 0..count {
            let level = r.u8()? as usize;
            let mut layers = Vec::with_capacity(level + 1);
            for _ in 0..=level {
                let n = r.u32()? as usize;
                let mut layer = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    layer.push(resolve(r.u64()?, &idx.by_id)?);
                }
                layers.push(layer);
            }
            graph.links.push(layers);
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        if count > 0 && graph.entry.is_none() {
            return Err(corrupt("missing entry point"));
        }

        if count > 0 {
            idx.dim = Some(dim);
            idx.model_id = Some(model_id.unwrap_or_default());
        }
        idx.graph = graph;
        idx.rng = ChaCha8Rng::seed_from_u64(idx.params.seed ^ count as u64);
        Ok(idx)
    }

    /// Writes atomically via a sibling temporary file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let io = |source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        };
        let tmp = path.with_extension("semk.tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: impl AsRef<Path>, params: HnswParams) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes, params)
    }
}
