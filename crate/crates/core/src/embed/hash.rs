//! Deterministic feature-hashing embedder for offline use and tests.

use super::EmbedError;
use crate::fnv::fnv1a64;
use crate::vector::Embedding;

pub const DEFAULT_HASH_DIM: usize = 256;

pub fn hash_model_id(dim: usize) -> String {
    format!("hash-v1-{dim}")
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn hash_tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Unigrams followed by space-joined adjacent bigrams.
pub fn hash_features(text: &str) -> Vec<String> {
    let tokens = hash_tokens(text);
    let mut features = tokens.clone();
    features.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    features
}

/// Signed feature hashing into `dim` buckets followed by L2 normalisation.
///
/// Bucket is `h mod dim`; the sign is negative when the top bit of `h` is set.
pub fn hash_embed(text: &str, dim: usize) -> Result<Embedding, EmbedError> {
    if dim == 0 {
        return Err(EmbedError::InvalidConfig("dim must be positive".into()));
    }
    let features = hash_features(text);
    if features.is_empty() {
        return Err(EmbedError::EmptyInput { index: 0 });
    }
    let mut values = vec![0.0f64; dim];
    for feature in &features {
        let h = fnv1a64(feature.as_bytes());
        let idx = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[idx] += sign;
    }
    let raw = Embedding::new(values, hash_model_id(dim))?;
    if raw.length() < crate::vector::ZERO_NORM_EPS {
        // Every feature cancelled out against another; extremely rare but possible.
        return Err(EmbedError::EmptyInput { index: 0 });
    }
    Ok(raw.normalize()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::cosine_similarity;
    use std::collections::BTreeMap;

    #[test]
    fn deterministic_unit_vectors() {
        let a = hash_embed("hello", 256).unwrap();
        let b = hash_embed("hello", 256).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 256);
        assert_eq!(a.model_id(), "hash-v1-256");
        assert!((a.length() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn single_token_a_lands_where_fnv_says() {
        // fnv1a64("a") = 0xaf63dc4c8601ec8c: top bit set => sign -1.
        let h: u64 = 0xaf63dc4c8601ec8c;
        let idx = (h % 256) as usize;
        assert_eq!(idx, 0x8c);
        let e = hash_embed("a", 256).unwrap();
        for (i, v) in e.values().iter().enumerate() {
            if i == idx {
                assert_eq!(*v, -1.0);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn tokenisation_rules() {
        assert_eq!(hash_tokens("Hello, World! 42x"), vec!["hello", "world", "42x"]);
        assert_eq!(
            hash_features("housing assistance"),
            vec!["housing", "assistance", "housing assistance"]
        );
        assert!(matches!(hash_embed("  ... !", 64), Err(EmbedError::EmptyInput { .. })));
    }

    // Independent sparse construction of the same feature vector.
    fn oracle(text: &str, dim: u64) -> BTreeMap<u64, f64> {
        let words: Vec<String> = text
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(String::from)
            .collect();
        let mut feats = words.clone();
        for i in 1..words.len() {
            feats.push(format!("{} {}", words[i - 1], words[i]));
        }
        let mut out = BTreeMap::new();
        for f in feats {
            let h = crate::fnv::fnv1a64(f.as_bytes());
            let s = if h & (1 << 63) == 0 { 1.0 } else { -1.0 };
            *out.entry(h % dim).or_insert(0.0) += s;
        }
        out
    }

    fn sparse_cos(a: &BTreeMap<u64, f64>, b: &BTreeMap<u64, f64>) -> f64 {
        let dot: f64 = a.iter().map(|(k, v)| v * b.get(k).copied().unwrap_or(0.0)).sum();
        let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn word_order_changes_bigrams_only() {
        let x = hash_embed("housing assistance", 256).unwrap();
        let y = hash_embed("assistance housing", 256).unwrap();
        assert_ne!(x, y);
        let c = cosine_similarity(&x, &y).unwrap();
        let expected = sparse_cos(
            &oracle("housing assistance", 256),
            &oracle("assistance housing", 256),
        );
        assert!((c - expected).abs() < 1e-12);
        assert!(c > 0.0 && c < 1.0, "cos = {c}");
    }
}
