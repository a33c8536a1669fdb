//! Dense side of retrieval: embedding providers and the exact cosine index.

mod index;
mod remote;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexical::tokenize_code;

pub use index::{
    build_index, dense_search, export_embeddings, IndexEntry, IndexHeader, VectorIndex,
};
pub use remote::{RemoteEmbedConfig, RemoteEmbedder};

pub const DEFAULT_HASH_DIMS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    /// Set when the input produced no signal; the vector is all zeros.
    #[serde(default)]
    pub zero: bool,
}

impl EmbeddingVector {
    /// L2-normalizes `values`. An all-zero input stays zero and is flagged.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            values.iter_mut().for_each(|v| *v = 0.0);
            return EmbeddingVector { values, zero: true };
        }
        values.iter_mut().for_each(|v| *v /= norm);
        EmbeddingVector {
            values,
            zero: false,
        }
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub chunk_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Sorts by score descending, then chunk id ascending, keeps `k`, and
/// assigns ranks.
pub fn rank_scores(mut scored: Vec<(String, f64)>, k: usize) -> Vec<ScoredHit> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (chunk_id, score))| ScoredHit {
            chunk_id,
            score,
            rank: i + 1,
        })
        .collect()
}

pub trait EmbeddingProvider: Send + Sync {
    /// Identifies the model/configuration; recorded in the index header.
    fn tag(&self) -> String;

    fn max_batch(&self) -> usize {
        64
    }

    /// One normalized vector per input, in input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| Error::Transport("provider returned no vector".into()))
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing over `tokenize_code` tokens. Deterministic and
/// offline; it captures token overlap only.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dims: usize,
}

impl HashEmbedder {
    pub fn new(dims: usize) -> Result<Self> {
        if dims < 8 {
            return Err(Error::InvalidParameter(format!(
                "hash embedding needs at least 8 dims, got {dims}"
            )));
        }
        Ok(HashEmbedder { dims })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0.0; self.dims];
        for token in tokenize_code(text) {
            let h = fnv1a64(token.as_bytes());
            let bucket = (h % self.dims as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            values[bucket] += sign;
        }
        EmbeddingVector::normalized(values)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn tag(&self) -> String {
        format!("hash-{}", self.dims)
    }

    fn max_batch(&self) -> usize {
        256
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}
