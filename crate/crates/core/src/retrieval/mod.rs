//! Hybrid retrieval: reciprocal rank fusion over dense and BM25 rankings,
//! plus the dense-only, sparse-only, random and no-context baselines.

mod kb;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunker::Chunk;
use crate::corpus::{Requirement, Role};
use crate::embed::{dense_search, fnv1a64, rank_scores, EmbeddingProvider, EmbeddingVector, ScoredHit};
use crate::error::{Error, Result};
use crate::lexical::sparse_search;

pub use kb::{chunk_corpus, corpus_timestamp, index_corpus, BuiltIndex, KnowledgeBase, RoleIndex};

pub const DEFAULT_RRF_K: u32 = 60;
pub const DEFAULT_K_CODE: usize = 5;
pub const DEFAULT_K_TEST: usize = 3;

/// Fuses rankings with `score(d) = Σ 1/(K + rank_d)`, every ranking weighted
/// equally. Returns the top `k` by fused score, ties by chunk id.
///
/// # Panics
/// If `rrf_k` is zero.
pub fn rrf_fuse(rankings: &[Vec<String>], rrf_k: u32, k: usize) -> Vec<ScoredHit> {
    assert!(rrf_k >= 1, "RRF constant must be at least 1");
    let mut fused: HashMap<&str, f64> = HashMap::new();
    for ranking in rankings {
        let mut seen = std::collections::HashSet::new();
        for (i, id) in ranking.iter().enumerate() {
            if seen.insert(id.as_str()) {
                *fused.entry(id.as_str()).or_default() += 1.0 / (rrf_k as f64 + (i + 1) as f64);
            }
        }
    }
    rank_scores(
        fused.into_iter().map(|(id, s)| (id.to_string(), s)).collect(),
        k,
    )
}

/// Candidates fetched from each ranker before fusion.
pub fn overfetch_depth(k: usize) -> usize {
    (4 * k).max(20)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Hybrid,
    Dense,
    Sparse,
    Random,
    None,
}

impl RetrievalMode {
    pub const ALL: [RetrievalMode; 5] = [
        RetrievalMode::Hybrid,
        RetrievalMode::Dense,
        RetrievalMode::Sparse,
        RetrievalMode::Random,
        RetrievalMode::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMode::Hybrid => "hybrid",
            RetrievalMode::Dense => "dense",
            RetrievalMode::Sparse => "sparse",
            RetrievalMode::Random => "random",
            RetrievalMode::None => "none",
        }
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RetrievalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown retrieval mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalParams {
    pub mode: RetrievalMode,
    pub k_code: usize,
    pub k_test: usize,
    pub rrf_k: u32,
    pub seed: u64,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            mode: RetrievalMode::Hybrid,
            k_code: DEFAULT_K_CODE,
            k_test: DEFAULT_K_TEST,
            rrf_k: DEFAULT_RRF_K,
            seed: 0,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.rrf_k == 0 {
            return Err(Error::InvalidParameter("rrf_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// A ranked hit resolved to its chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedHit {
    pub chunk_id: String,
    pub doc_id: String,
    pub role: Role,
    pub start: usize,
    pub end: usize,
    pub score: f64,
    pub rank: usize,
    pub text: String,
}

impl RetrievedHit {
    fn resolve(hit: ScoredHit, chunk: &Chunk) -> Self {
        RetrievedHit {
            chunk_id: hit.chunk_id,
            doc_id: chunk.doc_id.clone(),
            role: chunk.role,
            start: chunk.start,
            end: chunk.end,
            score: hit.score,
            rank: hit.rank,
            text: chunk.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub requirement_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub mode: RetrievalMode,
    pub code_hits: Vec<RetrievedHit>,
    pub test_hits: Vec<RetrievedHit>,
    pub query: RetrievalQuery,
    pub k_code: usize,
    pub k_test: usize,
    pub latency_ms: f64,
}

impl RetrievalResult {
    pub fn hits(&self) -> impl Iterator<Item = &RetrievedHit> {
        self.code_hits.iter().chain(&self.test_hits)
    }
}

fn search_role(
    role: &RoleIndex,
    query: &EmbeddingVector,
    text: &str,
    params: &RetrievalParams,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RetrievedHit>> {
    if k == 0 || role.is_empty() {
        return Ok(Vec::new());
    }
    let hits = match params.mode {
        RetrievalMode::None => Vec::new(),
        RetrievalMode::Dense => dense_search(&role.dense, query, k)?,
        RetrievalMode::Sparse => match &role.sparse {
            Some(lex) => sparse_search(lex, text, k)?,
            None => Vec::new(),
        },
        RetrievalMode::Hybrid => {
            let depth = overfetch_depth(k);
            let (dense, sparse) = rayon::join(
                || dense_search(&role.dense, query, depth),
                || match &role.sparse {
                    Some(lex) => sparse_search(lex, text, depth),
                    None => Ok(Vec::new()),
                },
            );
            let ids = |hits: Vec<ScoredHit>| hits.into_iter().map(|h| h.chunk_id).collect();
            rrf_fuse(&[ids(dense?), ids(sparse?)], params.rrf_k, k)
        }
        RetrievalMode::Random => {
            let entries = role.dense.entries();
            rand::seq::index::sample(rng, entries.len(), k.min(entries.len()))
                .into_iter()
                .enumerate()
                .map(|(i, j)| ScoredHit {
                    chunk_id: entries[j].chunk.chunk_id.clone(),
                    score: 0.0,
                    rank: i + 1,
                })
                .collect()
        }
    };
    hits.into_iter()
        .map(|h| {
            let chunk = &role
                .dense
                .get(&h.chunk_id)
                .expect("ranked ids come from the same index")
                .chunk;
            Ok(RetrievedHit::resolve(h, chunk))
        })
        .collect()
}

/// Retrieves code and test context for one requirement, each role
/// searched independently with the requirement body as query.
pub fn retrieve(
    kb: &KnowledgeBase,
    provider: &dyn EmbeddingProvider,
    req: &Requirement,
    params: &RetrievalParams,
) -> Result<RetrievalResult> {
    let started = Instant::now();
    params.validate()?;
    let query = RetrievalQuery {
        requirement_id: req.id.clone(),
        text: req.body.clone(),
    };
    let mut result = RetrievalResult {
        mode: params.mode,
        code_hits: Vec::new(),
        test_hits: Vec::new(),
        query,
        k_code: params.k_code,
        k_test: params.k_test,
        latency_ms: 0.0,
    };
    if params.mode != RetrievalMode::None {
        if kb.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let vector = match params.mode {
            RetrievalMode::Dense | RetrievalMode::Hybrid => {
                kb.check_provider(provider)?;
                let v = provider.embed(&req.body)?;
                if v.dims() != kb.dims() {
                    return Err(Error::DimensionMismatch {
                        expected: kb.dims(),
                        actual: v.dims(),
                    });
                }
                v
            }
            _ => EmbeddingVector {
                values: Vec::new(),
                zero: true,
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ fnv1a64(req.id.as_bytes()));
        result.code_hits = search_role(kb.code(), &vector, &req.body, params, params.k_code, &mut rng)?;
        result.test_hits = search_role(kb.tests(), &vector, &req.body, params, params.k_test, &mut rng)?;
    }
    result.latency_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}
