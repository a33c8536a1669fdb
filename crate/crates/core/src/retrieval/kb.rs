use std::path::Path;
use std::time::SystemTime;

use chrono::{DateTime, SecondsFormat, Utc};
use rayon::prelude::*;

use crate::chunker::{chunk_document, Chunk, ChunkParams, ChunkPlan};
use crate::corpus::{scan_corpus, CorpusConfig, Document, ScanOutcome};
use crate::embed::{build_index, EmbeddingProvider, VectorIndex};
use crate::error::{Error, Result};
use crate::lexical::{build_bm25, Bm25Params, LexicalIndex};

/// Chunks every document under `plan`. Documents are chunked in parallel;
/// the result keeps document order and per-document start order.
pub fn chunk_corpus(docs: &[Document], plan: ChunkPlan, params: &ChunkParams) -> Result<Vec<Chunk>> {
    let per_doc: Vec<Vec<Chunk>> = docs
        .par_iter()
        .map(|d| chunk_document(d, plan.strategy_for(d.role), params))
        .collect::<Result<_>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

/// Index timestamp: `SOURCE_DATE_EPOCH` when set, otherwise the newest
/// modification time among the documents. Rebuilding an unchanged corpus
/// therefore yields a byte-identical index file.
pub fn corpus_timestamp(root: &Path, docs: &[Document]) -> String {
    let from_env = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0));
    let when = from_env.unwrap_or_else(|| {
        let newest = docs
            .iter()
            .filter_map(|d| root.join(&d.id).metadata().ok()?.modified().ok())
            .max()
            .unwrap_or(SystemTime::UNIX_EPOCH);
        DateTime::<Utc>::from(newest)
    });
    when.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub struct BuiltIndex {
    pub index: VectorIndex,
    pub scan: ScanOutcome,
    pub chunks: Vec<Chunk>,
}

/// Scan, chunk and embed a corpus.
pub fn index_corpus(
    corpus: &CorpusConfig,
    plan: ChunkPlan,
    params: &ChunkParams,
    provider: &dyn EmbeddingProvider,
) -> Result<BuiltIndex> {
    let scan = scan_corpus(corpus)?;
    let chunks = chunk_corpus(&scan.documents, plan, params)?;
    let built_at = corpus_timestamp(&corpus.root, &scan.documents);
    let index = build_index(&chunks, provider, built_at)?;
    Ok(BuiltIndex { index, scan, chunks })
}

#[derive(Debug, Clone)]
pub struct RoleIndex {
    pub dense: VectorIndex,
    /// Absent when the role has no chunks.
    pub sparse: Option<LexicalIndex>,
}

impl RoleIndex {
    fn new(dense: VectorIndex, bm25: Bm25Params) -> Result<Self> {
        let sparse = if dense.is_empty() {
            None
        } else {
            let chunks: Vec<Chunk> = dense.chunks().cloned().collect();
            Some(build_bm25(&chunks, bm25)?)
        };
        Ok(RoleIndex { dense, sparse })
    }

    pub fn len(&self) -> usize {
        self.dense.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dense.is_empty()
    }
}

/// Dense and BM25 indices per corpus role, derived from one persisted
/// vector index. The BM25 side is rebuilt on load.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    code: RoleIndex,
    tests: RoleIndex,
}

impl KnowledgeBase {
    pub fn from_index(index: &VectorIndex, bm25: Bm25Params) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::EmptyIndex);
        }
        Ok(KnowledgeBase {
            code: RoleIndex::new(index.filter_roles(|r| r.is_code()), bm25)?,
            tests: RoleIndex::new(index.filter_roles(|r| !r.is_code()), bm25)?,
        })
    }

    pub fn code(&self) -> &RoleIndex {
        &self.code
    }

    pub fn tests(&self) -> &RoleIndex {
        &self.tests
    }

    pub fn provider_tag(&self) -> &str {
        self.code.dense.provider_tag()
    }

    pub fn dims(&self) -> usize {
        self.code.dense.dims()
    }

    pub fn len(&self) -> usize {
        self.code.len() + self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.code
            .dense
            .get(chunk_id)
            .or_else(|| self.tests.dense.get(chunk_id))
            .map(|e| &e.chunk)
    }

    /// Queries must be embedded by the provider that built the index.
    pub fn check_provider(&self, provider: &dyn EmbeddingProvider) -> Result<()> {
        let tag = provider.tag();
        if tag != self.provider_tag() {
            return Err(Error::ProviderMismatch {
                index: self.provider_tag().to_string(),
                provider: tag,
            });
        }
        Ok(())
    }
}
