use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Requirement;
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::retrieval::{retrieve, KnowledgeBase, RetrievalMode, RetrievalParams};

fn hits_in_top_k<S: AsRef<str>>(retrieved: &[S], relevant: &BTreeSet<String>, k: usize) -> usize {
    let mut seen = HashSet::new();
    retrieved
        .iter()
        .take(k)
        .map(AsRef::as_ref)
        .filter(|id| seen.insert(*id) && relevant.contains(*id))
        .count()
}

/// `|top-k ∩ relevant| / k`. The denominator stays `k` when fewer than `k`
/// ids were retrieved.
///
/// # Panics
/// If `k` is zero.
pub fn precision_at_k<S: AsRef<str>>(retrieved: &[S], relevant: &BTreeSet<String>, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    hits_in_top_k(retrieved, relevant, k) as f64 / k as f64
}

/// `|top-k ∩ relevant| / |relevant|`.
pub fn recall_at_k<S: AsRef<str>>(retrieved: &[S], relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    Ok(hits_in_top_k(retrieved, relevant, k) as f64 / relevant.len() as f64)
}

/// Relevant chunk ids per requirement id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth(pub BTreeMap<String, BTreeSet<String>>);

impl GroundTruth {
    pub fn parse(raw: &str) -> Result<Self> {
        let gt: GroundTruth = serde_json::from_str(raw).map_err(|e| Error::json("ground truth", e))?;
        if gt.0.values().any(BTreeSet::is_empty) {
            return Err(Error::EmptyRelevantSet);
        }
        Ok(gt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which role's index a ground truth refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalScope {
    #[default]
    Code,
    Tests,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEvalRow {
    pub requirement_id: String,
    pub precision: f64,
    pub recall: f64,
    pub relevant: usize,
    pub retrieved: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEvalReport {
    pub mode: RetrievalMode,
    pub scope: EvalScope,
    pub k: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub rows: Vec<RetrievalEvalRow>,
}

/// Retrieves for every ground-truth requirement and scores the hits of
/// `scope`. Every relevant id must exist in that scope's index.
pub fn eval_retrieval(
    gt: &GroundTruth,
    requirements: &[Requirement],
    kb: &KnowledgeBase,
    provider: &dyn EmbeddingProvider,
    params: &RetrievalParams,
    scope: EvalScope,
    k: usize,
) -> Result<RetrievalEvalReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if gt.is_empty() {
        return Err(Error::EmptyReportSet);
    }
    let role = match scope {
        EvalScope::Code => kb.code(),
        EvalScope::Tests => kb.tests(),
    };
    for (req, ids) in &gt.0 {
        if ids.is_empty() {
            return Err(Error::EmptyRelevantSet);
        }
        if let Some(missing) = ids.iter().find(|id| role.dense.get(id).is_none()) {
            return Err(Error::UnresolvableChunkId {
                requirement: req.clone(),
                chunk_id: missing.clone(),
            });
        }
    }
    let by_id: BTreeMap<&str, &Requirement> = requirements.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut p = *params;
    (p.k_code, p.k_test) = match scope {
        EvalScope::Code => (k, 0),
        EvalScope::Tests => (0, k),
    };
    let mut rows = Vec::with_capacity(gt.len());
    for (req_id, relevant) in &gt.0 {
        let req = by_id.get(req_id.as_str()).ok_or_else(|| {
            Error::InvalidParameter(format!("ground truth names unknown requirement `{req_id}`"))
        })?;
        let result = retrieve(kb, provider, req, &p)?;
        let hits = match scope {
            EvalScope::Code => result.code_hits,
            EvalScope::Tests => result.test_hits,
        };
        let retrieved: Vec<String> = hits.into_iter().map(|h| h.chunk_id).collect();
        rows.push(RetrievalEvalRow {
            requirement_id: req_id.clone(),
            precision: precision_at_k(&retrieved, relevant, k),
            recall: recall_at_k(&retrieved, relevant, k)?,
            relevant: relevant.len(),
            retrieved,
        });
    }
    let n = rows.len() as f64;
    Ok(RetrievalEvalReport {
        mode: params.mode,
        scope,
        k,
        mean_precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        mean_recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        rows,
    })
}
