//! Sparse retrieval: code-aware tokenization and an Okapi BM25 index.

mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::chunker::Chunk;
use crate::embed::{rank_scores, ScoredHit};
use crate::error::{Error, Result};

pub use tokenize::tokenize_code;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub chunk_id: String,
    pub tf: u32,
}

/// Immutable BM25 index. Postings are sorted by chunk id.
#[derive(Debug, Clone)]
pub struct LexicalIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: BTreeMap<String, usize>,
    avg_doc_len: f64,
    params: Bm25Params,
}

impl LexicalIndex {
    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn doc_len(&self, chunk_id: &str) -> Option<usize> {
        self.doc_lengths.get(chunk_id).copied()
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn doc_freq(&self, token: &str) -> usize {
        self.postings(token).len()
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`; always positive.
    pub fn idf(&self, token: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.doc_freq(token) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

pub fn build_bm25(chunks: &[Chunk], params: Bm25Params) -> Result<LexicalIndex> {
    build_bm25_from_texts(
        chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())),
        params,
    )
}

pub fn build_bm25_from_texts<'a>(
    docs: impl IntoIterator<Item = (&'a str, &'a str)>,
    params: Bm25Params,
) -> Result<LexicalIndex> {
    if params.k1 < 0.0 || !(0.0..=1.0).contains(&params.b) {
        return Err(Error::InvalidParameter(format!(
            "BM25 parameters out of range: k1={}, b={}",
            params.k1, params.b
        )));
    }
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = BTreeMap::new();
    for (chunk_id, text) in docs {
        let tokens = tokenize_code(text);
        if doc_lengths.insert(chunk_id.to_string(), tokens.len()).is_some() {
            return Err(Error::DuplicateChunkId(chunk_id.to_string()));
        }
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (token, count) in tf {
            postings.entry(token).or_default().push(Posting {
                chunk_id: chunk_id.to_string(),
                tf: count,
            });
        }
    }
    if doc_lengths.is_empty() {
        return Err(Error::EmptyIndex);
    }
    for list in postings.values_mut() {
        list.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
    }
    let total: usize = doc_lengths.values().sum();
    let avg_doc_len = total as f64 / doc_lengths.len() as f64;
    Ok(LexicalIndex {
        postings,
        doc_lengths,
        avg_doc_len,
        params,
    })
}

/// Okapi BM25 top-k. Each distinct query token contributes once; chunks
/// without any matching token are not returned.
pub fn sparse_search(index: &LexicalIndex, query_text: &str, k: usize) -> Result<Vec<ScoredHit>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if index.n_docs() == 0 {
        return Err(Error::EmptyIndex);
    }
    let Bm25Params { k1, b } = index.params;
    let query: BTreeSet<String> = tokenize_code(query_text).into_iter().collect();
    let mut scores: HashMap<&str, f64> = HashMap::new();
    for token in &query {
        let list = index.postings(token);
        if list.is_empty() {
            continue;
        }
        let idf = index.idf(token);
        for p in list {
            let len = index.doc_lengths[&p.chunk_id] as f64;
            let norm = if index.avg_doc_len > 0.0 {
                len / index.avg_doc_len
            } else {
                1.0
            };
            let tf = p.tf as f64;
            let term = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
            *scores.entry(p.chunk_id.as_str()).or_default() += term;
        }
    }
    let scored = scores
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(id, s)| (id.to_string(), s))
        .collect();
    Ok(rank_scores(scored, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(texts: &[&str]) -> LexicalIndex {
        let ids: Vec<String> = (0..texts.len()).map(|i| format!("c{i:02}")).collect();
        build_bm25_from_texts(
            ids.iter().map(String::as_str).zip(texts.iter().copied()),
            Bm25Params::default(),
        )
        .unwrap()
    }

    #[test]
    fn average_length() {
        let idx = index(&["a b c d e", "f g h i j", "k l m n o"]);
        assert_eq!(idx.n_docs(), 3);
        assert_eq!(idx.avg_doc_len(), 5.0);
    }

    #[test]
    fn common_token_df_equals_n() {
        let idx = index(&["valve open", "valve close", "valve hold"]);
        assert_eq!(idx.doc_freq("valve"), idx.n_docs());
    }

    #[test]
    fn idf_spot_value() {
        let idx = index(&["pump", "pump"]);
        assert!((idx.idf("pump") - 1.2f64.ln()).abs() < 1e-12);
        assert!((idx.idf("pump") - 0.18232).abs() < 1e-5);
    }

    #[test]
    fn no_overlap_empty_result() {
        let idx = index(&["valve open", "pump close"]);
        assert!(sparse_search(&idx, "zzz qqq", 5).unwrap().is_empty());
        assert!(sparse_search(&idx, "", 5).unwrap().is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = build_bm25_from_texts([("a", "x"), ("a", "y")], Bm25Params::default()).unwrap_err();
        assert!(matches!(err, Error::DuplicateChunkId(id) if id == "a"));
    }

    #[test]
    fn empty_corpus_rejected() {
        let docs: [(&str, &str); 0] = [];
        assert!(matches!(
            build_bm25_from_texts(docs, Bm25Params::default()),
            Err(Error::EmptyIndex)
        ));
    }

    #[test]
    fn exact_identifier_beats_subtokens() {
        let idx = index(&[
            "pressure read value from sensor",
            "read max value of the pressure",
            "readMaxValue_ptr2(sensor)",
            "max value clamp read",
        ]);
        let hits = sparse_search(&idx, "readMaxValue_ptr2", 4).unwrap();
        assert_eq!(hits[0].chunk_id, "c02");
    }

    #[test]
    fn monotone_in_tf() {
        let idx = index(&["pump x x x", "pump pump x x", "pump pump pump x", "y y y y"]);
        let hits = sparse_search(&idx, "pump", 3).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.chunk_id.as_str()).collect();
        assert_eq!(ids, ["c02", "c01", "c00"]);
        assert!(hits.windows(2).all(|w| w[0].score > w[1].score));
    }

    #[test]
    fn ties_broken_by_chunk_id() {
        let idx = index(&["alpha beta", "alpha beta", "gamma"]);
        let hits = sparse_search(&idx, "alpha", 2).unwrap();
        assert_eq!(hits[0].chunk_id, "c00");
        assert_eq!(hits[1].chunk_id, "c01");
        assert_eq!(hits[0].score, hits[1].score);
        assert_eq!((hits[0].rank, hits[1].rank), (1, 2));
    }
}
