use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cosine, rank_scores, EmbeddingProvider, EmbeddingVector, ScoredHit};
use crate::chunker::Chunk;
use crate::corpus::Role;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexHeader {
    pub provider_tag: String,
    pub dims: usize,
    pub built_at: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(flatten)]
    chunk: Chunk,
    vector: Vec<f64>,
}

/// Immutable dense index; entries sorted by chunk id. Search is an exact
/// exhaustive scan.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    header: IndexHeader,
    entries: Vec<IndexEntry>,
}

impl VectorIndex {
    pub fn header(&self) -> &IndexHeader {
        &self.header
    }

    pub fn provider_tag(&self) -> &str {
        &self.header.provider_tag
    }

    pub fn dims(&self) -> usize {
        self.header.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, chunk_id: &str) -> Option<&IndexEntry> {
        self.entries
            .binary_search_by(|e| e.chunk.chunk_id.as_str().cmp(chunk_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.entries.iter().map(|e| &e.chunk)
    }

    /// Sub-index of the entries whose role satisfies `keep`; may be empty.
    pub fn filter_roles(&self, keep: impl Fn(Role) -> bool) -> VectorIndex {
        VectorIndex {
            header: self.header.clone(),
            entries: self
                .entries
                .iter()
                .filter(|e| keep(e.chunk.role))
                .cloned()
                .collect(),
        }
    }

    fn from_parts(header: IndexHeader, mut entries: Vec<IndexEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.chunk.chunk_id.cmp(&b.chunk.chunk_id));
        for w in entries.windows(2) {
            if w[0].chunk.chunk_id == w[1].chunk.chunk_id {
                return Err(Error::DuplicateChunkId(w[0].chunk.chunk_id.clone()));
            }
        }
        for e in &entries {
            if e.vector.dims() != header.dims {
                return Err(Error::DimensionMismatch {
                    expected: header.dims,
                    actual: e.vector.dims(),
                });
            }
        }
        Ok(VectorIndex { header, entries })
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut *w, &self.header)?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            let rec = Record {
                chunk: e.chunk.clone(),
                vector: e.vector.values.clone(),
            };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_jsonl(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(r: impl BufRead, source: &str) -> Result<Self> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or(Error::EmptyIndex)?
            .map_err(|e| Error::io(source, e))?;
        let header: IndexHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::json(format!("{source}: header"), e))?;
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{source}: record {}", n + 1), e))?;
            entries.push(IndexEntry {
                chunk: rec.chunk,
                vector: EmbeddingVector {
                    zero: rec.vector.iter().all(|&v| v == 0.0),
                    values: rec.vector,
                },
            });
        }
        Self::from_parts(header, entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(file), &path.display().to_string())
    }
}

/// Embeds every chunk exactly once, batching by the provider's max batch.
/// Batches run concurrently; order is restored before sorting by chunk id.
pub fn build_index(
    chunks: &[Chunk],
    provider: &dyn EmbeddingProvider,
    built_at: impl Into<String>,
) -> Result<VectorIndex> {
    if chunks.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let mut seen = HashSet::new();
    for c in chunks {
        if !seen.insert(c.chunk_id.as_str()) {
            return Err(Error::DuplicateChunkId(c.chunk_id.clone()));
        }
    }
    let batches: Vec<&[Chunk]> = chunks.chunks(provider.max_batch().max(1)).collect();
    let embedded: Vec<Vec<EmbeddingVector>> = batches
        .par_iter()
        .map(|batch| {
            let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
            provider.embed_batch(&texts).map_err(|e| Error::Embedding {
                chunk_id: batch[0].chunk_id.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let entries: Vec<IndexEntry> = chunks
        .iter()
        .cloned()
        .zip(embedded.into_iter().flatten())
        .map(|(chunk, vector)| IndexEntry { chunk, vector })
        .collect();
    if entries.len() != chunks.len() {
        return Err(Error::Transport(format!(
            "provider returned {} vectors for {} chunks",
            entries.len(),
            chunks.len()
        )));
    }
    let header = IndexHeader {
        provider_tag: provider.tag(),
        dims: entries[0].vector.dims(),
        built_at: built_at.into(),
    };
    VectorIndex::from_parts(header, entries)
}

/// Exact top-k by cosine; ties broken by ascending chunk id.
pub fn dense_search(index: &VectorIndex, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredHit>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if query.dims() != index.dims() {
        return Err(Error::DimensionMismatch {
            expected: index.dims(),
            actual: query.dims(),
        });
    }
    let scored = index
        .entries
        .iter()
        .map(|e| Ok((e.chunk.chunk_id.clone(), cosine(query, &e.vector)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_scores(scored, k))
}

/// Writes `chunk_id,doc_id,strategy,v0..v{dims-1}` rows for external
/// projection tools. Returns the number of data rows.
pub fn export_embeddings(index: &VectorIndex, out_path: &Path) -> Result<usize> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let mut w = csv::Writer::from_path(out_path)?;
    let mut header = vec!["chunk_id".to_string(), "doc_id".into(), "strategy".into()];
    header.extend((0..index.dims()).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for e in &index.entries {
        let mut row = vec![
            e.chunk.chunk_id.clone(),
            e.chunk.doc_id.clone(),
            e.chunk.strategy.to_string(),
        ];
        row.extend(e.vector.values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(out_path, e))?;
    Ok(index.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::chunk_fixed;
    use crate::corpus::Document;
    use crate::embed::HashEmbedder;

    fn chunks(n: usize) -> Vec<Chunk> {
        let text: String = (0..n)
            .map(|i| format!("int value_{i} = read_sensor({i});\n"))
            .collect();
        let doc = Document::new("s.c", Role::CSource, &text);
        let size = text.len() / n;
        chunk_fixed(&doc, size, 0).unwrap().into_iter().take(n).collect()
    }

    #[test]
    fn build_with_hash_provider() {
        let cs = chunks(10);
        let idx = build_index(&cs, &HashEmbedder::new(256).unwrap(), "t0").unwrap();
        assert_eq!(idx.len(), 10);
        assert_eq!(idx.dims(), 256);
        assert_eq!(idx.provider_tag(), "hash-256");
        assert!(idx.entries().windows(2).all(|w| w[0].chunk.chunk_id < w[1].chunk.chunk_id));
    }

    #[test]
    fn duplicates_rejected() {
        let mut cs = chunks(3);
        cs.push(cs[0].clone());
        let err = build_index(&cs, &HashEmbedder::new(16).unwrap(), "").unwrap_err();
        assert!(matches!(err, Error::DuplicateChunkId(_)));
    }

    #[test]
    fn persisted_bytes_are_reproducible_and_roundtrip() {
        let cs = chunks(10);
        let p = HashEmbedder::new(64).unwrap();
        let a = build_index(&cs, &p, "2026-01-01T00:00:00Z").unwrap();
        let b = build_index(&cs, &p, "2026-01-01T00:00:00Z").unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_jsonl(&mut ba).unwrap();
        b.write_jsonl(&mut bb).unwrap();
        assert_eq!(ba, bb);
        let back = VectorIndex::read_jsonl(&ba[..], "mem").unwrap();
        assert_eq!(back, a);
        let first: serde_json::Value =
            serde_json::from_str(std::str::from_utf8(&ba).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!(first["dims"], 64);
    }

    #[test]
    fn search_identity_and_large_k() {
        let cs = chunks(6);
        let idx = build_index(&cs, &HashEmbedder::new(128).unwrap(), "").unwrap();
        let target = &idx.entries()[3];
        let hits = dense_search(&idx, &target.vector, 100).unwrap();
        assert_eq!(hits.len(), 6);
        assert_eq!(hits[0].chunk_id, target.chunk.chunk_id);
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn search_errors() {
        let cs = chunks(2);
        let idx = build_index(&cs, &HashEmbedder::new(16).unwrap(), "").unwrap();
        let q = EmbeddingVector::normalized(vec![1.0; 8]);
        assert!(matches!(dense_search(&idx, &q, 1), Err(Error::DimensionMismatch { .. })));
        let empty = idx.filter_roles(|_| false);
        let q = EmbeddingVector::normalized(vec![1.0; 16]);
        assert!(matches!(dense_search(&empty, &q, 1), Err(Error::EmptyIndex)));
    }

    #[test]
    fn export_layout() {
        let cs = chunks(10);
        let idx = build_index(&cs, &HashEmbedder::new(8).unwrap(), "").unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("emb.csv");
        assert_eq!(export_embeddings(&idx, &out).unwrap(), 10);
        let mut rdr = csv::Reader::from_path(&out).unwrap();
        assert_eq!(rdr.headers().unwrap().len(), 3 + 8);
        assert_eq!(&rdr.headers().unwrap()[3], "v0");
        assert_eq!(rdr.records().count(), 10);
        assert!(matches!(
            export_embeddings(&idx.filter_roles(|_| false), &out),
            Err(Error::EmptyIndex)
        ));
    }
}
