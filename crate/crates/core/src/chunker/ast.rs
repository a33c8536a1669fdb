use std::collections::BTreeSet;

use super::cparse::{parse_chars, DeclKind};
use super::{group_greedy, Chunk, Strategy};
use crate::corpus::Document;
use crate::error::{Error, Result};

/// Declaration-aligned chunking. Every function definition (with its leading
/// comment) is a chunk of its own; runs of other declarations are grouped
/// greedily up to `max_size` characters.
pub fn chunk_ast(doc: &Document, max_size: usize) -> Result<Vec<Chunk>> {
    if max_size == 0 {
        return Err(Error::InvalidParameter("max_size must be positive".into()));
    }
    let chars: Vec<char> = doc.text.chars().collect();
    let decls = parse_chars(&chars);

    let mut chunks = Vec::new();
    let mut run: Vec<(usize, usize, DeclKind)> = Vec::new();
    let flush = |run: &mut Vec<(usize, usize, DeclKind)>, chunks: &mut Vec<Chunk>| {
        let spans: Vec<(usize, usize)> = run.iter().map(|&(s, e, _)| (s, e)).collect();
        for g in group_greedy(&spans, max_size) {
            let kinds: BTreeSet<DeclKind> = run[g.clone()].iter().map(|d| d.2).collect();
            chunks.push(Chunk::from_span(
                doc,
                &chars,
                run[g.start].0,
                run[g.end - 1].1,
                Strategy::Ast,
                kinds,
            ));
        }
        run.clear();
    };

    for d in &decls {
        if d.kind == DeclKind::Function {
            flush(&mut run, &mut chunks);
            chunks.push(Chunk::from_span(
                doc,
                &chars,
                d.start,
                d.end,
                Strategy::Ast,
                BTreeSet::from([DeclKind::Function]),
            ));
        } else {
            run.push((d.start, d.end, d.kind));
        }
    }
    flush(&mut run, &mut chunks);
    Ok(chunks)
}
