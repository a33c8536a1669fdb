use std::collections::BTreeSet;

use super::clex::{lex, TokenKind};
use super::{group_greedy, Chunk, Strategy};
use crate::corpus::Document;
use crate::error::{Error, Result};

/// Splits C text into zero-depth units and returns their character spans.
///
/// A unit ends at a newline reached at brace depth zero once the pending
/// statement is complete (last code token was `;`, a closing `}` or a
/// directive). Comment-only lines are carried into the following unit.
pub(crate) fn zero_depth_units(doc_id: &str, chars: &[char]) -> Result<Vec<(usize, usize)>> {
    let toks = lex(chars);
    let mut units = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    let mut pending = false;
    let mut unit_start: Option<usize> = None;
    let mut unit_has_code = false;
    let mut last_end = 0;

    for t in &toks {
        if t.kind == TokenKind::Whitespace {
            if open.is_empty() && !pending && unit_has_code && t.contains_newline(chars) {
                if let Some(s) = unit_start.take() {
                    units.push((s, last_end));
                }
                unit_has_code = false;
            }
            continue;
        }
        unit_start.get_or_insert(t.start);
        last_end = t.end;
        if t.is_comment() {
            continue;
        }
        unit_has_code = true;
        match t.kind {
            TokenKind::Directive => {}
            TokenKind::Punct('{') => {
                open.push(t.start);
                pending = true;
            }
            TokenKind::Punct('}') => {
                if open.pop().is_none() {
                    return Err(Error::UnbalancedBraces {
                        doc_id: doc_id.to_string(),
                        position: t.start,
                    });
                }
                pending = !open.is_empty();
            }
            TokenKind::Punct(';') if open.is_empty() => pending = false,
            _ => pending = true,
        }
    }
    if let Some(&pos) = open.last() {
        return Err(Error::UnbalancedBraces {
            doc_id: doc_id.to_string(),
            position: pos,
        });
    }
    if let Some(s) = unit_start {
        units.push((s, last_end));
    }
    Ok(units)
}

/// Brace-aware chunking: zero-depth units accumulated greedily up to
/// `max_size` characters. Units are never split, so an oversized function
/// becomes an oversized chunk.
pub fn chunk_brace(doc: &Document, max_size: usize) -> Result<Vec<Chunk>> {
    if max_size == 0 {
        return Err(Error::InvalidParameter("max_size must be positive".into()));
    }
    let chars: Vec<char> = doc.text.chars().collect();
    let units = zero_depth_units(&doc.id, &chars)?;
    Ok(group_greedy(&units, max_size)
        .into_iter()
        .map(|g| {
            Chunk::from_span(
                doc,
                &chars,
                units[g.start].0,
                units[g.end - 1].1,
                Strategy::Brace,
                BTreeSet::new(),
            )
        })
        .collect())
}
