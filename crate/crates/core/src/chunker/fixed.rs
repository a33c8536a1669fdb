use std::collections::BTreeSet;

use super::{Chunk, Strategy};
use crate::corpus::Document;
use crate::error::{Error, Result};

/// Fixed-size character windows with `overlap` characters shared between
/// neighbours. The last window may be shorter and always ends at the
/// document end.
pub fn chunk_fixed(doc: &Document, size: usize, overlap: usize) -> Result<Vec<Chunk>> {
    if size == 0 {
        return Err(Error::InvalidParameter("fixed chunk size must be positive".into()));
    }
    if overlap >= size {
        return Err(Error::InvalidOverlap { size, overlap });
    }
    let chars: Vec<char> = doc.text.chars().collect();
    let len = chars.len();
    let stride = size - overlap;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + size).min(len);
        chunks.push(Chunk::from_span(
            doc,
            &chars,
            start,
            end,
            Strategy::Fixed,
            BTreeSet::new(),
        ));
        if end == len {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}
