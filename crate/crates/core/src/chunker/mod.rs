//! Splitting documents into retrievable chunks.
//!
//! Four strategies are available: fixed-size windows, brace-aware grouping
//! (splits only where brace depth is zero), AST-style grouping along
//! top-level C declarations, and per-test-unit splitting for legacy tests.
//! All offsets are character offsets into the newline-canonicalized text.

mod ast;
mod brace;
pub mod clex;
pub mod cparse;
mod fixed;
mod test_unit;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Document, Role};
use crate::error::{Error, Result};

pub use ast::chunk_ast;
pub use brace::chunk_brace;
pub use cparse::{parse_c_toplevel, CDecl, DeclKind};
pub use fixed::chunk_fixed;
pub use test_unit::chunk_test_units;

pub const DEFAULT_FIXED_SIZE: usize = 1000;
pub const DEFAULT_FIXED_OVERLAP: usize = 200;
pub const DEFAULT_MAX_SIZE: usize = 2000;
pub const DEFAULT_TEST_BOUNDARY: &str = r"^(?:async\s+)?def\s+test\w*\s*\(";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Fixed,
    Brace,
    Ast,
    TestUnit,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Fixed,
        Strategy::Brace,
        Strategy::Ast,
        Strategy::TestUnit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Fixed => "fixed",
            Strategy::Brace => "brace",
            Strategy::Ast => "ast",
            Strategy::TestUnit => "test_unit",
        }
    }

    pub fn accepts(self, role: Role) -> bool {
        match self {
            Strategy::Fixed => true,
            Strategy::Brace | Strategy::Ast => role.is_code(),
            Strategy::TestUnit => role == Role::LegacyTest,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown chunking strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub role: Role,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub decl_kinds: BTreeSet<DeclKind>,
}

impl Chunk {
    pub(crate) fn from_span(
        doc: &Document,
        chars: &[char],
        start: usize,
        end: usize,
        strategy: Strategy,
        decl_kinds: BTreeSet<DeclKind>,
    ) -> Self {
        debug_assert!(start < end && end <= chars.len());
        let text: String = chars[start..end].iter().collect();
        Chunk {
            chunk_id: chunk_id(&doc.id, start, &text),
            doc_id: doc.id.clone(),
            role: doc.role,
            start,
            end,
            text,
            strategy,
            decl_kinds,
        }
    }
}

/// First 16 hex chars of SHA-256 over `doc_id \0 start \0 text`.
pub fn chunk_id(doc_id: &str, start: usize, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(doc_id.as_bytes());
    h.update([0u8]);
    h.update(start.to_string().as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    h.finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkParams {
    pub fixed_size: usize,
    pub fixed_overlap: usize,
    pub max_size: usize,
    pub test_boundary_pattern: String,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            fixed_size: DEFAULT_FIXED_SIZE,
            fixed_overlap: DEFAULT_FIXED_OVERLAP,
            max_size: DEFAULT_MAX_SIZE,
            test_boundary_pattern: DEFAULT_TEST_BOUNDARY.to_string(),
        }
    }
}

impl ChunkParams {
    pub fn boundary_regex(&self) -> Result<Regex> {
        Regex::new(&self.test_boundary_pattern).map_err(|e| {
            Error::InvalidParameter(format!("test boundary pattern: {e}"))
        })
    }
}

pub fn chunk_document(doc: &Document, strategy: Strategy, params: &ChunkParams) -> Result<Vec<Chunk>> {
    if !strategy.accepts(doc.role) {
        return Err(Error::StrategyRoleMismatch {
            strategy: strategy.to_string(),
            role: doc.role.to_string(),
        });
    }
    match strategy {
        Strategy::Fixed => chunk_fixed(doc, params.fixed_size, params.fixed_overlap),
        Strategy::Brace => chunk_brace(doc, params.max_size),
        Strategy::Ast => chunk_ast(doc, params.max_size),
        Strategy::TestUnit => Ok(chunk_test_units(doc, &params.boundary_regex()?)),
    }
}

/// Which strategy applies to each role when a corpus is indexed under a
/// single strategy name. Legacy tests always use test-unit splitting except
/// under `fixed`, and C files fall back to fixed windows under `test_unit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub code: Strategy,
    pub tests: Strategy,
}

impl ChunkPlan {
    pub fn for_strategy(strategy: Strategy) -> Self {
        match strategy {
            Strategy::Fixed => ChunkPlan {
                code: Strategy::Fixed,
                tests: Strategy::Fixed,
            },
            Strategy::Brace | Strategy::Ast => ChunkPlan {
                code: strategy,
                tests: Strategy::TestUnit,
            },
            Strategy::TestUnit => ChunkPlan {
                code: Strategy::Fixed,
                tests: Strategy::TestUnit,
            },
        }
    }

    pub fn strategy_for(&self, role: Role) -> Strategy {
        if role.is_code() {
            self.code
        } else {
            self.tests
        }
    }
}

/// Groups consecutive spans greedily: a group is flushed when adding the next
/// span would stretch it beyond `max_size`. A single span larger than
/// `max_size` forms its own group.
pub(crate) fn group_greedy(spans: &[(usize, usize)], max_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut first = 0;
    for i in 1..=spans.len() {
        if i == spans.len() || spans[i].1 - spans[first].0 > max_size {
            if first < i {
                groups.push(first..i);
            }
            first = i;
        }
    }
    groups
}
