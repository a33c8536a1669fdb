use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::corpus::Requirement;
use crate::error::{Error, Result};
use crate::retrieval::{RetrievalResult, RetrievedHit};

pub const DEFAULT_CHAR_BUDGET: usize = 24_000;

pub const DEFAULT_LAYOUT: &str = "{{CONTEXT_CODE}}{{CONTEXT_TESTS}}{{ENVIRONMENT}}{{REQUIREMENT}}";

pub const DEFAULT_SYSTEM_PROMPT: &str = "\
You are a test engineer writing automated unit tests for an embedded C code base.
Only call functions, types and constants that appear in the provided context.
Return each test file as one fenced code block and nothing else.";

pub const DEFAULT_ENVIRONMENT: &str = "\
Tests are Python modules run by pytest against the firmware bindings.
Each test module must be self-contained and import only what it uses.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Code,
    Tests,
    Environment,
    Requirement,
}

const SLOTS: [(Slot, &str); 4] = [
    (Slot::Code, "CONTEXT_CODE"),
    (Slot::Tests, "CONTEXT_TESTS"),
    (Slot::Environment, "ENVIRONMENT"),
    (Slot::Requirement, "REQUIREMENT"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(Slot),
}

/// System prompt, fixed environment block, and the user-prompt layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system_text: String,
    pub environment_text: String,
    layout: Vec<Segment>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::new(DEFAULT_SYSTEM_PROMPT, DEFAULT_ENVIRONMENT, DEFAULT_LAYOUT)
            .expect("default layout is valid")
    }
}

impl PromptTemplate {
    /// Parses `layout`, which must contain each placeholder exactly once and
    /// in the order code, tests, environment, requirement.
    pub fn new(
        system_text: impl Into<String>,
        environment_text: impl Into<String>,
        layout: &str,
    ) -> Result<Self> {
        let mut segments = Vec::new();
        let mut rest = layout;
        while let Some(open) = rest.find("{{") {
            let close = rest[open..]
                .find("}}")
                .map(|c| open + c)
                .ok_or_else(|| Error::InvalidTemplate("unclosed `{{`".into()))?;
            let name = &rest[open + 2..close];
            let slot = SLOTS
                .iter()
                .find(|(_, n)| *n == name)
                .map(|(s, _)| *s)
                .ok_or_else(|| Error::InvalidTemplate(format!("unknown placeholder `{{{{{name}}}}}`")))?;
            if open > 0 {
                segments.push(Segment::Text(rest[..open].to_string()));
            }
            segments.push(Segment::Slot(slot));
            rest = &rest[close + 2..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Text(rest.to_string()));
        }
        let order: Vec<Slot> = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(slot) => Some(*slot),
                Segment::Text(_) => None,
            })
            .collect();
        let expected: Vec<Slot> = SLOTS.iter().map(|(s, _)| *s).collect();
        if order != expected {
            return Err(Error::InvalidTemplate(
                "layout must contain {{CONTEXT_CODE}}, {{CONTEXT_TESTS}}, {{ENVIRONMENT}}, \
                 {{REQUIREMENT}} once each, in that order"
                    .into(),
            ));
        }
        if segments.last() != Some(&Segment::Slot(Slot::Requirement)) {
            return Err(Error::InvalidTemplate(
                "layout must end with {{REQUIREMENT}}".into(),
            ));
        }
        Ok(PromptTemplate {
            system_text: system_text.into(),
            environment_text: environment_text.into(),
            layout: segments,
        })
    }

    /// Loads the layout and system prompt from files; either may be absent
    /// to keep the built-in text.
    pub fn load(
        layout_path: Option<&Path>,
        system_path: Option<&Path>,
        environment_path: Option<&Path>,
    ) -> Result<Self> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let layout = layout_path.map(read).transpose()?;
        let system = system_path.map(read).transpose()?;
        let env = environment_path.map(read).transpose()?;
        PromptTemplate::new(
            system.unwrap_or_else(|| DEFAULT_SYSTEM_PROMPT.to_string()),
            env.unwrap_or_else(|| DEFAULT_ENVIRONMENT.to_string()),
            layout.as_deref().unwrap_or(DEFAULT_LAYOUT),
        )
    }
}

/// The provenance line written above every context chunk.
pub fn source_header(hit: &RetrievedHit) -> String {
    format!("// source: {} [{}..{})", hit.doc_id, hit.start, hit.end)
}

fn with_blank_line(mut s: String) -> String {
    if s.is_empty() {
        return s;
    }
    while !s.ends_with("\n\n") {
        s.push('\n');
    }
    s
}

fn context_block(title: &str, hits: &[&RetrievedHit]) -> String {
    if hits.is_empty() {
        return String::new();
    }
    let mut out = format!("{title}\n\n");
    for hit in hits {
        out.push_str(&source_header(hit));
        out.push('\n');
        out.push_str(&with_blank_line(hit.text.clone()));
    }
    out
}

/// The environment text as it appears in the user prompt: verbatim, then a
/// blank line before whatever follows.
pub fn environment_block(environment_text: &str) -> String {
    with_blank_line(environment_text.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssembledPrompt {
    pub system_text: String,
    pub user_text: String,
    /// Chunk ids removed to fit the budget, in drop order.
    pub dropped: Vec<String>,
}

fn render(tpl: &PromptTemplate, code: &[&RetrievedHit], tests: &[&RetrievedHit], body: &str) -> String {
    let mut out = String::new();
    for seg in &tpl.layout {
        match seg {
            Segment::Text(t) => out.push_str(t),
            Segment::Slot(Slot::Code) => out.push_str(&context_block("Relevant headers and source code:", code)),
            Segment::Slot(Slot::Tests) => out.push_str(&context_block("Relevant existing tests:", tests)),
            Segment::Slot(Slot::Environment) => out.push_str(&environment_block(&tpl.environment_text)),
            Segment::Slot(Slot::Requirement) => out.push_str(body),
        }
    }
    out
}

/// Builds the user prompt: code context, test context, environment, then the
/// requirement body. Over budget, whole chunks are dropped: test hits first,
/// then code hits, lowest-ranked first within each.
pub fn assemble_prompt(
    retrieval: &RetrievalResult,
    req: &Requirement,
    tpl: &PromptTemplate,
    char_budget: usize,
) -> Result<AssembledPrompt> {
    let mut code: Vec<&RetrievedHit> = retrieval.code_hits.iter().collect();
    let mut tests: Vec<&RetrievedHit> = retrieval.test_hits.iter().collect();
    code.sort_by_key(|h| h.rank);
    tests.sort_by_key(|h| h.rank);

    let floor = render(tpl, &[], &[], &req.body).chars().count();
    if floor > char_budget {
        return Err(Error::BudgetTooSmall {
            budget: char_budget,
            required: floor,
        });
    }
    let mut dropped = Vec::new();
    loop {
        let user_text = render(tpl, &code, &tests, &req.body);
        if user_text.chars().count() <= char_budget {
            return Ok(AssembledPrompt {
                system_text: tpl.system_text.clone(),
                user_text,
                dropped,
            });
        }
        let victim = tests.pop().or_else(|| code.pop()).expect("floor fits the budget");
        dropped.push(victim.chunk_id.clone());
    }
}
