//! Online phase: retrieve context for a requirement, assemble the prompt,
//! call the model, and persist the extracted test files.

mod extract;
mod llm;
mod prompt;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Requirement;
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::retrieval::{retrieve, KnowledgeBase, RetrievalMode, RetrievalParams, RetrievalQuery, RetrievalResult};

pub use extract::{extract_tests, GeneratedTest};
pub use llm::{ChatClient, ChatConfig, LlmClient, LlmReply, LlmRequest, MockLlm, DEFAULT_TEMPERATURE};
pub use prompt::{
    assemble_prompt, environment_block, source_header, AssembledPrompt, PromptTemplate,
    DEFAULT_CHAR_BUDGET, DEFAULT_ENVIRONMENT, DEFAULT_LAYOUT, DEFAULT_SYSTEM_PROMPT,
};

pub const STAGES: [&str; 5] = ["retrieve", "assemble", "llm_call", "extract", "save"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub requirement_id: String,
    pub retrieval: Option<RetrievalResult>,
    pub prompt_chars: usize,
    pub dropped_chunks: Vec<String>,
    pub raw_response: String,
    pub tests: Vec<GeneratedTest>,
    /// Milliseconds per stage reached, keyed by the names in `STAGES`.
    pub timings: BTreeMap<String, f64>,
    pub llm_config_tag: String,
    pub llm_retries: u32,
    pub failed: bool,
    pub error: Option<String>,
    /// Offsets from the start of the batch, for wall-clock throughput.
    pub wall_start_ms: f64,
    pub wall_end_ms: f64,
}

impl GenerationRecord {
    pub fn saved_tests(&self) -> impl Iterator<Item = &GeneratedTest> {
        self.tests.iter().filter(|t| t.saved_path.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub out_dir: PathBuf,
    pub test_extension: String,
    pub retrieval: RetrievalParams,
    pub char_budget: usize,
}

impl GenerationConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        GenerationConfig {
            out_dir: out_dir.into(),
            test_extension: "py".into(),
            retrieval: RetrievalParams::default(),
            char_budget: DEFAULT_CHAR_BUDGET,
        }
    }
}

/// Everything one generation run reads; shared across workers.
pub struct Pipeline<'a> {
    /// May be absent only for `RetrievalMode::None`.
    pub kb: Option<&'a KnowledgeBase>,
    pub embedder: &'a dyn EmbeddingProvider,
    pub llm: &'a dyn LlmClient,
    pub template: &'a PromptTemplate,
    pub cfg: &'a GenerationConfig,
}

/// Characters other than ASCII alphanumerics, `-`, `_` and `.` become `_`.
pub fn file_stem(requirement_id: &str) -> String {
    requirement_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn test_file_name(requirement_id: &str, ordinal: usize, ext: &str) -> String {
    format!("{}_{ordinal}_test.{ext}", file_stem(requirement_id))
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, stage: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    timings.insert(stage.to_string(), t.elapsed().as_secs_f64() * 1e3);
    out
}

fn ms_since(origin: Instant) -> f64 {
    origin.elapsed().as_secs_f64() * 1e3
}

fn run_stages(req: &Requirement, p: &Pipeline<'_>, rec: &mut GenerationRecord) -> Result<()> {
    let mut timings = BTreeMap::new();
    let outcome = (|| {
        let params = &p.cfg.retrieval;
        let retrieval = timed(&mut timings, "retrieve", || match (p.kb, params.mode) {
            (Some(kb), _) => retrieve(kb, p.embedder, req, params),
            (None, RetrievalMode::None) => Ok(RetrievalResult {
                mode: RetrievalMode::None,
                code_hits: Vec::new(),
                test_hits: Vec::new(),
                query: RetrievalQuery {
                    requirement_id: req.id.clone(),
                    text: req.body.clone(),
                },
                k_code: params.k_code,
                k_test: params.k_test,
                latency_ms: 0.0,
            }),
            (None, _) => Err(Error::EmptyIndex),
        })?;
        let prompt = timed(&mut timings, "assemble", || {
            assemble_prompt(&retrieval, req, p.template, p.cfg.char_budget)
        });
        rec.retrieval = Some(retrieval);
        let prompt = prompt?;
        rec.prompt_chars = prompt.user_text.chars().count() + prompt.system_text.chars().count();
        rec.dropped_chunks = prompt.dropped.clone();

        let reply = timed(&mut timings, "llm_call", || {
            p.llm.complete(&LlmRequest {
                requirement_id: &req.id,
                system_text: &prompt.system_text,
                user_text: &prompt.user_text,
            })
        })?;
        rec.llm_retries = reply.retries;
        rec.raw_response = reply.text;

        rec.tests = timed(&mut timings, "extract", || extract_tests(&rec.raw_response, &req.id))?;

        timed(&mut timings, "save", || {
            fs::create_dir_all(&p.cfg.out_dir).map_err(|e| Error::io(&p.cfg.out_dir, e))?;
            for t in &mut rec.tests {
                let path = p
                    .cfg
                    .out_dir
                    .join(test_file_name(&req.id, t.ordinal, &p.cfg.test_extension));
                fs::write(&path, &t.code).map_err(|e| Error::io(&path, e))?;
                t.saved_path = Some(path);
            }
            Ok(())
        })
    })();
    rec.timings = timings;
    outcome
}

/// Runs retrieve, assemble, llm_call, extract and save for one requirement.
/// Stage errors are captured in the record instead of being returned.
pub fn generate_for_requirement(req: &Requirement, p: &Pipeline<'_>) -> GenerationRecord {
    generate_at(req, p, Instant::now())
}

fn generate_at(req: &Requirement, p: &Pipeline<'_>, origin: Instant) -> GenerationRecord {
    let mut rec = GenerationRecord {
        requirement_id: req.id.clone(),
        retrieval: None,
        prompt_chars: 0,
        dropped_chunks: Vec::new(),
        raw_response: String::new(),
        tests: Vec::new(),
        timings: BTreeMap::new(),
        llm_config_tag: p.llm.tag(),
        llm_retries: 0,
        failed: false,
        error: None,
        wall_start_ms: ms_since(origin),
        wall_end_ms: 0.0,
    };
    if let Err(e) = run_stages(req, p, &mut rec) {
        log::warn!("generation for {} failed: {e}", req.id);
        rec.failed = true;
        rec.error = Some(e.to_string());
    }
    rec.wall_end_ms = ms_since(origin);
    rec
}

/// Appends records as JSON lines; safe to share between workers.
pub struct LedgerWriter {
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
}

impl LedgerWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(LedgerWriter {
            path: path.to_path_buf(),
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn append(&self, rec: &GenerationRecord) -> Result<()> {
        let line = serde_json::to_string(rec).map_err(|e| Error::json("generation record", e))?;
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(out, "{line}")
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_ledger(path: &Path) -> Result<Vec<GenerationRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::json(format!("{} line {}", path.display(), i + 1), e)
        })?);
    }
    Ok(out)
}

/// Generates for every requirement with at most `jobs` concurrent workers.
/// Records stream to `ledger` as they finish; the returned records follow
/// input order.
pub fn run_batch(
    reqs: &[Requirement],
    p: &Pipeline<'_>,
    jobs: usize,
    ledger: Option<&LedgerWriter>,
) -> Result<Vec<GenerationRecord>> {
    let origin = Instant::now();
    let work = |req: &Requirement| -> Result<GenerationRecord> {
        let rec = generate_at(req, p, origin);
        if let Some(l) = ledger {
            l.append(&rec)?;
        }
        Ok(rec)
    };
    if jobs <= 1 {
        return reqs.iter().map(work).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    pool.install(|| reqs.par_iter().map(work).collect())
}
