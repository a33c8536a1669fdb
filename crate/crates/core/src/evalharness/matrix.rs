use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::timing::measure_timing;
use crate::chunker::{ChunkParams, ChunkPlan, Strategy};
use crate::config::{EmbeddingSpec, LlmSpec};
use crate::corpus::{CorpusConfig, Requirement, RoleGlobs, RoleRules};
use crate::error::{Error, Result};
use crate::genpipe::{run_batch, GenerationConfig, LedgerWriter, Pipeline, PromptTemplate};
use crate::lexical::Bm25Params;
use crate::retrieval::{index_corpus, KnowledgeBase, RetrievalMode, RetrievalParams};
use crate::validate::{aggregate_validation, validate_all, StageConfig, ValidationSummary};

/// Code-side glob rules for one knowledge-base variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbVariant {
    #[serde(default)]
    pub c_header: Option<RoleGlobs>,
    #[serde(default)]
    pub c_source: Option<RoleGlobs>,
}

/// Preset names or an explicit list of config ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Selection {
    Preset(String),
    Explicit(Vec<String>),
}

/// The five sweep axes. Each named entry resolves to concrete settings; a
/// test library selects which legacy tests join the knowledge base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixSpec {
    pub llms: IndexMap<String, LlmSpec>,
    pub embeddings: IndexMap<String, EmbeddingSpec>,
    pub strategies: Vec<Strategy>,
    pub kb_variants: IndexMap<String, KbVariant>,
    pub test_libs: IndexMap<String, RoleGlobs>,
    /// `subset` (the default), `full`, `full+baselines`, or a list of ids.
    pub selection: Selection,
    pub jobs: usize,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        let defaults = RoleRules::default();
        MatrixSpec {
            llms: [
                ("mock-a".to_string(), LlmSpec::Mock { responses: None }),
                ("mock-b".to_string(), LlmSpec::Mock { responses: None }),
            ]
            .into_iter()
            .collect(),
            embeddings: [
                ("hash-256".to_string(), EmbeddingSpec::Hash { dims: 256 }),
                ("hash-1024".to_string(), EmbeddingSpec::Hash { dims: 1024 }),
            ]
            .into_iter()
            .collect(),
            strategies: Strategy::ALL.to_vec(),
            kb_variants: [
                (
                    "full".to_string(),
                    KbVariant {
                        c_header: defaults.c_header.clone(),
                        c_source: defaults.c_source.clone(),
                    },
                ),
                (
                    "headers".to_string(),
                    KbVariant {
                        c_header: defaults.c_header,
                        c_source: None,
                    },
                ),
            ]
            .into_iter()
            .collect(),
            test_libs: [
                ("all-tests".to_string(), defaults.legacy_test.expect("default test globs")),
                ("unit-tests".to_string(), RoleGlobs::new(&["**/test_*.py"])),
            ]
            .into_iter()
            .collect(),
            selection: Selection::Preset("subset".into()),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigKind {
    #[serde(rename = "RAG")]
    Rag,
    #[serde(rename = "RND")]
    Random,
    #[serde(rename = "NOR")]
    NoRetrieval,
}

impl ConfigKind {
    pub fn label(self) -> &'static str {
        match self {
            ConfigKind::Rag => "RAG",
            ConfigKind::Random => "RND",
            ConfigKind::NoRetrieval => "NOR",
        }
    }

    pub fn mode(self) -> RetrievalMode {
        match self {
            ConfigKind::Rag => RetrievalMode::Hybrid,
            ConfigKind::Random => RetrievalMode::Random,
            ConfigKind::NoRetrieval => RetrievalMode::None,
        }
    }
}

impl fmt::Display for ConfigKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub id: String,
    pub kind: ConfigKind,
    pub llm: String,
    pub embedding: String,
    pub strategy: Strategy,
    pub kb_variant: String,
    pub test_lib: String,
}

impl MatrixConfig {
    fn new(kind: ConfigKind, llm: &str, embedding: &str, strategy: Strategy, kb: &str, lib: &str) -> Self {
        let id = match kind {
            ConfigKind::Rag => format!("rag:{llm}:{embedding}:{strategy}:{kb}:{lib}"),
            ConfigKind::Random => format!("rnd:{llm}"),
            ConfigKind::NoRetrieval => format!("nor:{llm}"),
        };
        MatrixConfig {
            id,
            kind,
            llm: llm.into(),
            embedding: embedding.into(),
            strategy,
            kb_variant: kb.into(),
            test_lib: lib.into(),
        }
    }

    /// Directory-safe form of the id.
    pub fn slug(&self) -> String {
        self.id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
            .collect()
    }

    fn index_key(&self) -> (String, Strategy, String, String) {
        (self.embedding.clone(), self.strategy, self.kb_variant.clone(), self.test_lib.clone())
    }
}

impl MatrixSpec {
    fn first<'a, V>(axis: &'a IndexMap<String, V>, name: &str) -> Result<&'a str> {
        axis.keys()
            .next()
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("matrix axis `{name}` is empty")))
    }

    /// Every RAG combination, in axis order.
    pub fn full(&self) -> Vec<MatrixConfig> {
        let mut out = Vec::new();
        for llm in self.llms.keys() {
            for emb in self.embeddings.keys() {
                for &strategy in &self.strategies {
                    for kb in self.kb_variants.keys() {
                        for lib in self.test_libs.keys() {
                            out.push(MatrixConfig::new(ConfigKind::Rag, llm, emb, strategy, kb, lib));
                        }
                    }
                }
            }
        }
        out
    }

    /// One random-retrieval and one no-retrieval baseline per LLM. The random
    /// baseline samples from the index of the first entry on every other
    /// axis.
    pub fn baselines(&self) -> Result<Vec<MatrixConfig>> {
        let emb = Self::first(&self.embeddings, "embeddings")?;
        let kb = Self::first(&self.kb_variants, "kb_variants")?;
        let lib = Self::first(&self.test_libs, "test_libs")?;
        let strategy = *self
            .strategies
            .first()
            .ok_or_else(|| Error::Config("matrix axis `strategies` is empty".into()))?;
        let mut out = Vec::new();
        for kind in [ConfigKind::Random, ConfigKind::NoRetrieval] {
            for llm in self.llms.keys() {
                out.push(MatrixConfig::new(kind, llm, emb, strategy, kb, lib));
            }
        }
        Ok(out)
    }

    /// Every combination on the first knowledge-base variant, plus the AST
    /// configurations on the remaining variants, plus the baselines. With
    /// two entries per axis and four strategies: 32 + 8 + 2 + 2 = 44.
    pub fn default_subset(&self) -> Result<Vec<MatrixConfig>> {
        let first_kb = Self::first(&self.kb_variants, "kb_variants")?;
        let mut out: Vec<MatrixConfig> = self
            .full()
            .into_iter()
            .filter(|c| c.kb_variant == first_kb || c.strategy == Strategy::Ast)
            .collect();
        out.extend(self.baselines()?);
        Ok(out)
    }

    pub fn select(&self, selection: &Selection) -> Result<Vec<MatrixConfig>> {
        match selection {
            Selection::Preset(p) if p == "subset" => self.default_subset(),
            Selection::Preset(p) if p == "full" => Ok(self.full()),
            Selection::Preset(p) if p == "full+baselines" => {
                let mut all = self.full();
                all.extend(self.baselines()?);
                Ok(all)
            }
            Selection::Preset(p) => Err(Error::Config(format!("unknown matrix selection `{p}`"))),
            Selection::Explicit(ids) => {
                let mut known = self.full();
                known.extend(self.baselines()?);
                ids.iter()
                    .map(|id| {
                        known
                            .iter()
                            .find(|c| &c.id == id)
                            .cloned()
                            .ok_or_else(|| Error::Config(format!("unknown matrix config `{id}`")))
                    })
                    .collect()
            }
        }
    }

    fn roles(&self, cfg: &MatrixConfig) -> Result<RoleRules> {
        let kb = self
            .kb_variants
            .get(&cfg.kb_variant)
            .ok_or_else(|| Error::Config(format!("unknown kb variant `{}`", cfg.kb_variant)))?;
        let lib = self
            .test_libs
            .get(&cfg.test_lib)
            .ok_or_else(|| Error::Config(format!("unknown test library `{}`", cfg.test_lib)))?;
        Ok(RoleRules {
            legacy_test: Some(lib.clone()),
            c_header: kb.c_header.clone(),
            c_source: kb.c_source.clone(),
        })
    }
}

/// Settings shared by every configuration of a sweep.
pub struct MatrixEnv<'a> {
    pub corpus_root: PathBuf,
    pub chunk_params: ChunkParams,
    pub bm25: Bm25Params,
    pub retrieval: RetrievalParams,
    pub template: &'a PromptTemplate,
    pub char_budget: usize,
    pub test_extension: String,
    pub requirements: &'a [Requirement],
    /// Validation runs only when stages are given.
    pub stages: Option<&'a [StageConfig]>,
    pub validation_jobs: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub config: MatrixConfig,
    pub chunks: usize,
    pub requirements: usize,
    pub failed_requirements: usize,
    pub tests: usize,
    pub validation: Option<ValidationSummary>,
    pub tests_per_hour: Option<f64>,
    pub mean_retrieval_ms: f64,
    pub error: Option<String>,
}

impl MatrixRow {
    fn failed(config: MatrixConfig, err: &Error) -> Self {
        MatrixRow {
            config,
            chunks: 0,
            requirements: 0,
            failed_requirements: 0,
            tests: 0,
            validation: None,
            tests_per_hour: None,
            mean_retrieval_ms: 0.0,
            error: Some(err.to_string()),
        }
    }
}

type KbCache = Mutex<HashMap<(String, Strategy, String, String), Arc<(KnowledgeBase, usize)>>>;

fn knowledge_base(spec: &MatrixSpec, cfg: &MatrixConfig, env: &MatrixEnv<'_>, cache: &KbCache) -> Result<Arc<(KnowledgeBase, usize)>> {
    let key = cfg.index_key();
    if let Some(hit) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Ok(Arc::clone(hit));
    }
    let provider = spec
        .embeddings
        .get(&cfg.embedding)
        .ok_or_else(|| Error::Config(format!("unknown embedding `{}`", cfg.embedding)))?
        .build()?;
    let corpus = CorpusConfig {
        root: env.corpus_root.clone(),
        roles: spec.roles(cfg)?,
        requirement_file: None,
    };
    let built = index_corpus(&corpus, ChunkPlan::for_strategy(cfg.strategy), &env.chunk_params, provider.as_ref())?;
    let kb = Arc::new((KnowledgeBase::from_index(&built.index, env.bm25)?, built.chunks.len()));
    cache
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(key, Arc::clone(&kb));
    Ok(kb)
}

fn run_one(spec: &MatrixSpec, cfg: &MatrixConfig, env: &MatrixEnv<'_>, cache: &KbCache) -> Result<MatrixRow> {
    let llm = spec
        .llms
        .get(&cfg.llm)
        .ok_or_else(|| Error::Config(format!("unknown llm `{}`", cfg.llm)))?
        .build()?;
    let embedder = spec
        .embeddings
        .get(&cfg.embedding)
        .ok_or_else(|| Error::Config(format!("unknown embedding `{}`", cfg.embedding)))?
        .build()?;
    let kb = match cfg.kind {
        ConfigKind::NoRetrieval => None,
        _ => Some(knowledge_base(spec, cfg, env, cache)?),
    };
    let dir = env.out_dir.join(cfg.slug());
    let gen_cfg = GenerationConfig {
        out_dir: dir.join("tests"),
        test_extension: env.test_extension.clone(),
        retrieval: RetrievalParams {
            mode: cfg.kind.mode(),
            ..env.retrieval
        },
        char_budget: env.char_budget,
    };
    if gen_cfg.out_dir.exists() {
        fs::remove_dir_all(&gen_cfg.out_dir).map_err(|e| Error::io(&gen_cfg.out_dir, e))?;
    }
    let pipeline = Pipeline {
        kb: kb.as_deref().map(|(kb, _)| kb),
        embedder: embedder.as_ref(),
        llm: llm.as_ref(),
        template: env.template,
        cfg: &gen_cfg,
    };
    let ledger = LedgerWriter::create(&dir.join("ledger.jsonl"))?;
    let records = run_batch(env.requirements, &pipeline, 1, Some(&ledger))?;
    let timing = measure_timing(&records)?;
    let saved: Vec<PathBuf> = records
        .iter()
        .flat_map(|r| r.saved_tests().filter_map(|t| t.saved_path.clone()))
        .collect();
    let validation = match env.stages {
        Some(stages) if !saved.is_empty() => Some(aggregate_validation(
            &validate_all(&saved, stages, env.validation_jobs)?,
            false,
        )?),
        _ => None,
    };
    let retrievals: Vec<f64> = records
        .iter()
        .filter_map(|r| r.retrieval.as_ref().map(|x| x.latency_ms))
        .collect();
    Ok(MatrixRow {
        config: cfg.clone(),
        chunks: kb.as_ref().map_or(0, |k| k.1),
        requirements: records.len(),
        failed_requirements: records.iter().filter(|r| r.failed).count(),
        tests: saved.len(),
        validation,
        tests_per_hour: timing.tests_per_hour,
        mean_retrieval_ms: if retrievals.is_empty() {
            0.0
        } else {
            retrievals.iter().sum::<f64>() / retrievals.len() as f64
        },
        error: None,
    })
}

/// Runs every config; a failing config yields a row with `error` set and
/// the sweep continues. Indices are shared between configs that differ
/// only in the LLM. Rows follow `configs` order.
pub fn run_matrix(spec: &MatrixSpec, configs: &[MatrixConfig], env: &MatrixEnv<'_>) -> Result<Vec<MatrixRow>> {
    let cache: KbCache = Mutex::new(HashMap::new());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    Ok(pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                run_one(spec, cfg, env, &cache).unwrap_or_else(|e| {
                    log::warn!("matrix config {} failed: {e}", cfg.id);
                    MatrixRow::failed(cfg.clone(), &e)
                })
            })
            .collect()
    }))
}

fn pct(s: &Option<ValidationSummary>, f: impl Fn(&ValidationSummary) -> f64) -> String {
    s.as_ref().map_or_else(|| "-".into(), |v| format!("{:.1}%", f(v)))
}

pub fn render_matrix_table(rows: &[MatrixRow]) -> String {
    let width = rows.iter().map(|r| r.config.id.len()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:<width$}  {:<4}  {:>6}  {:>5}  {:>6}  {:>9}  {:>9}  {:>10}\n",
        "config", "kind", "chunks", "tests", "failed", "syntactic", "runtime", "tests/hour"
    );
    for r in rows {
        let tph = r.tests_per_hour.map_or_else(|| "-".into(), |t| format!("{t:.0}"));
        let failed = if r.error.is_some() { "error".to_string() } else { r.failed_requirements.to_string() };
        out.push_str(&format!(
            "{:<width$}  {:<4}  {:>6}  {:>5}  {:>6}  {:>9}  {:>9}  {:>10}\n",
            r.config.id,
            r.config.kind.label(),
            r.chunks,
            r.tests,
            failed,
            pct(&r.validation, |v| v.syntactic.percent),
            pct(&r.validation, |v| v.runtime.percent),
            tph,
        ));
    }
    out
}

pub fn write_matrix_csv(rows: &[MatrixRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "id", "kind", "llm", "embedding", "strategy", "kb_variant", "test_lib", "chunks",
        "requirements", "failed_requirements", "tests", "syntactic_pct", "import_pct",
        "runtime_pct", "tests_per_hour", "mean_retrieval_ms", "error",
    ])?;
    for r in rows {
        let c = &r.config;
        let v = |f: fn(&ValidationSummary) -> f64| r.validation.as_ref().map(f).map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            c.id.clone(),
            c.kind.label().into(),
            c.llm.clone(),
            c.embedding.clone(),
            c.strategy.to_string(),
            c.kb_variant.clone(),
            c.test_lib.clone(),
            r.chunks.to_string(),
            r.requirements.to_string(),
            r.failed_requirements.to_string(),
            r.tests.to_string(),
            v(|s| s.syntactic.percent),
            v(|s| s.import.percent),
            v(|s| s.runtime.percent),
            r.tests_per_hour.map(|t| t.to_string()).unwrap_or_default(),
            r.mean_retrieval_ms.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
