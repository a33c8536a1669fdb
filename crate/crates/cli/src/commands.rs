use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::CommandFactory;
use ragsmith_core::config::{GlobalConfig, LlmSpec};
use ragsmith_core::corpus::{load_requirements, Requirement};
use ragsmith_core::embed::{export_embeddings, EmbeddingProvider, VectorIndex};
use ragsmith_core::evalharness::{
    eval_retrieval, import_reviews, measure_timing, project_savings, render_matrix_table, run_matrix,
    write_matrix_csv, CostModel, GroundTruth, MatrixEnv, MatrixRow, RetrievalEvalReport, SavingsReport, Selection,
    TimingReport,
};
use ragsmith_core::genpipe::{run_batch, GenerationConfig, LedgerWriter, LlmClient, MockLlm, Pipeline};
use ragsmith_core::retrieval::{index_corpus, retrieve, KnowledgeBase, RetrievalMode, RetrievalParams, RetrievalResult};
use ragsmith_core::validate::{
    aggregate_validation, discover_tests, render_table, validate_all, ValidationReport, ValidationSummary,
};
use serde::{Deserialize, Serialize};

use crate::{
    Cli, Command, EvalArgs, ExportArgs, GenerateArgs, GlobalArgs, IndexArgs, IndexSource, LlmChoice, MatrixArgs,
    QueryArgs, RetrievalOverrides, SavingsArgs, ValidateArgs,
};

/// Reports a usage problem the argument parser cannot see and exits 2.
fn usage_error(msg: &str) -> ! {
    Cli::command().error(ErrorKind::MissingRequiredArgument, msg).exit()
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_config(global: &GlobalArgs) -> Result<GlobalConfig> {
    GlobalConfig::load(&global.config).with_context(|| format!("loading config `{}`", global.config.display()))
}

fn cpu_count() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn requirements(cfg: &GlobalConfig, flag: Option<&Path>) -> Result<Vec<Requirement>> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.corpus.requirement_file.clone())
        .unwrap_or_else(|| usage_error("no requirements: pass --requirements or set corpus.requirement_file"));
    load_requirements(&path).with_context(|| format!("loading requirements `{}`", path.display()))
}

fn retrieval_params(cfg: &GlobalConfig, o: &RetrievalOverrides) -> RetrievalParams {
    let mut p = cfg.retrieval;
    if let Some(mode) = o.mode {
        p.mode = mode;
    }
    if let Some(k) = o.k_code {
        p.k_code = k;
    }
    if let Some(k) = o.k_test {
        p.k_test = k;
    }
    if let Some(seed) = o.seed {
        p.seed = seed;
    }
    p
}

fn build_index(cfg: &GlobalConfig, provider: &dyn EmbeddingProvider) -> Result<VectorIndex> {
    let built = index_corpus(&cfg.corpus, cfg.chunking.plan(), &cfg.chunking.params, provider)?;
    for r in &built.scan.rejected {
        log::warn!("skipped {}: {}", r.id, r.reason);
    }
    Ok(built.index)
}

fn knowledge_base(cfg: &GlobalConfig, source: &IndexSource, provider: &dyn EmbeddingProvider) -> Result<KnowledgeBase> {
    let index = match &source.index {
        Some(path) => VectorIndex::load(path).with_context(|| format!("loading index `{}`", path.display()))?,
        None => build_index(cfg, provider)?,
    };
    Ok(KnowledgeBase::from_index(&index, cfg.bm25)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Index(a) => cmd_index(g, a),
        Command::Query(a) => cmd_query(g, a),
        Command::Generate(a) => cmd_generate(g, a),
        Command::Validate(a) => cmd_validate(g, a),
        Command::Eval(a) => cmd_eval(g, a),
        Command::Matrix(a) => cmd_matrix(g, a),
        Command::ExportEmbeddings(a) => cmd_export(g, a),
        Command::Savings(a) => cmd_savings(a, g.json),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IndexSummary {
    pub index: PathBuf,
    pub provider: String,
    pub dims: usize,
    pub chunks: usize,
    /// role -> strategy -> chunk count.
    pub per_role: BTreeMap<String, BTreeMap<String, usize>>,
    pub rejected: Vec<String>,
}

fn cmd_index(g: &GlobalArgs, a: &IndexArgs) -> Result<()> {
    let mut cfg = load_config(g)?;
    if let Some(s) = a.strategy {
        cfg.chunking.strategy = s;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or_else(cpu_count).max(1))
        .build()?;
    let provider = cfg.embedding.build()?;
    let built = pool.install(|| index_corpus(&cfg.corpus, cfg.chunking.plan(), &cfg.chunking.params, provider.as_ref()))?;
    let out = a.out.clone().unwrap_or_else(|| cfg.output.index_path());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating `{}`", dir.display()))?;
    }
    built.index.save(&out)?;

    let mut per_role: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for c in &built.chunks {
        *per_role
            .entry(c.role.to_string())
            .or_default()
            .entry(c.strategy.to_string())
            .or_default() += 1;
    }
    let summary = IndexSummary {
        index: out,
        provider: built.index.provider_tag().to_string(),
        dims: built.index.dims(),
        chunks: built.chunks.len(),
        per_role,
        rejected: built.scan.rejected.iter().map(|r| format!("{}: {}", r.id, r.reason)).collect(),
    };
    if g.json {
        return print_json(&summary);
    }
    println!("{:<12}  {:<10}  {:>6}", "role", "strategy", "chunks");
    for (role, by_strategy) in &summary.per_role {
        for (strategy, n) in by_strategy {
            println!("{role:<12}  {strategy:<10}  {n:>6}");
        }
    }
    println!("{} chunks, {} ({} dims) -> {}", summary.chunks, summary.provider, summary.dims, summary.index.display());
    for r in &summary.rejected {
        println!("skipped {r}");
    }
    Ok(())
}

fn cmd_query(g: &GlobalArgs, a: &QueryArgs) -> Result<()> {
    let cfg = load_config(g)?;
    let req = match (&a.text, &a.requirement) {
        (Some(text), _) => Requirement {
            id: "query".into(),
            title: String::new(),
            body: text.clone(),
        },
        (None, Some(id)) => requirements(&cfg, a.requirements.as_deref())?
            .into_iter()
            .find(|r| &r.id == id)
            .with_context(|| format!("no requirement with id `{id}`"))?,
        (None, None) => usage_error("pass query text or --requirement"),
    };
    let params = retrieval_params(&cfg, &a.retrieval);
    let provider = cfg.embedding.build()?;
    let kb = knowledge_base(&cfg, &a.source, provider.as_ref())?;
    let result = retrieve(&kb, provider.as_ref(), &req, &params)?;
    if g.json {
        return print_json(&result);
    }
    print_hits(&result);
    Ok(())
}

fn print_hits(r: &RetrievalResult) {
    println!("{:<6}  {:>4}  {:>10}  {:<16}  source", "role", "rank", "score", "chunk");
    for (label, hits) in [("code", &r.code_hits), ("tests", &r.test_hits)] {
        for h in hits {
            println!(
                "{label:<6}  {:>4}  {:>10.6}  {:<16}  {} [{}..{})",
                h.rank, h.score, h.chunk_id, h.doc_id, h.start, h.end
            );
        }
    }
    println!(
        "{} mode, {} code + {} test hits in {:.2} ms",
        r.mode,
        r.code_hits.len(),
        r.test_hits.len(),
        r.latency_ms
    );
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FailedRequirement {
    pub requirement_id: String,
    pub error: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub mode: RetrievalMode,
    pub llm: String,
    pub ledger: PathBuf,
    pub tests_dir: PathBuf,
    pub requirements: usize,
    pub tests: usize,
    pub failed: Vec<FailedRequirement>,
    pub timing: TimingReport,
}

fn llm_client(cfg: &GlobalConfig, a: &GenerateArgs) -> Result<Box<dyn LlmClient>> {
    if let Some(path) = &a.responses {
        return Ok(Box::new(MockLlm::from_fixture(path)?));
    }
    match (a.llm, &cfg.llm) {
        (None, spec) | (Some(LlmChoice::Mock), spec @ LlmSpec::Mock { .. }) | (Some(LlmChoice::Live), spec @ LlmSpec::Live(_)) => {
            Ok(spec.build()?)
        }
        (Some(LlmChoice::Mock), LlmSpec::Live(_)) => Ok(Box::new(MockLlm::synthetic())),
        (Some(LlmChoice::Live), LlmSpec::Mock { .. }) => {
            bail!("--llm live needs an `llm` section with provider `live` in the config")
        }
    }
}

fn cmd_generate(g: &GlobalArgs, a: &GenerateArgs) -> Result<()> {
    let cfg = load_config(g)?;
    let reqs = requirements(&cfg, a.requirements.as_deref())?;
    let params = retrieval_params(&cfg, &a.retrieval);
    let embedder = cfg.embedding.build()?;
    let kb = match params.mode {
        RetrievalMode::None => None,
        _ => Some(knowledge_base(&cfg, &a.source, embedder.as_ref())?),
    };
    let llm = llm_client(&cfg, a)?;
    let template = cfg.prompt.load_template()?;
    let out = a.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let gen_cfg = GenerationConfig {
        out_dir: out.join("tests"),
        test_extension: cfg.generation.test_extension.clone(),
        retrieval: params,
        char_budget: cfg.prompt.char_budget,
    };
    if gen_cfg.out_dir.exists() {
        fs::remove_dir_all(&gen_cfg.out_dir).with_context(|| format!("clearing `{}`", gen_cfg.out_dir.display()))?;
    }
    fs::create_dir_all(&out).with_context(|| format!("creating `{}`", out.display()))?;
    let pipeline = Pipeline {
        kb: kb.as_ref(),
        embedder: embedder.as_ref(),
        llm: llm.as_ref(),
        template: &template,
        cfg: &gen_cfg,
    };
    let ledger_path = out.join("ledger.jsonl");
    let ledger = LedgerWriter::create(&ledger_path)?;
    let jobs = a.jobs.unwrap_or(cfg.generation.jobs).max(1);
    let records = run_batch(&reqs, &pipeline, jobs, Some(&ledger))?;
    let timing = measure_timing(&records)?;
    let summary = GenerateSummary {
        mode: params.mode,
        llm: llm.tag(),
        ledger: ledger_path,
        tests_dir: gen_cfg.out_dir.clone(),
        requirements: records.len(),
        tests: records.iter().map(|r| r.saved_tests().count()).sum(),
        failed: records
            .iter()
            .filter(|r| r.failed)
            .map(|r| FailedRequirement {
                requirement_id: r.requirement_id.clone(),
                error: r.error.clone().unwrap_or_default(),
            })
            .collect(),
        timing,
    };
    if g.json {
        return print_json(&summary);
    }
    println!(
        "{} requirements, {} tests, {} failed ({} mode, {})",
        summary.requirements,
        summary.tests,
        summary.failed.len(),
        summary.mode,
        summary.llm
    );
    for f in &summary.failed {
        println!("  failed {}: {}", f.requirement_id, f.error);
    }
    match summary.timing.tests_per_hour {
        Some(t) => println!("throughput {t:.0} tests/hour over {:.0} ms", summary.timing.wall_ms),
        None => println!("throughput n/a"),
    }
    println!("ledger {}", summary.ledger.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ValidateOutput {
    pub label: String,
    pub summary: ValidationSummary,
    pub reports: Vec<ValidationReport>,
}

fn cmd_validate(g: &GlobalArgs, a: &ValidateArgs) -> Result<()> {
    let cfg = load_config(g)?;
    if cfg.validation.stages.is_empty() {
        bail!("no validation stages configured under `validation.stages`");
    }
    let dir = a.tests.clone().unwrap_or_else(|| cfg.output.tests_dir());
    let suffix = format!("_test.{}", cfg.generation.test_extension);
    let paths = discover_tests(&dir, &suffix)?;
    if paths.is_empty() {
        bail!("no `*{suffix}` files under `{}`", dir.display());
    }
    let jobs = a.jobs.or(cfg.validation.jobs).unwrap_or_else(cpu_count).max(1);
    let reports = validate_all(&paths, &cfg.validation.stages, jobs)?;
    let conditional = a.conditional_rates || cfg.validation.conditional_rates;
    let summary = aggregate_validation(&reports, conditional)?;
    let out = ValidateOutput {
        label: a.label.clone(),
        summary,
        reports,
    };
    if g.json {
        return print_json(&out);
    }
    print!("{}", render_table(&[(out.label.clone(), out.summary.clone())]));
    if out.summary.timeouts > 0 {
        println!("{} stage timeout(s)", out.summary.timeouts);
    }
    Ok(())
}

fn cmd_eval(g: &GlobalArgs, a: &EvalArgs) -> Result<()> {
    let cfg = load_config(g)?;
    let gt_path = a
        .ground_truth
        .clone()
        .or_else(|| cfg.evaluation.ground_truth.clone())
        .unwrap_or_else(|| usage_error("no ground truth: pass --ground-truth or set evaluation.ground_truth"));
    let gt = GroundTruth::load(&gt_path)?;
    let reqs = requirements(&cfg, a.requirements.as_deref())?;
    let params = retrieval_params(&cfg, &a.retrieval);
    let provider = cfg.embedding.build()?;
    let kb = knowledge_base(&cfg, &a.source, provider.as_ref())?;
    let k = a.k.unwrap_or(cfg.evaluation.k);
    let scope = a.scope.map_or(cfg.evaluation.scope, Into::into);
    let report: RetrievalEvalReport = eval_retrieval(&gt, &reqs, &kb, provider.as_ref(), &params, scope, k)?;
    if g.json {
        return print_json(&report);
    }
    let width = report.rows.iter().map(|r| r.requirement_id.len()).max().unwrap_or(0).max(11);
    println!("{:<width$}  {:>6}  {:>6}  {:>8}", "requirement", "P@k", "R@k", "relevant");
    for r in &report.rows {
        println!("{:<width$}  {:>6.3}  {:>6.3}  {:>8}", r.requirement_id, r.precision, r.recall, r.relevant);
    }
    println!(
        "{} mode, k={}: mean P@k {:.3}, mean R@k {:.3}",
        report.mode, report.k, report.mean_precision, report.mean_recall
    );
    Ok(())
}

fn cmd_matrix(g: &GlobalArgs, a: &MatrixArgs) -> Result<()> {
    let cfg = load_config(g)?;
    let mut spec = cfg.matrix.clone();
    if let Some(jobs) = a.jobs {
        spec.jobs = jobs;
    }
    let selection = match a.select.as_deref() {
        None => spec.selection.clone(),
        Some(s) if ["subset", "full", "full+baselines"].contains(&s) => Selection::Preset(s.into()),
        Some(s) => Selection::Explicit(s.split(',').map(|id| id.trim().to_string()).collect()),
    };
    let configs = spec.select(&selection)?;
    if a.list {
        if g.json {
            return print_json(&configs);
        }
        for c in &configs {
            println!("{}", c.id);
        }
        println!("{} configurations", configs.len());
        return Ok(());
    }
    let reqs = requirements(&cfg, a.requirements.as_deref())?;
    let template = cfg.prompt.load_template()?;
    let stages = (!a.no_validate && !cfg.validation.stages.is_empty()).then_some(cfg.validation.stages.as_slice());
    let out = a.out.clone().unwrap_or_else(|| cfg.output.matrix_dir());
    fs::create_dir_all(&out).with_context(|| format!("creating `{}`", out.display()))?;
    let env = MatrixEnv {
        corpus_root: cfg.corpus.root.clone(),
        chunk_params: cfg.chunking.params.clone(),
        bm25: cfg.bm25,
        retrieval: cfg.retrieval,
        template: &template,
        char_budget: cfg.prompt.char_budget,
        test_extension: cfg.generation.test_extension.clone(),
        requirements: &reqs,
        stages,
        validation_jobs: cfg.validation.jobs.unwrap_or_else(cpu_count).max(1),
        out_dir: out.clone(),
    };
    let rows: Vec<MatrixRow> = run_matrix(&spec, &configs, &env)?;
    let csv_path = out.join("matrix.csv");
    write_matrix_csv(&rows, &csv_path)?;
    if g.json {
        return print_json(&rows);
    }
    print!("{}", render_matrix_table(&rows));
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} configurations, {errors} failed -> {}", rows.len(), csv_path.display());
    for r in rows.iter().filter(|r| r.error.is_some()) {
        println!("  {}: {}", r.config.id, r.error.as_deref().unwrap_or_default());
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportSummary {
    pub out: PathBuf,
    pub rows: usize,
    pub dims: usize,
}

fn cmd_export(g: &GlobalArgs, a: &ExportArgs) -> Result<()> {
    let cfg = load_config(g)?;
    let index = match &a.source.index {
        Some(p) => VectorIndex::load(p).with_context(|| format!("loading index `{}`", p.display()))?,
        None => build_index(&cfg, cfg.embedding.build()?.as_ref())?,
    };
    let rows = export_embeddings(&index, &a.out)?;
    let summary = ExportSummary {
        out: a.out.clone(),
        rows,
        dims: index.dims(),
    };
    if g.json {
        return print_json(&summary);
    }
    println!("{} rows x {} dims -> {}", summary.rows, summary.dims, summary.out.display());
    Ok(())
}

fn cmd_savings(a: &SavingsArgs, json: bool) -> Result<()> {
    let defaults = CostModel::default();
    let cost = CostModel {
        review_h: a.review_h.unwrap_or(defaults.review_h),
        fix_h: a.fix_h.unwrap_or(defaults.fix_h),
        rewrite_h: a.rewrite_h.unwrap_or(defaults.rewrite_h),
        manual_h: a.manual_h.unwrap_or(defaults.manual_h),
        gen_overhead_h: a.overhead_h.unwrap_or(defaults.gen_overhead_h),
    };
    let (distribution, n) = match (&a.reviews, a.distribution) {
        (Some(path), _) => {
            let ledger = import_reviews(path)?;
            let distinct: BTreeSet<&str> = ledger.rows.iter().map(|r| r.requirement_id.as_str()).collect();
            (ledger.distribution, a.n.unwrap_or(distinct.len()))
        }
        (None, Some(d)) => (d, a.n.unwrap_or_else(|| usage_error("--n is required"))),
        (None, None) => usage_error("pass --distribution or --reviews"),
    };
    let report: SavingsReport = project_savings(distribution, cost, n)?;
    if json {
        return print_json(&report);
    }
    let d = &report.distribution;
    println!(
        "distribution accept {:.1}% modify {:.1}% reject {:.1}%",
        d.accept * 100.0,
        d.modify * 100.0,
        d.reject * 100.0
    );
    println!("requirements {}", report.n_requirements);
    println!("manual {:.1} h", report.manual_total_h);
    println!("rag {:.1} h", report.rag_total_h);
    println!("saving {:.1}%", report.saving * 100.0);
    Ok(())
}
