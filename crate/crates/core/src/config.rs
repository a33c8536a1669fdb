//! The single JSON configuration document shared by every subcommand.
//! Relative paths are resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chunker::{ChunkParams, ChunkPlan, Strategy};
use crate::corpus::CorpusConfig;
use crate::embed::{EmbeddingProvider, HashEmbedder, RemoteEmbedConfig, RemoteEmbedder, DEFAULT_HASH_DIMS};
use crate::error::{Error, Result};
use crate::evalharness::{EvalScope, MatrixSpec};
use crate::genpipe::{ChatClient, ChatConfig, LlmClient, MockLlm, PromptTemplate, DEFAULT_CHAR_BUDGET};
use crate::lexical::Bm25Params;
use crate::retrieval::RetrievalParams;
use crate::validate::{check_stages, StageConfig};

fn default_dims() -> usize {
    DEFAULT_HASH_DIMS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbeddingSpec {
    Hash {
        #[serde(default = "default_dims")]
        dims: usize,
    },
    Remote(RemoteEmbedConfig),
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Hash { dims: DEFAULT_HASH_DIMS }
    }
}

impl EmbeddingSpec {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            EmbeddingSpec::Hash { dims } => Box::new(HashEmbedder::new(*dims)?),
            EmbeddingSpec::Remote(cfg) => Box::new(RemoteEmbedder::new(cfg.clone())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "lowercase", deny_unknown_fields)]
pub enum LlmSpec {
    /// Replays `responses` (requirement id to text) or, without it,
    /// synthesizes one trivial test per requirement.
    Mock {
        #[serde(default)]
        responses: Option<PathBuf>,
    },
    Live(ChatConfig),
}

impl Default for LlmSpec {
    fn default() -> Self {
        LlmSpec::Mock { responses: None }
    }
}

impl LlmSpec {
    pub fn build(&self) -> Result<Box<dyn LlmClient>> {
        Ok(match self {
            LlmSpec::Mock { responses: None } => Box::new(MockLlm::synthetic()),
            LlmSpec::Mock { responses: Some(p) } => Box::new(MockLlm::from_fixture(p)?),
            LlmSpec::Live(cfg) => Box::new(ChatClient::new(cfg.clone())),
        })
    }

    fn resolve(&mut self, base: &Path) {
        if let LlmSpec::Mock { responses: Some(p) } = self {
            *p = base.join(&*p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkingConfig {
    pub strategy: Strategy,
    pub params: ChunkParams,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            strategy: Strategy::Fixed,
            params: ChunkParams::default(),
        }
    }
}

impl ChunkingConfig {
    pub fn plan(&self) -> ChunkPlan {
        ChunkPlan::for_strategy(self.strategy)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptConfig {
    pub template: Option<PathBuf>,
    pub system: Option<PathBuf>,
    pub environment: Option<PathBuf>,
    pub char_budget: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            template: None,
            system: None,
            environment: None,
            char_budget: DEFAULT_CHAR_BUDGET,
        }
    }
}

impl PromptConfig {
    pub fn load_template(&self) -> Result<PromptTemplate> {
        PromptTemplate::load(self.template.as_deref(), self.system.as_deref(), self.environment.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSettings {
    pub jobs: usize,
    pub test_extension: String,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            jobs: 1,
            test_extension: "py".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub stages: Vec<StageConfig>,
    /// Defaults to the number of CPUs.
    pub jobs: Option<usize>,
    pub conditional_rates: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub ground_truth: Option<PathBuf>,
    pub k: usize,
    pub scope: EvalScope,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            ground_truth: None,
            k: 5,
            scope: EvalScope::Code,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

impl OutputConfig {
    pub fn index_path(&self) -> PathBuf {
        self.dir.join("index.jsonl")
    }

    pub fn tests_dir(&self) -> PathBuf {
        self.dir.join("tests")
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.dir.join("ledger.jsonl")
    }

    pub fn matrix_dir(&self) -> PathBuf {
        self.dir.join("matrix")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalConfig {
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub chunking: ChunkingConfig,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub retrieval: RetrievalParams,
    #[serde(default)]
    pub prompt: PromptConfig,
    #[serde(default)]
    pub llm: LlmSpec,
    #[serde(default)]
    pub generation: GenerationSettings,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub matrix: MatrixSpec,
}

fn require_exists(what: &str, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} `{}` does not exist", path.display())))
    }
}

impl GlobalConfig {
    pub fn with_root(root: impl Into<PathBuf>) -> Self {
        GlobalConfig {
            corpus: CorpusConfig::with_root(root),
            chunking: ChunkingConfig::default(),
            embedding: EmbeddingSpec::default(),
            bm25: Bm25Params::default(),
            retrieval: RetrievalParams::default(),
            prompt: PromptConfig::default(),
            llm: LlmSpec::default(),
            generation: GenerationSettings::default(),
            validation: ValidationConfig::default(),
            evaluation: EvaluationConfig::default(),
            output: OutputConfig::default(),
            matrix: MatrixSpec::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&raw, base)
    }

    /// Parses `raw`, resolves relative paths against `base`, and checks that
    /// every input path exists.
    pub fn parse(raw: &str, base: &Path) -> Result<Self> {
        let mut cfg: GlobalConfig =
            serde_json::from_str(raw).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.resolve_paths(base);
        cfg.check()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| *p = base.join(&*p);
        join(&mut self.corpus.root);
        self.corpus.requirement_file.as_mut().map(join);
        self.prompt.template.as_mut().map(join);
        self.prompt.system.as_mut().map(join);
        self.prompt.environment.as_mut().map(join);
        self.evaluation.ground_truth.as_mut().map(join);
        join(&mut self.output.dir);
        for stage in &mut self.validation.stages {
            stage.workdir.as_mut().map(join);
        }
        self.llm.resolve(base);
        for spec in self.matrix.llms.values_mut() {
            spec.resolve(base);
        }
    }

    pub fn check(&self) -> Result<()> {
        require_exists("corpus root", &self.corpus.root)?;
        if let Some(p) = &self.corpus.requirement_file {
            require_exists("requirement file", p)?;
        }
        for p in [&self.prompt.template, &self.prompt.system, &self.prompt.environment]
            .into_iter()
            .flatten()
        {
            require_exists("prompt file", p)?;
        }
        if let Some(p) = &self.evaluation.ground_truth {
            require_exists("ground truth", p)?;
        }
        let llm_files = std::iter::once(&self.llm).chain(self.matrix.llms.values());
        for spec in llm_files {
            if let LlmSpec::Mock { responses: Some(p) } = spec {
                require_exists("mock response fixture", p)?;
            }
        }
        if !self.validation.stages.is_empty() {
            check_stages(&self.validation.stages)?;
            for s in &self.validation.stages {
                if let Some(w) = &s.workdir {
                    require_exists("stage workdir", w)?;
                }
            }
        }
        self.retrieval.validate()?;
        if self.evaluation.k == 0 {
            return Err(Error::Config("evaluation.k must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("src")).unwrap();
        let cfg = GlobalConfig::parse(r#"{"corpus": {"root": "src"}}"#, dir.path()).unwrap();
        assert_eq!(cfg.corpus.root, dir.path().join("src"));
        assert_eq!(cfg.output.index_path(), dir.path().join("out/index.jsonl"));
        assert_eq!(cfg.embedding, EmbeddingSpec::Hash { dims: 256 });
        assert_eq!(cfg.retrieval.k_code, 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = GlobalConfig::parse(r#"{"corpus": {"root": "."}, "colour": 1}"#, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = GlobalConfig::parse(r#"{"corpus": {"root": "."}, "retrieval": {"k": 5}}"#, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn missing_paths_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = GlobalConfig::parse(r#"{"corpus": {"root": "nope"}}"#, dir.path()).unwrap_err();
        assert!(err.to_string().contains("nope"));
        let err = GlobalConfig::parse(
            r#"{"corpus": {"root": "."}, "llm": {"provider": "mock", "responses": "r.json"}}"#,
            dir.path(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("r.json"));
    }

    #[test]
    fn tagged_providers() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GlobalConfig::parse(
            r#"{"corpus": {"root": "."},
                "embedding": {"provider": "remote", "endpoint": "http://x/v1/embeddings", "model": "e"},
                "llm": {"provider": "live", "endpoint": "http://x/v1/chat/completions", "model": "m"}}"#,
            dir.path(),
        )
        .unwrap();
        assert!(matches!(cfg.embedding, EmbeddingSpec::Remote(ref r) if r.model == "e"));
        assert!(matches!(cfg.llm, LlmSpec::Live(ref c) if c.temperature == 0.2));
        let err = GlobalConfig::parse(
            r#"{"corpus": {"root": "."}, "embedding": {"provider": "hash", "dims": 64, "x": 1}}"#,
            dir.path(),
        );
        assert!(err.is_err());
    }
}
