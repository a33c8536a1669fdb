use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corpus root does not exist: {0}")]
    RootMissing(PathBuf),

    #[error("corpus is empty after applying include/exclude globs")]
    EmptyCorpus,

    #[error("invalid glob `{glob}`: {message}")]
    InvalidGlob { glob: String, message: String },

    #[error("duplicate requirement id `{0}`")]
    DuplicateRequirementId(String),

    #[error("malformed requirement record #{record}: {message}")]
    MalformedRecord { record: usize, message: String },

    #[error("overlap {overlap} must be smaller than chunk size {size}")]
    InvalidOverlap { size: usize, overlap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unbalanced braces in `{doc_id}` at character {position}")]
    UnbalancedBraces { doc_id: String, position: usize },

    #[error("strategy `{strategy}` cannot chunk documents of role `{role}`")]
    StrategyRoleMismatch { strategy: String, role: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index is empty")]
    EmptyIndex,

    #[error("duplicate chunk id `{0}`")]
    DuplicateChunkId(String),

    #[error("embedding failed for chunk `{chunk_id}`: {source}")]
    Embedding {
        chunk_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("request timed out after {attempts} attempt(s): {message}")]
    Timeout { attempts: u32, message: String },

    #[error("embedding dims changed within a session: first {expected}, now {actual}")]
    DimsDrift { expected: usize, actual: usize },

    #[error("index was built with provider `{index}` but `{provider}` is configured")]
    ProviderMismatch { index: String, provider: String },

    #[error("LLM returned an empty completion")]
    EmptyCompletion,

    #[error("no mock response for requirement `{0}`")]
    MissingMockResponse(String),

    #[error("response contains no fenced code block")]
    NoCodeBlock,

    #[error("character budget {budget} cannot fit environment and requirement ({required} chars)")]
    BudgetTooSmall { budget: usize, required: usize },

    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),

    #[error("failed to spawn `{command}`: {source}")]
    CommandSpawn {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid validation stage config: {0}")]
    InvalidStageConfig(String),

    #[error("no reports to aggregate")]
    EmptyReportSet,

    #[error("relevant set is empty")]
    EmptyRelevantSet,

    #[error("ground truth for `{requirement}` names chunk `{chunk_id}` which is not in the index")]
    UnresolvableChunkId {
        requirement: String,
        chunk_id: String,
    },

    #[error("malformed review row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("invalid decision `{value}` in review row {row}")]
    InvalidDecision { row: usize, value: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
