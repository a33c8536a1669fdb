use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};

pub struct LlmRequest<'a> {
    pub requirement_id: &'a str,
    pub system_text: &'a str,
    pub user_text: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmReply {
    pub text: String,
    pub retries: u32,
}

pub trait LlmClient: Send + Sync {
    /// Identifies provider and model; recorded with every generation.
    fn tag(&self) -> String;

    fn complete(&self, req: &LlmRequest<'_>) -> Result<LlmReply>;
}

fn non_empty(text: String, retries: u32) -> Result<LlmReply> {
    if text.trim().is_empty() {
        return Err(Error::EmptyCompletion);
    }
    Ok(LlmReply { text, retries })
}

/// Offline stand-in. With a fixture it replays the canned response for each
/// requirement id; without one it synthesizes a minimal test module. The
/// prompt never influences the output.
#[derive(Debug, Clone, Default)]
pub struct MockLlm {
    responses: Option<BTreeMap<String, String>>,
    label: String,
}

impl MockLlm {
    pub fn synthetic() -> Self {
        MockLlm {
            responses: None,
            label: "synthetic".into(),
        }
    }

    pub fn with_responses(label: impl Into<String>, responses: BTreeMap<String, String>) -> Self {
        MockLlm {
            responses: Some(responses),
            label: label.into(),
        }
    }

    /// Fixture format: JSON object mapping requirement id to response text.
    pub fn from_fixture(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let responses = serde_json::from_str(&raw)
            .map_err(|e| Error::json(format!("mock responses {}", path.display()), e))?;
        let label = path
            .file_stem()
            .map_or_else(|| "fixture".into(), |s| s.to_string_lossy().into_owned());
        Ok(MockLlm::with_responses(label, responses))
    }

    fn synthesize(requirement_id: &str) -> String {
        let ident: String = requirement_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
            .collect();
        format!(
            "Generated test for {requirement_id}.\n\n```python\n\
             def test_{ident}():\n    \"\"\"Covers {requirement_id}.\"\"\"\n    assert True\n```\n"
        )
    }
}

impl LlmClient for MockLlm {
    fn tag(&self) -> String {
        format!("mock:{}", self.label)
    }

    fn complete(&self, req: &LlmRequest<'_>) -> Result<LlmReply> {
        let text = match &self.responses {
            None => Self::synthesize(req.requirement_id),
            Some(map) => map
                .get(req.requirement_id)
                .cloned()
                .ok_or_else(|| Error::MissingMockResponse(req.requirement_id.to_string()))?,
        };
        non_empty(text, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub retry: RetryPolicy,
}

pub const DEFAULT_TEMPERATURE: f64 = 0.2;

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_tokens() -> u32 {
    2048
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Client for an OpenAI-compatible chat-completions endpoint.
pub struct ChatClient {
    cfg: ChatConfig,
    client: JsonClient,
}

impl ChatClient {
    pub fn new(cfg: ChatConfig) -> Self {
        let client = JsonClient::new(&cfg.endpoint, cfg.retry);
        ChatClient { cfg, client }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.client = self.client.with_api_key(key);
        self
    }
}

impl LlmClient for ChatClient {
    fn tag(&self) -> String {
        format!("chat:{}@{}", self.cfg.model, self.cfg.temperature)
    }

    fn complete(&self, req: &LlmRequest<'_>) -> Result<LlmReply> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": req.user_text},
            ],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let reply = self.client.post(&body)?;
        let parsed: ChatResponse =
            serde_json::from_value(reply.body).map_err(|e| Error::json("chat response", e))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        non_empty(text, reply.retries)
    }
}
