use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEmbedConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_max_batch() -> usize {
    32
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    cfg: RemoteEmbedConfig,
    client: JsonClient,
    dims: Mutex<Option<usize>>,
}

impl RemoteEmbedder {
    pub fn new(cfg: RemoteEmbedConfig) -> Self {
        let client = JsonClient::new(&cfg.endpoint, cfg.retry);
        RemoteEmbedder {
            cfg,
            client,
            dims: Mutex::new(None),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.client = self.client.with_api_key(key);
        self
    }

    /// Dimensionality seen in the first response, if any.
    pub fn dims(&self) -> Option<usize> {
        *self.dims.lock().unwrap()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn tag(&self) -> String {
        format!("remote:{}", self.cfg.model)
    }

    fn max_batch(&self) -> usize {
        self.cfg.max_batch.max(1)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if texts.len() > self.max_batch() {
            return Err(Error::InvalidParameter(format!(
                "batch of {} exceeds max batch {}",
                texts.len(),
                self.max_batch()
            )));
        }
        let reply = self
            .client
            .post(&json!({ "input": texts, "model": self.cfg.model }))?;
        let parsed: EmbeddingResponse = serde_json::from_value(reply.body)
            .map_err(|e| Error::json("embedding response", e))?;
        if parsed.data.len() != texts.len() {
            return Err(Error::Transport(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        let mut dims = self.dims.lock().unwrap();
        parsed
            .data
            .into_iter()
            .map(|d| {
                let n = d.embedding.len();
                match *dims {
                    None => *dims = Some(n),
                    Some(expected) if expected != n => {
                        return Err(Error::DimsDrift {
                            expected,
                            actual: n,
                        })
                    }
                    _ => {}
                }
                Ok(EmbeddingVector::normalized(d.embedding))
            })
            .collect()
    }
}
