//! Blocking JSON-over-HTTP with bounded retries, shared by the remote
//! embedding and chat-completion clients.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "RAGSMITH_API_KEY";

const BODY_EXCERPT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub backoff_ms: u64,
    pub timeout_s: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            backoff_ms: 500,
            timeout_s: 60.0,
        }
    }
}

pub struct JsonClient {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    policy: RetryPolicy,
}

/// Parsed response body and the number of retries it took.
#[derive(Debug)]
pub struct Reply {
    pub body: Value,
    pub retries: u32,
}

enum Failure {
    Retryable(Error),
    Fatal(Error),
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

impl JsonClient {
    pub fn new(url: impl Into<String>, policy: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(policy.timeout_s.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        JsonClient {
            agent,
            url: url.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            policy,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn attempt(&self, body: &Value) -> std::result::Result<Value, Failure> {
        let mut req = self.agent.post(&self.url).header("Accept", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => {
                return Err(Failure::Retryable(Error::Timeout {
                    attempts: self.policy.attempts,
                    message: t.to_string(),
                }))
            }
            Err(e) => return Err(Failure::Retryable(Error::Transport(e.to_string()))),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(Error::Transport(e.to_string())))?;
        if (200..300).contains(&status) {
            return serde_json::from_str(&text)
                .map_err(|e| Failure::Fatal(Error::json(format!("response from {}", self.url), e)));
        }
        let err = Error::Http {
            status,
            body: excerpt(&text),
        };
        if status == 429 || status >= 500 {
            Err(Failure::Retryable(err))
        } else {
            Err(Failure::Fatal(err))
        }
    }

    /// POSTs `body`, retrying transport errors, timeouts, 429 and 5xx with
    /// exponential backoff.
    pub fn post(&self, body: &Value) -> Result<Reply> {
        let attempts = self.policy.attempts.max(1);
        let mut last = None;
        for n in 0..attempts {
            if n > 0 {
                let wait = self.policy.backoff_ms.saturating_mul(1 << (n - 1).min(16));
                thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(body) {
                Ok(body) => return Ok(Reply { body, retries: n }),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) => {
                    log::warn!("attempt {}/{} to {} failed: {e}", n + 1, attempts, self.url);
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
