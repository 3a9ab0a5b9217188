//! OpenAI-compatible chat-completions backend.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatRequest, GatewayError, LlmBackend, RoleTag};
use crate::net;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "PENHEAL_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(attempt)
    }
}

/// 429 and 5xx are worth retrying; other statuses are final.
pub fn is_retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

pub struct OpenAiBackend {
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl OpenAiBackend {
    /// `base_url` is the API root (e.g. `https://api.openai.com/v1`);
    /// requests go to `{base_url}/chat/completions`.
    pub fn new(base_url: &str, api_key: Option<String>) -> Self {
        OpenAiBackend {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .expect("http client"),
        }
    }

    /// Reads the key from `PENHEAL_LLM_API_KEY`.
    pub fn from_env(base_url: &str) -> Self {
        Self::new(base_url, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn body(request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role_tag {
                    RoleTag::System => "system",
                    RoleTag::User => "user",
                    RoleTag::Assistant => "assistant",
                };
                json!({ "role": role, "content": m.content })
            })
            .collect();
        json!({
            "model": request.model,
            "messages": messages,
            "temperature": 0,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, (GatewayError, bool)> {
        net::guard(&self.endpoint).map_err(|e| (e.into(), false))?;
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            (
                GatewayError::Transport {
                    endpoint: self.endpoint.clone(),
                    message: e.to_string(),
                },
                true,
            )
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().unwrap_or_default();
        if status == 401 || status == 403 {
            return Err((
                GatewayError::Auth {
                    endpoint: self.endpoint.clone(),
                    status,
                },
                false,
            ));
        }
        if !(200..300).contains(&status) {
            return Err((
                GatewayError::Http {
                    endpoint: self.endpoint.clone(),
                    status,
                    body: text.chars().take(500).collect(),
                },
                is_retryable_status(status),
            ));
        }
        let bad = |message: String| {
            (
                GatewayError::BadResponse {
                    endpoint: self.endpoint.clone(),
                    message,
                },
                false,
            )
        };
        let v: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| bad("missing choices[0].message.content".into()))
    }
}

impl LlmBackend for OpenAiBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = Self::body(request);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((err, retryable)) => {
                    attempt += 1;
                    if !retryable || attempt >= self.retry.attempts {
                        return Err(err);
                    }
                    tracing::warn!(%err, attempt, "retrying chat completion");
                    std::thread::sleep(self.retry.backoff(attempt - 1));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retry_schedule() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(0), Duration::from_secs(1));
        assert_eq!(p.backoff(1), Duration::from_secs(2));
        assert!(is_retryable_status(429));
        assert!(is_retryable_status(503));
        assert!(!is_retryable_status(400));
        assert!(!is_retryable_status(401));
    }

    #[test]
    fn body_shape() {
        let req = ChatRequest {
            role: super::super::AgentRole::Planner,
            model: "m".into(),
            messages: vec![super::super::ChatTurn::system("s"), super::super::ChatTurn::user("u")],
        };
        let b = OpenAiBackend::body(&req);
        assert_eq!(b["model"], "m");
        assert_eq!(b["temperature"], 0);
        assert_eq!(b["messages"][0]["role"], "system");
        assert_eq!(b["messages"][1]["content"], "u");
    }
}
