//! The single path through which every agent role talks to a language model.

pub mod openai;
pub mod prompts;
pub mod transcript;

use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::TierModels;
pub use openai::{OpenAiBackend, RetryPolicy};
pub use prompts::{render_prompt, vars, PromptKind};
pub use transcript::{read_transcript, verify_transcript, Exchange, ReplayBackend, TranscriptWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentRole {
    Planner,
    Executor,
    Summarizer,
    Extractor,
    Estimator,
    Advisor,
    Evaluator,
}

impl AgentRole {
    pub const ALL: [AgentRole; 7] = [
        AgentRole::Planner,
        AgentRole::Executor,
        AgentRole::Summarizer,
        AgentRole::Extractor,
        AgentRole::Estimator,
        AgentRole::Advisor,
        AgentRole::Evaluator,
    ];

    pub fn default_tier(self) -> Tier {
        match self {
            AgentRole::Planner | AgentRole::Executor | AgentRole::Advisor | AgentRole::Evaluator => {
                Tier::Strong
            }
            AgentRole::Summarizer | AgentRole::Extractor | AgentRole::Estimator => Tier::Light,
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    Strong,
    Light,
}

impl Tier {
    /// History budget in characters, a proxy for the tier's context window.
    pub fn context_budget_chars(self) -> usize {
        match self {
            Tier::Strong => 100_000,
            Tier::Light => 12_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleTag {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role_tag: RoleTag,
    pub content: String,
}

impl ChatTurn {
    pub fn system(content: impl Into<String>) -> Self {
        ChatTurn {
            role_tag: RoleTag::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatTurn {
            role_tag: RoleTag::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatTurn {
            role_tag: RoleTag::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub role: AgentRole,
    pub model: String,
    pub messages: Vec<ChatTurn>,
}

impl ChatRequest {
    pub fn hash(&self) -> String {
        request_hash(self.role, &self.messages)
    }
}

/// SHA-256 over the role and the full message list.
pub fn request_hash(role: AgentRole, messages: &[ChatTurn]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{role}\n").as_bytes());
    for m in messages {
        let tag = match m.role_tag {
            RoleTag::System => "system",
            RoleTag::User => "user",
            RoleTag::Assistant => "assistant",
        };
        h.update(tag.as_bytes());
        h.update((m.content.len() as u64).to_le_bytes());
        h.update(m.content.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt placeholder {{{0}}} has no value")]
    MissingPlaceholder(String),
    #[error("history for {0} must start with its system prompt")]
    NoSystemPrompt(AgentRole),
    #[error("chat turn {index} for {role} has empty content")]
    EmptyTurn { role: AgentRole, index: usize },
    #[error("no replay fixture for {role} request {hash}")]
    MissingFixture { role: AgentRole, hash: String },
    #[error("authentication rejected by {endpoint} (HTTP {status})")]
    Auth { endpoint: String, status: u16 },
    #[error("{endpoint} returned HTTP {status}: {body}")]
    Http {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("request to {endpoint} failed: {message}")]
    Transport { endpoint: String, message: String },
    #[error("unexpected response from {endpoint}: {message}")]
    BadResponse { endpoint: String, message: String },
    #[error(transparent)]
    Network(#[from] crate::net::NetworkDenied),
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
}

/// Something that turns a chat request into a reply.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

impl<F> LlmBackend for F
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self(request)
    }
}

/// Drops the oldest turns after the system prompt until the history fits
/// `budget` characters. The system prompt and the final turn always stay.
pub fn truncate_history(history: &[ChatTurn], budget: usize) -> Vec<ChatTurn> {
    let mut turns: Vec<ChatTurn> = history.to_vec();
    let total = |t: &[ChatTurn]| t.iter().map(|m| m.content.chars().count()).sum::<usize>();
    while turns.len() > 2 && total(&turns) > budget {
        turns.remove(1);
    }
    turns
}

/// Routes requests to a backend with per-role model selection, truncation
/// and an append-only transcript.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    models: TierModels,
    role_tiers: std::collections::BTreeMap<AgentRole, Tier>,
    log: Arc<Mutex<Vec<Exchange>>>,
    writer: Option<Arc<TranscriptWriter>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        Gateway {
            backend,
            models: TierModels::default(),
            role_tiers: AgentRole::ALL.iter().map(|r| (*r, r.default_tier())).collect(),
            log: Arc::new(Mutex::new(Vec::new())),
            writer: None,
        }
    }

    /// Serves only exchanges persisted in `path`.
    pub fn replay_mode(path: &Path) -> Result<Self, GatewayError> {
        Ok(Gateway::new(Arc::new(ReplayBackend::from_file(path)?)))
    }

    /// Wraps `backend` and appends every exchange to `path`.
    pub fn record_mode(backend: Arc<dyn LlmBackend>, path: &Path) -> Result<Self, GatewayError> {
        Ok(Gateway::new(backend).with_writer(TranscriptWriter::create(path)?))
    }

    pub fn with_writer(mut self, writer: TranscriptWriter) -> Self {
        self.writer = Some(Arc::new(writer));
        self
    }

    pub fn with_models(mut self, models: TierModels) -> Self {
        self.models = models;
        self
    }

    pub fn with_role_tiers(mut self, tiers: std::collections::BTreeMap<AgentRole, Tier>) -> Self {
        self.role_tiers.extend(tiers);
        self
    }

    pub fn tier(&self, role: AgentRole) -> Tier {
        self.role_tiers.get(&role).copied().unwrap_or(role.default_tier())
    }

    pub fn model(&self, role: AgentRole) -> &str {
        self.models.model(self.tier(role))
    }

    /// Sends `history` for `role`; history must open with a system turn.
    pub fn complete(&self, role: AgentRole, history: &[ChatTurn]) -> Result<String, GatewayError> {
        if history.first().map(|t| t.role_tag) != Some(RoleTag::System) {
            return Err(GatewayError::NoSystemPrompt(role));
        }
        if let Some(index) = history.iter().position(|t| t.content.is_empty()) {
            return Err(GatewayError::EmptyTurn { role, index });
        }
        let tier = self.tier(role);
        let request = ChatRequest {
            role,
            model: self.model(role).to_string(),
            messages: truncate_history(history, tier.context_budget_chars()),
        };
        let response = self.backend.complete(&request)?;
        let exchange = Exchange::new(&request, &response);
        if let Some(w) = &self.writer {
            w.append(&exchange)?;
        }
        self.log.lock().expect("transcript lock").push(exchange);
        Ok(response)
    }

    /// Convenience: system prompt for `role` plus one user turn.
    pub fn ask(&self, role: AgentRole, system: &str, user: &str) -> Result<String, GatewayError> {
        self.complete(role, &[ChatTurn::system(system), ChatTurn::user(user)])
    }

    /// Exchanges made through this gateway (and its clones), in order.
    pub fn transcript(&self) -> Vec<Exchange> {
        self.log.lock().expect("transcript lock").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo() -> Arc<dyn LlmBackend> {
        Arc::new(|r: &ChatRequest| Ok(format!("{}:{}", r.model, r.messages.len())))
    }

    #[test]
    fn routes_by_tier() {
        let gw = Gateway::new(echo());
        assert_eq!(gw.ask(AgentRole::Planner, "s", "u").unwrap(), "gpt-4:2");
        assert_eq!(gw.ask(AgentRole::Summarizer, "s", "u").unwrap(), "gpt-3.5-turbo:2");
        assert_eq!(gw.transcript().len(), 2);
    }

    #[test]
    fn requires_system_prompt() {
        let gw = Gateway::new(echo());
        let err = gw.complete(AgentRole::Planner, &[ChatTurn::user("hi")]).unwrap_err();
        assert!(matches!(err, GatewayError::NoSystemPrompt(AgentRole::Planner)));
        let err = gw
            .complete(AgentRole::Planner, &[ChatTurn::system("s"), ChatTurn::user("")])
            .unwrap_err();
        assert!(matches!(err, GatewayError::EmptyTurn { index: 1, .. }));
    }

    #[test]
    fn truncation_keeps_system_and_last() {
        let hist = vec![
            ChatTurn::system("sys"),
            ChatTurn::user("a".repeat(10)),
            ChatTurn::assistant("b".repeat(10)),
            ChatTurn::user("c".repeat(10)),
        ];
        let t = truncate_history(&hist, 15);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].content, "sys");
        assert_eq!(t[1].content, "c".repeat(10));
        assert_eq!(truncate_history(&hist, 1000), hist);
    }

    #[test]
    fn hash_depends_on_role_and_content() {
        let m = vec![ChatTurn::system("s"), ChatTurn::user("u")];
        let a = request_hash(AgentRole::Planner, &m);
        assert_eq!(a, request_hash(AgentRole::Planner, &m));
        assert_ne!(a, request_hash(AgentRole::Executor, &m));
        let m2 = vec![ChatTurn::system("s"), ChatTurn::user("u ")];
        assert_ne!(a, request_hash(AgentRole::Planner, &m2));
        assert_eq!(a.len(), 64);
    }
}
