//! Chat-completion gateway: a uniform interface over an OpenAI-compatible
//! HTTP endpoint and a deterministic scripted backend.

mod config;
mod http;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{BackendConfig, BackendKind, Gateway, GatewayConfig, Roles};
pub use http::HttpBackend;
pub use scripted::{Fault, Rule, ScriptedBackend, ScriptedSpec};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_TOP_P: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("no scripted rule matches prompt: {0}")]
    NoMatch(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("invalid exchange: {0}")]
    InvalidExchange(String),
    #[error("malformed gateway config: {0}")]
    MalformedConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub sampling: Sampling,
}

impl ChatExchange {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(LlmError::InvalidExchange("no user message".into()));
        }
        let s = &self.sampling;
        if !(s.temperature >= 0.0) {
            return Err(LlmError::InvalidExchange("temperature must be >= 0".into()));
        }
        if !(s.top_p > 0.0 && s.top_p <= 1.0) {
            return Err(LlmError::InvalidExchange("top_p must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn model(&self) -> &str;
    /// Per-backend sampling defaults.
    fn sampling(&self) -> Sampling;
    fn complete(&self, exchange: &ChatExchange) -> Result<String, LlmError>;

    /// Builds an exchange from a system and a user prompt using this
    /// backend's model and sampling defaults.
    fn ask(&self, system: &str, user: &str, seed: Option<u64>) -> Result<String, LlmError> {
        let mut sampling = self.sampling();
        sampling.seed = seed;
        let exchange = ChatExchange {
            model: self.model().to_string(),
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
            sampling,
        };
        self.complete(&exchange)
    }
}
