//! Chat-completion contract and its implementations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod cache;
pub mod http;
pub mod mock;

pub use cache::{cache_key, CachedModel};
pub use http::{HttpChatClient, HttpConfig};
pub use mock::{FnModel, ScriptedModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    /// Caller-chosen label for logs; not part of the cache key.
    #[serde(default)]
    pub request_id: String,
}

impl CompletionRequest {
    /// A single-turn request: the prompt becomes one user message.
    pub fn single(model: impl Into<String>, prompt: impl Into<String>, temperature: f64) -> Self {
        CompletionRequest {
            model: model.into(),
            messages: vec![Message::user(prompt)],
            temperature,
            max_tokens: None,
            request_id: String::new(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.request_id = id.into();
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} is negative",
                self.temperature
            )));
        }
        if self.messages.is_empty() || self.messages.iter().all(|m| m.content.is_empty()) {
            return Err(LlmError::InvalidRequest("empty prompt".into()));
        }
        Ok(())
    }

    /// Every message's content, in order, separated by blank lines.
    pub fn transcript(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("context length exceeded: {0}")]
    ContextLengthExceeded(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no script rule matched call {call}{}", .saved.as_deref().map(|p| format!(" (prompt saved to {p})")).unwrap_or_default())]
    ScriptMiss { call: usize, saved: Option<String> },
    #[error("cannot parse script: {0}")]
    ScriptParse(String),
    #[error("cache: {0}")]
    Cache(String),
}

/// A black-box chat model: messages in, first choice's text out.
pub trait ChatModel: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError>;
}

impl<M: ChatModel + ?Sized> ChatModel for std::sync::Arc<M> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        (**self).complete(req)
    }
}

impl<M: ChatModel + ?Sized> ChatModel for Box<M> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        (**self).complete(req)
    }
}

/// Model name and sampling settings shared by every call of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub model: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            model: "gpt-4-0613".into(),
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

impl Sampling {
    pub fn request(&self, messages: Vec<Message>) -> CompletionRequest {
        CompletionRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            request_id: String::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(CompletionRequest::single("m", "hi", 0.0).validate().is_ok());
        assert!(CompletionRequest::single("m", "", 0.0).validate().is_err());
        assert!(CompletionRequest::single("m", "hi", -0.5)
            .validate()
            .is_err());
        assert!(CompletionRequest::single("m", "hi", f64::NAN)
            .validate()
            .is_err());
    }

    #[test]
    fn last_user_skips_assistant() {
        let mut r = CompletionRequest::single("m", "first", 0.0);
        r.messages.push(Message::assistant("reply"));
        r.messages.push(Message::user("second"));
        r.messages.push(Message::assistant("again"));
        assert_eq!(r.last_user(), "second");
        assert_eq!(r.transcript(), "first\n\nreply\n\nsecond\n\nagain");
    }
}
