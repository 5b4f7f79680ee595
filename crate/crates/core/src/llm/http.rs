//! OpenAI-compatible `/chat/completions` client.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatModel, CompletionRequest, LlmError};
use crate::sync::Semaphore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_timeout() -> f64 {
    120.0
}
fn default_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    5
}
fn default_backoff() -> u64 {
    500
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
        }
    }
}

pub struct HttpChatClient {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    in_flight: Semaphore,
}

enum Attempt {
    Done(String),
    Retry(LlmError),
    Fail(LlmError),
}

fn is_context_error(body: &str) -> bool {
    let b = body.to_ascii_lowercase();
    b.contains("context_length_exceeded") || b.contains("maximum context length")
}

impl HttpChatClient {
    /// Reads the API key from the configured environment variable; a
    /// missing variable sends no `Authorization` header.
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(
                config.timeout_secs.max(0.001),
            )))
            .http_status_as_error(false)
            .build()
            .new_agent();
        let in_flight = Semaphore::new(config.max_in_flight);
        HttpChatClient {
            config,
            api_key,
            agent,
            in_flight,
        }
    }

    pub fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    /// The JSON body posted for `req`.
    pub fn request_body(req: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "n": 1,
        });
        if let Some(m) = req.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }

    fn attempt(&self, body: &Value, req: &CompletionRequest) -> Attempt {
        let _permit = self.in_flight.acquire();
        let mut call = self
            .agent
            .post(&self.endpoint())
            .header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = match call.send(body.to_string().as_bytes()) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        match status {
            200..=299 => match parse_choice(&text) {
                Ok((content, usage)) => {
                    if let Some(u) = usage {
                        log::info!(
                            "llm call {} prompt_tokens={} completion_tokens={}",
                            req.request_id,
                            u.0,
                            u.1
                        );
                    }
                    Attempt::Done(content)
                }
                Err(e) => Attempt::Fail(e),
            },
            401 | 403 => Attempt::Fail(LlmError::Auth(text)),
            400 | 413 if is_context_error(&text) => {
                Attempt::Fail(LlmError::ContextLengthExceeded(text))
            }
            429 | 500..=599 => Attempt::Retry(LlmError::Http { status, body: text }),
            _ => Attempt::Fail(LlmError::Http { status, body: text }),
        }
    }
}

fn parse_choice(text: &str) -> Result<(String, Option<(u64, u64)>), LlmError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| LlmError::Transport(format!("bad response body: {e}")))?;
    let content = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| LlmError::Transport("response has no choices[0].message.content".into()))?;
    let usage = v["usage"]["prompt_tokens"]
        .as_u64()
        .zip(v["usage"]["completion_tokens"].as_u64());
    Ok((content.to_string(), usage))
}

impl ChatModel for HttpChatClient {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        req.validate()?;
        let body = Self::request_body(req);
        let mut attempt = 0;
        loop {
            match self.attempt(&body, req) {
                Attempt::Done(t) => return Ok(t),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.config.max_retries => {
                    return Err(match e {
                        LlmError::Transport(m) => LlmError::Transport(m),
                        other => LlmError::Transport(format!("retries exhausted: {other}")),
                    })
                }
                Attempt::Retry(e) => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!(
                        "llm call {} failed ({e}); retrying in {wait} ms",
                        req.request_id
                    );
                    thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
            }
        }
    }
}
