//! Deterministic stand-ins for a chat model.
//!
//! A script is a JSON document:
//!
//! ```json
//! { "rules": [
//!     { "ordinal": 1, "response": "first call" },
//!     { "contains": "candidate paths:", "response": "A@@B" },
//!     { "contains": ["Translate", "question: who"], "responses": ["q1", "q2"] },
//!     { "last_contains": "gives an empty answer", "response": "q3" }
//! ] }
//! ```
//!
//! Rules are tried in order; a rule matches when every condition it states
//! holds. `ordinal` is the 1-based index of the call, `contains` looks at the
//! whole conversation and `last_contains` at the latest user message.
//! `response` answers every match; `responses` is a queue and the rule stops
//! matching once it is drained.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Deserialize;

use super::{ChatModel, CompletionRequest, LlmError};

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn all_in(&self, text: &str) -> bool {
        match self {
            OneOrMany::One(s) => text.contains(s.as_str()),
            OneOrMany::Many(v) => v.iter().all(|s| text.contains(s.as_str())),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Rule {
    #[serde(default)]
    ordinal: Option<usize>,
    #[serde(default)]
    contains: Option<OneOrMany>,
    #[serde(default)]
    last_contains: Option<OneOrMany>,
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    responses: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Script {
    rules: Vec<Rule>,
}

struct State {
    calls: usize,
    consumed: Vec<usize>,
}

pub struct ScriptedModel {
    rules: Vec<Rule>,
    state: Mutex<State>,
    miss_dir: Option<PathBuf>,
}

impl ScriptedModel {
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let script: Script =
            serde_json::from_str(text).map_err(|e| LlmError::ScriptParse(e.to_string()))?;
        for (i, r) in script.rules.iter().enumerate() {
            if r.response.is_some() == r.responses.is_some() {
                return Err(LlmError::ScriptParse(format!(
                    "rule {i}: exactly one of \"response\" and \"responses\" is required"
                )));
            }
            if r.ordinal == Some(0) {
                return Err(LlmError::ScriptParse(format!(
                    "rule {i}: ordinals start at 1"
                )));
            }
        }
        let n = script.rules.len();
        Ok(ScriptedModel {
            rules: script.rules,
            state: Mutex::new(State {
                calls: 0,
                consumed: vec![0; n],
            }),
            miss_dir: None,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LlmError::ScriptParse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// A queue answered in order regardless of the prompt.
    pub fn queue<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedModel {
            rules: vec![Rule {
                ordinal: None,
                contains: None,
                last_contains: None,
                response: None,
                responses: Some(responses.into_iter().map(Into::into).collect()),
            }],
            state: Mutex::new(State {
                calls: 0,
                consumed: vec![0],
            }),
            miss_dir: None,
        }
    }

    /// Unmatched prompts are written under `dir`.
    pub fn with_miss_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.miss_dir = Some(dir.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).calls
    }

    fn save_miss(&self, call: usize, req: &CompletionRequest) -> Option<String> {
        let dir = self.miss_dir.as_ref()?;
        fs::create_dir_all(dir).ok()?;
        let path = dir.join(format!("miss-{call:04}.json"));
        fs::write(&path, serde_json::to_string_pretty(req).ok()?).ok()?;
        Some(path.display().to_string())
    }
}

impl ChatModel for ScriptedModel {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let transcript = req.transcript();
        let last = req.last_user();
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        st.calls += 1;
        let call = st.calls;
        for (i, r) in self.rules.iter().enumerate() {
            if r.ordinal.is_some_and(|o| o != call)
                || r.contains.as_ref().is_some_and(|c| !c.all_in(&transcript))
                || r.last_contains.as_ref().is_some_and(|c| !c.all_in(last))
            {
                continue;
            }
            if let Some(resp) = &r.response {
                return Ok(resp.clone());
            }
            let queue = r.responses.as_ref().expect("validated at load");
            if let Some(resp) = queue.get(st.consumed[i]) {
                st.consumed[i] += 1;
                return Ok(resp.clone());
            }
        }
        drop(st);
        Err(LlmError::ScriptMiss {
            call,
            saved: self.save_miss(call, req),
        })
    }
}

type Responder = dyn Fn(&CompletionRequest) -> Result<String, LlmError> + Send + Sync;

/// Wraps a closure; counts calls.
pub struct FnModel {
    f: Box<Responder>,
    calls: AtomicUsize,
}

impl FnModel {
    pub fn new(
        f: impl Fn(&CompletionRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    ) -> Self {
        FnModel {
            f: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatModel for FnModel {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(req)
    }
}
