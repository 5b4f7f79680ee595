//! Run configuration, read from TOML. Relative paths are resolved against
//! the directory holding the config file.
//!
//! ```toml
//! dataset = "test.jsonl"
//! exemplars = "train.jsonl"
//! output_dir = "out"
//! seed = 7
//!
//! [[retrievers]]
//! id = "tiara"
//! file = "tiara.jsonl"
//!
//! [kb]
//! kind = "triples"
//! path = "kb.nt"
//!
//! [llm]
//! backend = "script"
//! script = "mock.json"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::egf::DEFAULT_MAX_ITERS;
use crate::generate::{merge_budgets, AspectBudget, PromptVariant, DEFAULT_TOKEN_CEILING};
use crate::kb::EndpointConfig;
use crate::llm::{HttpConfig, Sampling};
use crate::logical_form::schema::DEFAULT_TYPE_RELATION;
use crate::logical_form::{EntityPattern, Schema};
use crate::retrieval::TopK;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Io(String),
    #[error("config: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieverConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Base URL of a `/retrieve` service; used when `file` is not set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default = "default_retriever_timeout")]
    pub timeout_secs: f64,
}

fn default_retriever_timeout() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<PathBuf>,
    #[serde(default = "default_entity_pattern")]
    pub entity_pattern: String,
    #[serde(default = "default_type_relation")]
    pub type_relation: String,
}

fn default_entity_pattern() -> String {
    EntityPattern::default().as_str().to_string()
}
fn default_type_relation() -> String {
    DEFAULT_TYPE_RELATION.to_string()
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            classes: None,
            relations: None,
            entity_pattern: default_entity_pattern(),
            type_relation: default_type_relation(),
        }
    }
}

impl SchemaConfig {
    /// Closed schema when both manifests are given, open otherwise.
    pub fn load(&self) -> Result<Schema, ConfigError> {
        let pattern = EntityPattern::new(&self.entity_pattern)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match (&self.classes, &self.relations) {
            (Some(c), Some(r)) => Schema::load(c, r, pattern, &self.type_relation)
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            (None, None) => Ok(Schema::open(pattern, &self.type_relation)),
            _ => Err(ConfigError::Invalid(
                "schema needs both `classes` and `relations`, or neither".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KbConfig {
    Triples { path: PathBuf },
    Endpoint(EndpointConfig),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmBackend {
    #[default]
    Http,
    Script,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(default)]
    pub backend: LlmBackend,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http: Option<HttpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default = "yes")]
    pub cache: bool,
}

fn yes() -> bool {
    true
}

fn default_model() -> String {
    Sampling::default().model
}

impl LlmConfig {
    pub fn sampling(&self) -> Sampling {
        Sampling {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Rerank,
    Generate,
    #[default]
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Labelled target examples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplars: Option<PathBuf>,
    /// Labelled source examples, used instead when `zero_shot` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_exemplars: Option<PathBuf>,
    #[serde(default)]
    pub zero_shot: bool,
    pub retrievers: Vec<RetrieverConfig>,
    #[serde(default)]
    pub schema: SchemaConfig,
    pub kb: KbConfig,
    pub llm: LlmConfig,
    #[serde(default)]
    pub topk: TopK,
    /// Per-retriever sizes fed to generation; derived from the number of
    /// retrievers when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<AspectBudget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(default)]
    pub prompt_template: PromptVariant,
    #[serde(default = "default_max_iters")]
    pub max_egf_iters: usize,
    #[serde(default = "default_ceiling")]
    pub token_ceiling: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub stage: Stage,
    pub output_dir: PathBuf,
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}
fn default_ceiling() -> usize {
    DEFAULT_TOKEN_CEILING
}
fn default_workers() -> usize {
    4
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        rebase(base, &mut self.dataset);
        rebase(base, &mut self.output_dir);
        for p in [
            &mut self.exemplars,
            &mut self.source_exemplars,
            &mut self.llm.script,
        ]
        .into_iter()
        .flatten()
        {
            rebase(base, p);
        }
        for p in [&mut self.schema.classes, &mut self.schema.relations]
            .into_iter()
            .flatten()
        {
            rebase(base, p);
        }
        for r in &mut self.retrievers {
            if let Some(f) = &mut r.file {
                rebase(base, f);
            }
        }
        if let KbConfig::Triples { path } = &mut self.kb {
            rebase(base, path);
        }
    }

    /// Budget for generation with the shot count override applied.
    pub fn effective_budget(&self) -> AspectBudget {
        let mut b = self
            .budget
            .unwrap_or_else(|| merge_budgets(self.retrievers.len()));
        if let Some(s) = self.shots {
            b.shots = s;
        }
        b
    }

    pub fn exemplar_pool(&self) -> Option<&Path> {
        if self.zero_shot {
            self.source_exemplars.as_deref()
        } else {
            self.exemplars.as_deref()
        }
    }

    /// Checks that do not read data files.
    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.retrievers.is_empty() {
            return bad("at least one retriever is required".into());
        }
        let mut ids = std::collections::HashSet::new();
        for r in &self.retrievers {
            if !ids.insert(&r.id) {
                return bad(format!("duplicate retriever id {}", r.id));
            }
            if r.file.is_some() == r.url.is_some() {
                return bad(format!(
                    "retriever {} needs exactly one of `file` or `url`",
                    r.id
                ));
            }
        }
        let b = self.effective_budget();
        if b.paths == 0 || b.relations == 0 || b.classes == 0 {
            return bad("budget sizes must be at least 1".into());
        }
        if self.llm.temperature.is_nan() || self.llm.temperature < 0.0 {
            return bad("temperature must be non-negative".into());
        }
        match self.llm.backend {
            LlmBackend::Script if self.llm.script.is_none() => {
                return bad("llm.backend = \"script\" needs `script`".into())
            }
            LlmBackend::Http if self.llm.http.is_none() => {
                return bad("llm.backend = \"http\" needs an [llm.http] table".into())
            }
            _ => {}
        }
        if self.zero_shot && self.source_exemplars.is_none() {
            return bad("zero_shot needs `source_exemplars`".into());
        }
        if b.shots > 0 && self.exemplar_pool().is_none() {
            return bad("shots > 0 needs an exemplar pool".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }
}
