//! Batch orchestration: retrieval, re-ranking, generation, feedback and
//! scoring over a dataset, with a resumable JSONL manifest.

pub mod config;
pub mod manifest;
pub mod run;

pub use config::{
    ConfigError, KbConfig, LlmBackend, LlmConfig, RetrieverConfig, RunConfig, SchemaConfig, Stage,
};
pub use manifest::{score, summarize, ApiCalls, QuestionRecord, RecordStatus, Summary};
pub use run::{
    read_manifest, run_pipeline, validate, Pipeline, PipelineError, RunOutcome, Services,
};
