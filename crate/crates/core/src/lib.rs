//! Few-shot transfer question answering over knowledge bases: retrieval
//! fusion, LLM re-ranking, SPARQL generation with execution-guided
//! feedback, and evaluation.

pub mod dataset;
pub mod egf;
pub mod eval;
pub mod generate;
pub mod kb;
pub mod llm;
pub mod logical_form;
pub mod pipeline;
pub mod rerank;
pub mod retrieval;
pub mod sync;
pub mod term;

pub use term::{Literal, Node};
