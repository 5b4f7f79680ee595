//! Query execution against a knowledge base: an in-memory triple store for
//! tests and oracle checks, or a remote SPARQL endpoint.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logical_form::SparqlQuery;
use crate::term::Node;

pub mod exec;
pub mod oracle;
pub mod remote;
pub mod store;
pub mod wire;

pub use exec::execute_in_memory;
pub use oracle::{eval_sexpr, eval_sexpr_with};
pub use remote::{EndpointConfig, SparqlEndpoint};
pub use store::{load_triples, parse_triples, Triple, TripleStore};

/// Result of executing a query. A count is a value, so `Count(0)` is not
/// empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSet {
    Nodes(BTreeSet<Node>),
    Count(u64),
}

impl Default for AnswerSet {
    fn default() -> Self {
        AnswerSet::Nodes(BTreeSet::new())
    }
}

impl AnswerSet {
    pub fn is_empty(&self) -> bool {
        match self {
            AnswerSet::Nodes(n) => n.is_empty(),
            AnswerSet::Count(_) => false,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnswerSet::Nodes(n) => n.len(),
            AnswerSet::Count(_) => 1,
        }
    }

    /// Normalized answer strings used for scoring against gold answers.
    pub fn to_strings(&self) -> BTreeSet<String> {
        match self {
            AnswerSet::Nodes(n) => n.iter().map(Node::answer_string).collect(),
            AnswerSet::Count(c) => BTreeSet::from([c.to_string()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KbError {
    #[error("endpoint returned HTTP {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("endpoint rejected the query: {0}")]
    QueryRejected(String),
    #[error("query timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
    #[error("cannot decode results: {0}")]
    Decode(String),
}

/// Anything that can answer a parsed query.
pub trait KbBackend: Send + Sync {
    fn execute(&self, q: &SparqlQuery) -> Result<AnswerSet, KbError>;
}

impl KbBackend for TripleStore {
    fn execute(&self, q: &SparqlQuery) -> Result<AnswerSet, KbError> {
        Ok(execute_in_memory(q, self))
    }
}

impl<B: KbBackend + ?Sized> KbBackend for std::sync::Arc<B> {
    fn execute(&self, q: &SparqlQuery) -> Result<AnswerSet, KbError> {
        (**self).execute(q)
    }
}
