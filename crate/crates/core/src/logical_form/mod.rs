//! Logical forms: s-expressions, the supported SPARQL subset, compilation
//! between them, and element extraction for equivalence checking.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

pub mod compile;
pub mod elements;
pub mod sanitize;
pub mod schema;
pub mod sexpr;
pub mod sparql;

pub use compile::{sexpr_to_sparql, Compiler};
pub use elements::{extract_elements, ElementBag, FunctionTag};
pub use sanitize::sanitize_llm_sparql;
pub use schema::{EntityPattern, Schema};
pub use sexpr::{parse_sexpr, CompareOp, Relation, SExpr, SexprParser};
pub use sparql::{parse_sparql, SparqlParser, SparqlQuery};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicalFormError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
    #[error("cannot compile: {0}")]
    Compile(String),
    #[error("query has an empty graph pattern")]
    EmptyPattern,
    #[error("variable ?{0} is not bound by the graph pattern")]
    UnboundVariable(String),
    #[error("IRI {0} is neither a schema class nor relation")]
    UnknownIri(String),
    #[error("invalid entity pattern: {0}")]
    InvalidPattern(String),
    #[error("{0} is listed both as a class and as a relation")]
    SchemaOverlap(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl LogicalFormError {
    pub(crate) fn syntax(position: usize, expected: impl Into<String>) -> Self {
        LogicalFormError::Syntax {
            position,
            expected: expected.into(),
        }
    }
}

/// Dotted schema identifiers such as `sports.sports_team.founded`.
pub fn is_dotted_iri(s: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z0-9_][A-Za-z0-9_\-]*(\.[A-Za-z0-9_\-]+)+$").unwrap())
        .is_match(s)
}
