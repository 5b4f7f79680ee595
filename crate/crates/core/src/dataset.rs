//! Question records: one JSON object per line.
//!
//! ```json
//! {"qid": "q1", "question": "when were the texas rangers started",
//!  "entities": [{"mention": "texas rangers", "mid": "m.07l8x", "label": "texas rangers"}],
//!  "gold_sexpr": "(JOIN (R sports.sports_team.founded) m.07l8x)",
//!  "gold_sparql": null, "gold_answers": ["1972"], "domain": "sports"}
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::logical_form::{
    parse_sparql, Compiler, LogicalFormError, Schema, SexprParser, SparqlQuery,
};
use crate::retrieval::LinkedEntity;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate question id {0}")]
    DuplicateQid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub qid: String,
    pub question: String,
    #[serde(default)]
    pub entities: Vec<LinkedEntity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sexpr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sparql: Option<String>,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

impl Question {
    /// The gold logical form as SPARQL: `gold_sparql` when present,
    /// otherwise the compiled `gold_sexpr`. `None` without either.
    pub fn gold_query(&self, schema: &Schema) -> Option<Result<SparqlQuery, LogicalFormError>> {
        if let Some(s) = &self.gold_sparql {
            return Some(parse_sparql(s));
        }
        let sexpr = self.gold_sexpr.as_ref()?;
        Some(
            SexprParser::new(schema.entity_pattern())
                .parse(sexpr)
                .and_then(|e| Compiler::new(schema.type_relation()).compile(&e)),
        )
    }
}

pub fn parse_dataset(text: &str) -> Result<Vec<Question>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(q.qid.clone()) {
            return Err(DatasetError::DuplicateQid(q.qid));
        }
        out.push(q);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Question>, DatasetError> {
    let text = fs::read_to_string(path)
        .map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(&text)
}

/// Maps one GrailQA-style JSON record (`qid`, `question`, `s_expression`,
/// `sparql_query`, `answer[].answer_argument`, `domains`,
/// `graph_query.nodes`) to a [`Question`]. Entities are the graph-query
/// nodes of type `entity`.
pub fn from_grailqa(v: &Value) -> Option<Question> {
    let qid = match &v["qid"] {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    let entities = v["graph_query"]["nodes"]
        .as_array()
        .into_iter()
        .flatten()
        .filter(|n| n["node_type"] == "entity")
        .map(|n| LinkedEntity {
            mention: n["friendly_name"].as_str().unwrap_or_default().to_string(),
            mid: n["id"].as_str().unwrap_or_default().to_string(),
            label: n["friendly_name"].as_str().unwrap_or_default().to_string(),
        })
        .collect();
    let gold_answers = v["answer"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|a| a["answer_argument"].as_str().map(str::to_string))
        .collect();
    Some(Question {
        qid,
        question: v["question"].as_str()?.to_string(),
        entities,
        gold_sexpr: v["s_expression"].as_str().map(str::to_string),
        gold_sparql: v["sparql_query"].as_str().map(str::to_string),
        gold_answers,
        domain: v["domains"][0].as_str().map(str::to_string),
    })
}
