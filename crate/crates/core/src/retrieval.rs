//! Retrieval outputs of external supervised retrievers: loading, top-K
//! truncation and recall measurement.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::logical_form::{
    extract_elements, parse_sexpr, parse_sparql, sexpr_to_sparql, ElementBag, Schema,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrievalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate record for question {0}")]
    DuplicateQid(String),
    #[error("no gold logical form for question {0}")]
    MissingGold(String),
    #[error("{0}")]
    Io(String),
    #[error("retriever service: {0}")]
    Http(String),
}

/// An entity mention linked to a KB id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedEntity {
    pub mention: String,
    pub mid: String,
    #[serde(default)]
    pub label: String,
}

impl LinkedEntity {
    /// `indonesia m.097kp`: the label (or the mention when unlabelled)
    /// followed by the id.
    pub fn render(&self) -> String {
        let name = if self.label.is_empty() {
            &self.mention
        } else {
            &self.label
        };
        format!("{name} {}", self.mid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathForm {
    Sparql,
    Sexpr,
    Unparsed,
}

/// One retrieved data path, kept verbatim together with the surface form
/// it parses under.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct DataPath {
    pub text: String,
    pub form: PathForm,
}

impl From<String> for DataPath {
    fn from(text: String) -> Self {
        let form = if parse_sparql(&text).is_ok() {
            PathForm::Sparql
        } else if parse_sexpr(&text).is_ok() {
            PathForm::Sexpr
        } else {
            PathForm::Unparsed
        };
        DataPath { text, form }
    }
}

impl From<DataPath> for String {
    fn from(p: DataPath) -> String {
        p.text
    }
}

impl DataPath {
    pub fn new(text: impl Into<String>) -> Self {
        DataPath::from(text.into())
    }

    /// The path as multi-line SPARQL for the generation prompt.
    /// S-expressions are compiled; unparsable text is passed through.
    pub fn to_sparql_text(&self) -> String {
        let q = match self.form {
            PathForm::Sparql => parse_sparql(&self.text).ok(),
            PathForm::Sexpr => parse_sexpr(&self.text)
                .ok()
                .and_then(|e| sexpr_to_sparql(&e).ok()),
            PathForm::Unparsed => None,
        };
        q.map_or_else(|| self.text.clone(), |q| q.to_pretty())
    }

    /// Schema elements mentioned by the path. Parsed paths go through
    /// element extraction; anything else falls back to a dotted-token scan.
    pub fn schema_elements(&self, schema: &Schema) -> BTreeSet<String> {
        let q = match self.form {
            PathForm::Sparql => parse_sparql(&self.text).ok(),
            PathForm::Sexpr => parse_sexpr(&self.text)
                .ok()
                .and_then(|e| sexpr_to_sparql(&e).ok()),
            PathForm::Unparsed => None,
        };
        if let Some(bag) = q.and_then(|q| extract_elements(&q, schema).ok()) {
            return bag.schema_elements();
        }
        dotted_tokens(&self.text)
            .filter(|t| !schema.is_entity(t) && t != schema.type_relation())
            .collect()
    }
}

fn dotted_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z0-9_]+(?:\.[A-Za-z0-9_]+)+").unwrap())
        .find_iter(text)
        .map(|m| m.as_str().to_string())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub retriever: String,
    pub qid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<DataPath>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
}

/// Per-aspect list sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopK {
    pub paths: usize,
    pub relations: usize,
    pub classes: usize,
}

impl Default for TopK {
    /// Upstream sizes fed to re-ranking.
    fn default() -> Self {
        TopK {
            paths: 20,
            relations: 50,
            classes: 50,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    qid: String,
    #[serde(default)]
    paths: Option<Vec<String>>,
    #[serde(default)]
    relations: Option<Vec<String>>,
    #[serde(default)]
    classes: Option<Vec<String>>,
}

fn dedup(items: Option<Vec<String>>) -> Option<Vec<String>> {
    items.map(|v| {
        let mut seen = HashSet::new();
        v.into_iter().filter(|s| seen.insert(s.clone())).collect()
    })
}

impl RetrievalResult {
    fn from_record(r: Record, retriever: &str) -> Self {
        RetrievalResult {
            retriever: retriever.to_string(),
            qid: r.qid,
            paths: dedup(r.paths).map(|v| v.into_iter().map(DataPath::from).collect()),
            relations: dedup(r.relations),
            classes: dedup(r.classes),
        }
    }

    /// An empty result with every aspect absent.
    pub fn absent(retriever: &str, qid: &str) -> Self {
        RetrievalResult {
            retriever: retriever.to_string(),
            qid: qid.to_string(),
            ..Default::default()
        }
    }
}

/// Reads one JSON record per line. Duplicate entries within an aspect keep
/// their first occurrence.
pub fn parse_retrieval(
    text: &str,
    retriever_id: &str,
) -> Result<BTreeMap<String, RetrievalResult>, RetrievalError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| RetrievalError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let r = RetrievalResult::from_record(rec, retriever_id);
        if out.contains_key(&r.qid) {
            return Err(RetrievalError::DuplicateQid(r.qid));
        }
        out.insert(r.qid.clone(), r);
    }
    Ok(out)
}

pub fn load_retrieval(
    path: &Path,
    retriever_id: &str,
) -> Result<BTreeMap<String, RetrievalResult>, RetrievalError> {
    let text = fs::read_to_string(path)
        .map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
    parse_retrieval(&text, retriever_id)
}

pub fn truncate_topk(r: &RetrievalResult, k: &TopK) -> RetrievalResult {
    fn cut<T: Clone>(v: &Option<Vec<T>>, n: usize) -> Option<Vec<T>> {
        v.as_ref().map(|v| v.iter().take(n).cloned().collect())
    }
    RetrievalResult {
        retriever: r.retriever.clone(),
        qid: r.qid.clone(),
        paths: cut(&r.paths, k.paths),
        relations: cut(&r.relations, k.relations),
        classes: cut(&r.classes, k.classes),
    }
}

/// Everything a set of retrieval results exposes: relation and class lists
/// plus the schema elements of each path.
pub fn covered_elements<'a>(
    results: impl IntoIterator<Item = &'a RetrievalResult>,
    schema: &Schema,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for r in results {
        for p in r.paths.iter().flatten() {
            out.extend(p.schema_elements(schema));
        }
        out.extend(r.relations.iter().flatten().cloned());
        out.extend(r.classes.iter().flatten().cloned());
    }
    out
}

/// Percentage of gold questions whose gold relations and classes are not
/// all covered by the union of their retrieval results. Entities do not
/// count; a gold form without schema elements has recall 1. A question in
/// `runs` without gold is an error; a gold question without runs has
/// retrieved nothing.
pub fn recall_error_rate(
    runs: &BTreeMap<String, Vec<RetrievalResult>>,
    gold: &BTreeMap<String, ElementBag>,
    schema: &Schema,
) -> Result<f64, RetrievalError> {
    if let Some(q) = runs.keys().find(|q| !gold.contains_key(*q)) {
        return Err(RetrievalError::MissingGold(q.clone()));
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let empty = Vec::new();
    let missed = gold
        .iter()
        .filter(|(qid, bag)| {
            let covered = covered_elements(runs.get(*qid).unwrap_or(&empty), schema);
            !bag.schema_elements().is_subset(&covered)
        })
        .count();
    Ok(100.0 * missed as f64 / gold.len() as f64)
}

/// A retriever exposed as a service: `POST {base}/retrieve` with
/// `{qid, question, entities}` answers one record.
pub struct HttpRetriever {
    id: String,
    url: String,
    agent: ureq::Agent,
}

impl HttpRetriever {
    pub fn new(id: impl Into<String>, base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        HttpRetriever {
            id: id.into(),
            url: format!("{}/retrieve", base_url.trim_end_matches('/')),
            agent,
        }
    }

    pub fn retrieve(
        &self,
        qid: &str,
        question: &str,
        entities: &[LinkedEntity],
    ) -> Result<RetrievalResult, RetrievalError> {
        let body = json!({ "qid": qid, "question": question, "entities": entities });
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| RetrievalError::Http(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| RetrievalError::Http(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(RetrievalError::Http(format!("HTTP {status}: {text}")));
        }
        let rec: Record = serde_json::from_str(&text).map_err(|e| RetrievalError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if rec.qid != qid {
            return Err(RetrievalError::Http(format!(
                "asked for {qid}, got {}",
                rec.qid
            )));
        }
        Ok(RetrievalResult::from_record(rec, &self.id))
    }
}
