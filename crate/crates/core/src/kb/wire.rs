//! SPARQL 1.1 JSON results codec.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AnswerSet, KbError};
use crate::logical_form::SparqlQuery;
use crate::term::{expand_datatype, normalize_datatype, Literal, Node};

#[derive(Debug, Deserialize, Serialize)]
struct ResultsDoc {
    #[serde(default)]
    results: Option<Results>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Results {
    bindings: Vec<BTreeMap<String, WireTerm>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct WireTerm {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    datatype: Option<String>,
    #[serde(rename = "xml:lang", default, skip_serializing_if = "Option::is_none")]
    lang: Option<String>,
}

fn to_node(t: WireTerm, namespace: &str) -> Result<Node, KbError> {
    match t.kind.as_str() {
        "uri" => Ok(Node::Iri(match t.value.strip_prefix(namespace) {
            Some(local) => local.to_string(),
            None => t.value,
        })),
        "literal" | "typed-literal" => Ok(Node::Literal(Literal {
            lexical: t.value,
            datatype: t.datatype.as_deref().map(normalize_datatype),
            lang: t.lang,
        })),
        "bnode" => Ok(Node::Iri(format!("_:{}", t.value))),
        other => Err(KbError::Decode(format!("unknown term type {other:?}"))),
    }
}

/// Decodes a results document for `q`. KB-namespace IRIs are shortened to
/// their dotted form. For COUNT queries the aggregate alias is read; a
/// document without bindings counts as zero.
pub fn decode_results(body: &str, q: &SparqlQuery, namespace: &str) -> Result<AnswerSet, KbError> {
    let doc: ResultsDoc = serde_json::from_str(body).map_err(|e| KbError::Decode(e.to_string()))?;
    let bindings = doc
        .results
        .ok_or_else(|| KbError::Decode("missing \"results\"".into()))?
        .bindings;
    if let Some(c) = &q.count {
        let Some(row) = bindings.into_iter().next() else {
            return Ok(AnswerSet::Count(0));
        };
        let v = row
            .get(&c.alias)
            .ok_or_else(|| KbError::Decode(format!("no binding for ?{}", c.alias)))?;
        let n = v.value.trim().parse::<u64>().map_err(|_| {
            KbError::Decode(format!("count {:?} is not a non-negative integer", v.value))
        })?;
        return Ok(AnswerSet::Count(n));
    }
    let mut out = BTreeSet::new();
    for mut row in bindings {
        if let Some(t) = row.remove(&q.answer_var) {
            out.insert(to_node(t, namespace)?);
        }
    }
    Ok(AnswerSet::Nodes(out))
}

/// Encodes `answers` as the document an endpoint would return for `q`.
pub fn encode_results(answers: &AnswerSet, q: &SparqlQuery, namespace: &str) -> String {
    let (var, rows): (&str, Vec<serde_json::Value>) = match answers {
        AnswerSet::Count(n) => {
            let alias = q.count.as_ref().map_or("count", |c| c.alias.as_str());
            (
                alias,
                vec![json!({ alias: {
                    "type": "literal",
                    "datatype": expand_datatype("xsd:integer"),
                    "value": n.to_string(),
                }})],
            )
        }
        AnswerSet::Nodes(nodes) => (
            q.answer_var.as_str(),
            nodes
                .iter()
                .map(|n| {
                    let term = match n {
                        Node::Iri(i) if i.contains("://") => WireTerm {
                            kind: "uri".into(),
                            value: i.clone(),
                            datatype: None,
                            lang: None,
                        },
                        Node::Iri(i) => WireTerm {
                            kind: "uri".into(),
                            value: format!("{namespace}{i}"),
                            datatype: None,
                            lang: None,
                        },
                        Node::Literal(l) => WireTerm {
                            kind: "literal".into(),
                            value: l.lexical.clone(),
                            datatype: l.datatype.as_deref().map(expand_datatype),
                            lang: l.lang.clone(),
                        },
                    };
                    json!({ q.answer_var.as_str(): term })
                })
                .collect(),
        ),
    };
    json!({ "head": { "vars": [var] }, "results": { "bindings": rows } }).to_string()
}
