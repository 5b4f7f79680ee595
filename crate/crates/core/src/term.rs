//! RDF-level values shared by the logical forms, the triple store and the
//! answer sets.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";

/// A literal value with an optional datatype (`xsd:`-prefixed after
/// normalization) or language tag.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub lexical: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datatype: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

/// How a literal participates in comparisons.
#[derive(Clone, Debug, PartialEq)]
pub enum LiteralValue<'a> {
    Numeric(f64),
    Temporal(&'a str),
    Text(&'a str),
    Other,
}

impl Literal {
    pub fn plain(lexical: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: None,
            lang: None,
        }
    }

    pub fn typed(lexical: impl Into<String>, datatype: &str) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: Some(normalize_datatype(datatype)),
            lang: None,
        }
    }

    pub fn integer(value: i64) -> Self {
        Literal::typed(value.to_string(), "xsd:integer")
    }

    pub fn value(&self) -> LiteralValue<'_> {
        let Some(dt) = self.datatype.as_deref() else {
            return LiteralValue::Text(&self.lexical);
        };
        match dt {
            "xsd:integer"
            | "xsd:int"
            | "xsd:long"
            | "xsd:short"
            | "xsd:decimal"
            | "xsd:float"
            | "xsd:double"
            | "xsd:nonNegativeInteger"
            | "xsd:positiveInteger"
            | "xsd:negativeInteger"
            | "xsd:nonPositiveInteger"
            | "xsd:unsignedInt"
            | "xsd:unsignedLong" => match self.lexical.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => LiteralValue::Numeric(v),
                _ => LiteralValue::Other,
            },
            "xsd:dateTime" | "xsd:date" | "xsd:gYear" | "xsd:gYearMonth" | "xsd:time" => {
                LiteralValue::Temporal(self.lexical.trim())
            }
            "xsd:string" => LiteralValue::Text(&self.lexical),
            _ => LiteralValue::Other,
        }
    }

    /// Value comparison used by FILTER and superlatives. Numbers compare
    /// numerically, temporal values lexicographically on their ISO-8601
    /// lexical form, strings lexicographically; anything else (including
    /// mixed kinds) is incomparable.
    pub fn compare(&self, other: &Literal) -> Option<Ordering> {
        match (self.value(), other.value()) {
            (LiteralValue::Numeric(a), LiteralValue::Numeric(b)) => a.partial_cmp(&b),
            (LiteralValue::Temporal(a), LiteralValue::Temporal(b)) => Some(a.cmp(b)),
            (LiteralValue::Text(a), LiteralValue::Text(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

/// `<http://www.w3.org/2001/XMLSchema#x>` and `xsd:x` both become `xsd:x`.
pub fn normalize_datatype(dt: &str) -> String {
    let dt = dt.trim().trim_start_matches('<').trim_end_matches('>');
    match dt.strip_prefix(XSD_NS) {
        Some(local) => format!("xsd:{local}"),
        None => dt.to_string(),
    }
}

pub fn expand_datatype(dt: &str) -> String {
    match dt.strip_prefix("xsd:") {
        Some(local) => format!("{XSD_NS}{local}"),
        None => dt.to_string(),
    }
}

pub(crate) fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\"", escape_string(&self.lexical))?;
        if let Some(lang) = &self.lang {
            write!(f, "@{lang}")
        } else if let Some(dt) = &self.datatype {
            if dt.contains("://") {
                write!(f, "^^<{dt}>")
            } else {
                write!(f, "^^{dt}")
            }
        } else {
            Ok(())
        }
    }
}

/// A ground RDF term. KB-namespace IRIs (entities, classes, relations) are
/// held in their dotted short form, e.g. `m.07l8x`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Iri(String),
    Literal(Literal),
}

impl Node {
    pub fn iri(s: impl Into<String>) -> Self {
        Node::Iri(s.into())
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Node::Iri(s) => Some(s),
            Node::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Node::Literal(l) => Some(l),
            Node::Iri(_) => None,
        }
    }

    /// The normalized answer string: dotted id for IRIs, lexical form for
    /// literals.
    pub fn answer_string(&self) -> String {
        match self {
            Node::Iri(s) => s.clone(),
            Node::Literal(l) => l.lexical.clone(),
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Iri(s) => f.write_str(s),
            Node::Literal(l) => l.fmt(f),
        }
    }
}
