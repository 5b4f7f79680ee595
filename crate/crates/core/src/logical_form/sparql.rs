//! The SPARQL subset produced by the compiler and accepted from LLMs and
//! gold data: one projected variable (optionally counted), a basic graph
//! pattern with comparison filters and `FILTER NOT EXISTS` groups, and an
//! optional single-key `ORDER BY` with `LIMIT`/`OFFSET`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::LogicalFormError;
use crate::term::{normalize_datatype, Literal, Node};

pub const FREEBASE_NS: &str = "http://rdf.freebase.com/ns/";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Iri(String),
    Literal(Literal),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn iri(s: impl Into<String>) -> Term {
        Term::Iri(s.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_node(&self) -> Option<Node> {
        match self {
            Term::Var(_) => None,
            Term::Iri(i) => Some(Node::Iri(i.clone())),
            Term::Literal(l) => Some(Node::Literal(l.clone())),
        }
    }
}

impl From<Node> for Term {
    fn from(n: Node) -> Self {
        match n {
            Node::Iri(i) => Term::Iri(i),
            Node::Literal(l) => Term::Literal(l),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Iri(i) if i.contains("://") => write!(f, "<{i}>"),
            Term::Iri(i) if i.contains(':') => f.write_str(i),
            Term::Iri(i) => write!(f, "ns:{i}"),
            Term::Literal(l) => l.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriplePattern {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl TriplePattern {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Self {
        TriplePattern {
            subject,
            predicate,
            object,
        }
    }

    pub fn terms(&self) -> [&Term; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl FilterOp {
    pub fn symbol(self) -> &'static str {
        match self {
            FilterOp::Lt => "<",
            FilterOp::Le => "<=",
            FilterOp::Gt => ">",
            FilterOp::Ge => ">=",
            FilterOp::Eq => "=",
            FilterOp::Ne => "!=",
        }
    }
}

impl From<super::sexpr::CompareOp> for FilterOp {
    fn from(op: super::sexpr::CompareOp) -> Self {
        use super::sexpr::CompareOp;
        match op {
            CompareOp::Lt => FilterOp::Lt,
            CompareOp::Le => FilterOp::Le,
            CompareOp::Gt => FilterOp::Gt,
            CompareOp::Ge => FilterOp::Ge,
        }
    }
}

/// `FILTER (?var op term)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Filter {
    pub var: String,
    pub op: FilterOp,
    pub value: Term,
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FILTER (?{} {} {})",
            self.var,
            self.op.symbol(),
            self.value
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct GroupPattern {
    pub triples: Vec<TriplePattern>,
    pub filters: Vec<Filter>,
    pub not_exists: Vec<GroupPattern>,
}

impl GroupPattern {
    pub fn is_empty(&self) -> bool {
        self.triples.is_empty() && self.filters.is_empty() && self.not_exists.is_empty()
    }

    /// Variables bound by this group's own triples.
    pub fn bound_vars(&self) -> BTreeSet<&str> {
        self.triples
            .iter()
            .flat_map(|t| t.terms())
            .filter_map(Term::as_var)
            .collect()
    }

    fn write_body(&self, f: &mut fmt::Formatter<'_>, sep: &str) -> fmt::Result {
        for t in &self.triples {
            write!(f, "{sep}{t}")?;
        }
        for flt in &self.filters {
            write!(f, "{sep}{flt}")?;
        }
        for ne in &self.not_exists {
            write!(f, "{sep}FILTER NOT EXISTS {{")?;
            ne.write_body(f, " ")?;
            f.write_str(" }")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CountAggregate {
    pub distinct: bool,
    pub alias: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OrderBy {
    pub var: String,
    pub descending: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SparqlQuery {
    pub answer_var: String,
    pub distinct: bool,
    pub count: Option<CountAggregate>,
    pub pattern: GroupPattern,
    pub order: Option<OrderBy>,
    pub limit: Option<u64>,
    pub offset: Option<u64>,
}

impl SparqlQuery {
    pub fn select_distinct(answer_var: impl Into<String>, pattern: GroupPattern) -> Self {
        SparqlQuery {
            answer_var: answer_var.into(),
            distinct: true,
            count: None,
            pattern,
            order: None,
            limit: None,
            offset: None,
        }
    }

    /// Checks that the answer variable and every filter/ordering variable
    /// is bound by a triple pattern in scope.
    pub fn validate(&self) -> Result<(), LogicalFormError> {
        if self.pattern.triples.is_empty() {
            return Err(LogicalFormError::EmptyPattern);
        }
        let top = self.pattern.bound_vars();
        if !top.contains(self.answer_var.as_str()) {
            return Err(LogicalFormError::UnboundVariable(self.answer_var.clone()));
        }
        if let Some(o) = &self.order {
            if !top.contains(o.var.as_str()) {
                return Err(LogicalFormError::UnboundVariable(o.var.clone()));
            }
        }
        check_group(&self.pattern, &BTreeSet::new())
    }

    /// Single-line serialization.
    pub fn serialize(&self) -> String {
        self.to_string()
    }

    /// Multi-line layout, one triple per line.
    pub fn to_pretty(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.select_clause());
        out.push_str("\nWHERE {\n");
        for t in &self.pattern.triples {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        for flt in &self.pattern.filters {
            out.push_str(&flt.to_string());
            out.push('\n');
        }
        for ne in &self.pattern.not_exists {
            out.push_str("FILTER NOT EXISTS {");
            out.push_str(&DisplayGroup(ne).to_string());
            out.push_str(" }\n");
        }
        out.push('}');
        out.push_str(&self.modifiers());
        out
    }

    fn select_clause(&self) -> String {
        match &self.count {
            Some(c) => format!(
                "SELECT (COUNT({}?{}) AS ?{})",
                if c.distinct { "DISTINCT " } else { "" },
                self.answer_var,
                c.alias
            ),
            None => format!(
                "SELECT {}?{}",
                if self.distinct { "DISTINCT " } else { "" },
                self.answer_var
            ),
        }
    }

    fn modifiers(&self) -> String {
        let mut out = String::new();
        if let Some(o) = &self.order {
            out.push_str(&format!(
                " ORDER BY {}(?{})",
                if o.descending { "DESC" } else { "ASC" },
                o.var
            ));
        }
        if let Some(l) = self.limit {
            out.push_str(&format!(" LIMIT {l}"));
        }
        if let Some(o) = self.offset {
            out.push_str(&format!(" OFFSET {o}"));
        }
        out
    }
}

struct DisplayGroup<'a>(&'a GroupPattern);

impl fmt::Display for DisplayGroup<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.write_body(f, " ")
    }
}

fn check_group(g: &GroupPattern, outer: &BTreeSet<&str>) -> Result<(), LogicalFormError> {
    let mut scope: BTreeSet<&str> = outer.clone();
    scope.extend(g.bound_vars());
    for flt in &g.filters {
        if !scope.contains(flt.var.as_str()) {
            return Err(LogicalFormError::UnboundVariable(flt.var.clone()));
        }
        if let Term::Var(v) = &flt.value {
            if !scope.contains(v.as_str()) {
                return Err(LogicalFormError::UnboundVariable(v.clone()));
            }
        }
    }
    for ne in &g.not_exists {
        if ne.triples.is_empty() {
            return Err(LogicalFormError::EmptyPattern);
        }
        check_group(ne, &scope)?;
    }
    Ok(())
}

impl fmt::Display for SparqlQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} WHERE {{", self.select_clause())?;
        self.pattern.write_body(f, " ")?;
        write!(f, " }}{}", self.modifiers())
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Var(String),
    IriRef(String),
    Str(Literal),
    Number(String),
    Punct(&'static str),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, LogicalFormError> {
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < bytes.len() {
        let c = src[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = match c {
            '{' | '}' | '(' | ')' | ';' | ',' | '*' => {
                i += 1;
                Tok::Punct(match c {
                    '{' => "{",
                    '}' => "}",
                    '(' => "(",
                    ')' => ")",
                    ';' => ";",
                    ',' => ",",
                    _ => "*",
                })
            }
            '.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i += 1;
                Tok::Punct(".")
            }
            '?' | '$' => {
                i += 1;
                let s = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                if s == i {
                    return Err(LogicalFormError::syntax(start, "variable name"));
                }
                Tok::Var(src[s..i].to_string())
            }
            '<' => {
                let rest = &src[i + 1..];
                let iri_end = rest
                    .find(|ch: char| ch == '>' || ch.is_whitespace())
                    .filter(|&e| rest[e..].starts_with('>'));
                match (rest.chars().next(), iri_end) {
                    (Some(first), Some(e)) if first.is_ascii_alphabetic() => {
                        i += e + 2;
                        Tok::IriRef(rest[..e].to_string())
                    }
                    _ => {
                        if rest.starts_with('=') {
                            i += 2;
                            Tok::Punct("<=")
                        } else {
                            i += 1;
                            Tok::Punct("<")
                        }
                    }
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    Tok::Punct(">=")
                } else {
                    i += 1;
                    Tok::Punct(">")
                }
            }
            '=' => {
                i += 1;
                Tok::Punct("=")
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    Tok::Punct("!=")
                } else {
                    return Err(LogicalFormError::UnsupportedConstruct(
                        "'!' operator".into(),
                    ));
                }
            }
            '"' | '\'' => {
                let (lit, next) = lex_string(src, i)?;
                i = next;
                Tok::Str(lit)
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let s = i;
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == b'e'
                        || bytes[i] == b'E'
                        || (bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)))
                {
                    i += 1;
                }
                let text = &src[s..i];
                if text.parse::<f64>().is_err() {
                    return Err(LogicalFormError::syntax(start, "number"));
                }
                Tok::Number(text.to_string())
            }
            c if c.is_alphanumeric() || c == '_' || c == ':' => {
                let s = i;
                while i < bytes.len() {
                    let ch = src[i..].chars().next().unwrap();
                    if ch.is_alphanumeric() || matches!(ch, '_' | ':' | '-' | '.') {
                        i += ch.len_utf8();
                    } else {
                        break;
                    }
                }
                // A prefixed name never ends in '.'; that dot terminates the triple.
                let mut word = &src[s..i];
                while word.ends_with('.') {
                    word = &word[..word.len() - 1];
                    i -= 1;
                }
                Tok::Word(word.to_string())
            }
            _ => return Err(LogicalFormError::syntax(start, "SPARQL token")),
        };
        out.push((start, tok));
    }
    Ok(out)
}

fn lex_string(src: &str, start: usize) -> Result<(Literal, usize), LogicalFormError> {
    let quote = src[start..].chars().next().unwrap();
    let mut i = start + 1;
    let mut lexical = String::new();
    loop {
        let Some(c) = src[i..].chars().next() else {
            return Err(LogicalFormError::syntax(start, "closing quote"));
        };
        i += c.len_utf8();
        if c == quote {
            break;
        }
        if c == '\\' {
            let Some(e) = src[i..].chars().next() else {
                return Err(LogicalFormError::syntax(i, "escape character"));
            };
            i += e.len_utf8();
            lexical.push(match e {
                'n' => '\n',
                't' => '\t',
                'r' => '\r',
                other => other,
            });
        } else {
            lexical.push(c);
        }
    }
    let rest = &src[i..];
    if let Some(after) = rest.strip_prefix("^^") {
        let (dt, used) = if let Some(inner) = after.strip_prefix('<') {
            let end = inner
                .find('>')
                .ok_or_else(|| LogicalFormError::syntax(i + 2, "'>'"))?;
            (inner[..end].to_string(), end + 2)
        } else {
            let end = after
                .find(|ch: char| !(ch.is_alphanumeric() || matches!(ch, ':' | '_' | '-')))
                .unwrap_or(after.len());
            (after[..end].to_string(), end)
        };
        if dt.is_empty() {
            return Err(LogicalFormError::syntax(i + 2, "datatype"));
        }
        Ok((
            Literal {
                lexical,
                datatype: Some(normalize_datatype(&dt)),
                lang: None,
            },
            i + 2 + used,
        ))
    } else if let Some(after) = rest.strip_prefix('@') {
        let end = after
            .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '-'))
            .unwrap_or(after.len());
        Ok((
            Literal {
                lexical,
                datatype: None,
                lang: Some(after[..end].to_string()),
            },
            i + 1 + end,
        ))
    } else {
        Ok((Literal::plain(lexical), i))
    }
}

/// Parser state: the KB namespace IRI and the declared prefixes.
pub struct SparqlParser {
    namespace: String,
    prefixes: Vec<(String, String)>,
}

impl Default for SparqlParser {
    fn default() -> Self {
        SparqlParser::new(FREEBASE_NS)
    }
}

struct P<'a> {
    toks: &'a [(usize, Tok)],
    idx: usize,
    end: usize,
}

impl P<'_> {
    fn pos(&self) -> usize {
        self.toks.get(self.idx).map(|t| t.0).unwrap_or(self.end)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|t| &t.1)
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.idx).map(|t| &t.1);
        self.idx += 1;
        t
    }

    fn peek_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek_kw(kw) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), LogicalFormError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(LogicalFormError::syntax(self.pos(), kw))
        }
    }

    fn peek_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.peek_punct(p) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), LogicalFormError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(LogicalFormError::syntax(self.pos(), format!("'{p}'")))
        }
    }

    fn expect_var(&mut self) -> Result<String, LogicalFormError> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Var(v)) => Ok(v.clone()),
            _ => Err(LogicalFormError::syntax(pos, "variable")),
        }
    }
}

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES", "GROUP", "HAVING",
];

const CAST_FUNCTIONS: &[&str] = &[
    "xsd:datetime",
    "xsd:dateTime",
    "xsd:date",
    "xsd:integer",
    "xsd:int",
    "xsd:float",
    "xsd:double",
    "xsd:decimal",
    "xsd:gYear",
    "str",
];

impl SparqlParser {
    pub fn new(namespace: &str) -> Self {
        SparqlParser {
            namespace: namespace.to_string(),
            prefixes: Vec::new(),
        }
    }

    pub fn parse(mut self, text: &str) -> Result<SparqlQuery, LogicalFormError> {
        if text.trim().is_empty() {
            return Err(LogicalFormError::syntax(0, "query"));
        }
        let toks = lex(text)?;
        let mut p = P {
            toks: &toks,
            idx: 0,
            end: text.len(),
        };
        while p.eat_kw("PREFIX") {
            let pos = p.pos();
            let name = match p.next() {
                Some(Tok::Word(w)) if w.ends_with(':') => w.trim_end_matches(':').to_string(),
                _ => return Err(LogicalFormError::syntax(pos, "prefix name")),
            };
            let pos = p.pos();
            let iri = match p.next() {
                Some(Tok::IriRef(i)) => i.clone(),
                _ => return Err(LogicalFormError::syntax(pos, "prefix IRI")),
            };
            self.prefixes.push((name, iri));
        }
        p.expect_kw("SELECT")?;
        let distinct = p.eat_kw("DISTINCT");
        if p.eat_kw("REDUCED") {
            return Err(LogicalFormError::UnsupportedConstruct("REDUCED".into()));
        }
        let (answer_var, count) = if p.eat_punct("(") {
            p.expect_kw("COUNT")?;
            p.expect_punct("(")?;
            let cd = p.eat_kw("DISTINCT");
            let v = p.expect_var()?;
            p.expect_punct(")")?;
            p.expect_kw("AS")?;
            let alias = p.expect_var()?;
            p.expect_punct(")")?;
            (
                v,
                Some(CountAggregate {
                    distinct: cd,
                    alias,
                }),
            )
        } else if p.peek_punct("*") {
            return Err(LogicalFormError::UnsupportedConstruct("SELECT *".into()));
        } else {
            (p.expect_var()?, None)
        };
        if matches!(p.peek(), Some(Tok::Var(_)) | Some(Tok::Punct("("))) {
            return Err(LogicalFormError::UnsupportedConstruct(
                "multiple projected variables".into(),
            ));
        }
        p.eat_kw("WHERE");
        p.expect_punct("{")?;
        let pattern = self.group(&mut p)?;
        let mut order = None;
        let mut limit = None;
        let mut offset = None;
        if p.eat_kw("ORDER") {
            p.expect_kw("BY")?;
            order = Some(self.order_key(&mut p)?);
            if matches!(p.peek(), Some(Tok::Var(_))) || p.peek_kw("ASC") || p.peek_kw("DESC") {
                return Err(LogicalFormError::UnsupportedConstruct(
                    "multiple ORDER BY keys".into(),
                ));
            }
        }
        loop {
            if p.eat_kw("LIMIT") {
                limit = Some(self.integer(&mut p)?);
            } else if p.eat_kw("OFFSET") {
                offset = Some(self.integer(&mut p)?);
            } else {
                break;
            }
        }
        if p.idx < toks.len() {
            return Err(LogicalFormError::syntax(p.pos(), "end of query"));
        }
        let q = SparqlQuery {
            answer_var,
            distinct,
            count,
            pattern,
            order,
            limit,
            offset,
        };
        q.validate()?;
        Ok(q)
    }

    fn integer(&self, p: &mut P<'_>) -> Result<u64, LogicalFormError> {
        let pos = p.pos();
        match p.next() {
            Some(Tok::Number(n)) => n
                .parse::<u64>()
                .map_err(|_| LogicalFormError::syntax(pos, "non-negative integer")),
            _ => Err(LogicalFormError::syntax(pos, "integer")),
        }
    }

    fn order_key(&self, p: &mut P<'_>) -> Result<OrderBy, LogicalFormError> {
        let descending = if p.eat_kw("DESC") {
            true
        } else {
            p.eat_kw("ASC");
            false
        };
        let var = if p.eat_punct("(") {
            let v = self.maybe_cast_var(p)?;
            p.expect_punct(")")?;
            v
        } else {
            self.maybe_cast_var(p)?
        };
        Ok(OrderBy { var, descending })
    }

    /// `?v` or a cast such as `xsd:datetime(?v)`; casts are dropped.
    fn maybe_cast_var(&self, p: &mut P<'_>) -> Result<String, LogicalFormError> {
        if let Some(Tok::Word(w)) = p.peek() {
            if CAST_FUNCTIONS.iter().any(|c| c.eq_ignore_ascii_case(w)) {
                p.next();
                p.expect_punct("(")?;
                let v = p.expect_var()?;
                p.expect_punct(")")?;
                return Ok(v);
            }
            return Err(LogicalFormError::UnsupportedConstruct(format!(
                "function {w}"
            )));
        }
        p.expect_var()
    }

    fn group(&self, p: &mut P<'_>) -> Result<GroupPattern, LogicalFormError> {
        let mut g = GroupPattern::default();
        loop {
            if p.eat_punct("}") {
                return Ok(g);
            }
            if p.eat_punct(".") {
                continue;
            }
            let pos = p.pos();
            match p.peek() {
                None => return Err(LogicalFormError::syntax(pos, "'}'")),
                Some(Tok::Punct("{")) => {
                    return Err(LogicalFormError::UnsupportedConstruct(
                        "nested group pattern".into(),
                    ))
                }
                Some(Tok::Word(w)) if w.eq_ignore_ascii_case("SELECT") => {
                    return Err(LogicalFormError::UnsupportedConstruct("subquery".into()))
                }
                Some(Tok::Word(w))
                    if UNSUPPORTED_KEYWORDS
                        .iter()
                        .any(|k| k.eq_ignore_ascii_case(w)) =>
                {
                    return Err(LogicalFormError::UnsupportedConstruct(
                        w.to_ascii_uppercase(),
                    ))
                }
                Some(Tok::Word(w)) if w.eq_ignore_ascii_case("FILTER") => {
                    p.next();
                    if p.eat_kw("NOT") {
                        p.expect_kw("EXISTS")?;
                        p.expect_punct("{")?;
                        g.not_exists.push(self.group(p)?);
                    } else if p.peek_kw("EXISTS") {
                        return Err(LogicalFormError::UnsupportedConstruct(
                            "FILTER EXISTS".into(),
                        ));
                    } else {
                        g.filters.push(self.filter(p)?);
                    }
                }
                _ => self.triples_block(p, &mut g.triples)?,
            }
        }
    }

    fn triples_block(
        &self,
        p: &mut P<'_>,
        out: &mut Vec<TriplePattern>,
    ) -> Result<(), LogicalFormError> {
        let subject = self.term(p)?;
        loop {
            let predicate = self.term(p)?;
            if let Term::Literal(_) = predicate {
                return Err(LogicalFormError::syntax(
                    p.pos(),
                    "predicate IRI or variable",
                ));
            }
            loop {
                let object = self.term(p)?;
                out.push(TriplePattern::new(
                    subject.clone(),
                    predicate.clone(),
                    object,
                ));
                if !p.eat_punct(",") {
                    break;
                }
            }
            if p.eat_punct(";") {
                if p.peek_punct(".") || p.peek_punct("}") {
                    break;
                }
                continue;
            }
            break;
        }
        Ok(())
    }

    fn filter(&self, p: &mut P<'_>) -> Result<Filter, LogicalFormError> {
        p.expect_punct("(")?;
        let var = self.maybe_cast_var(p)?;
        let pos = p.pos();
        let op = match p.next() {
            Some(Tok::Punct("<")) => FilterOp::Lt,
            Some(Tok::Punct("<=")) => FilterOp::Le,
            Some(Tok::Punct(">")) => FilterOp::Gt,
            Some(Tok::Punct(">=")) => FilterOp::Ge,
            Some(Tok::Punct("=")) => FilterOp::Eq,
            Some(Tok::Punct("!=")) => FilterOp::Ne,
            _ => return Err(LogicalFormError::syntax(pos, "comparison operator")),
        };
        let value = if matches!(p.peek(), Some(Tok::Word(w)) if CAST_FUNCTIONS.iter().any(|c| c.eq_ignore_ascii_case(w)))
        {
            Term::Var(self.maybe_cast_var(p)?)
        } else {
            self.term(p)?
        };
        if !p.eat_punct(")") {
            return Err(LogicalFormError::UnsupportedConstruct(
                "compound filter expression".into(),
            ));
        }
        Ok(Filter { var, op, value })
    }

    fn term(&self, p: &mut P<'_>) -> Result<Term, LogicalFormError> {
        let pos = p.pos();
        match p.next().cloned() {
            Some(Tok::Var(v)) => Ok(Term::Var(v)),
            Some(Tok::IriRef(iri)) => Ok(Term::Iri(self.shorten(&iri))),
            Some(Tok::Str(l)) => Ok(Term::Literal(l)),
            Some(Tok::Number(n)) => {
                let dt = if n.contains(['e', 'E']) {
                    "xsd:double"
                } else if n.contains('.') {
                    "xsd:decimal"
                } else {
                    "xsd:integer"
                };
                Ok(Term::Literal(Literal::typed(n, dt)))
            }
            Some(Tok::Word(w)) if w == "a" => Err(LogicalFormError::UnsupportedConstruct(
                "'a' shorthand".into(),
            )),
            Some(Tok::Word(w)) if w == "true" || w == "false" => {
                Ok(Term::Literal(Literal::typed(w, "xsd:boolean")))
            }
            Some(Tok::Word(w)) if w.contains(':') => Ok(Term::Iri(self.expand_prefixed(&w))),
            _ => Err(LogicalFormError::syntax(pos, "term")),
        }
    }

    fn expand_prefixed(&self, w: &str) -> String {
        let (prefix, local) = w.split_once(':').unwrap();
        let declared = self
            .prefixes
            .iter()
            .rev()
            .find(|(n, _)| n == prefix)
            .map(|(_, iri)| iri.as_str());
        match declared {
            Some(iri) if iri == self.namespace => local.to_string(),
            Some(iri) => self.shorten(&format!("{iri}{local}")),
            None if prefix == "ns" || prefix.is_empty() => local.to_string(),
            None => w.to_string(),
        }
    }

    fn shorten(&self, iri: &str) -> String {
        match iri.strip_prefix(&self.namespace) {
            Some(local) => local.to_string(),
            None => iri.to_string(),
        }
    }
}

/// Parses with the Freebase namespace.
pub fn parse_sparql(text: &str) -> Result<SparqlQuery, LogicalFormError> {
    SparqlParser::default().parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUNDED: &str = "SELECT DISTINCT ?x WHERE { ns:m.07l8x ns:sports.sports_team.founded ?x . ?x ns:type.object.type ns:type.datetime . }";

    #[test]
    fn parses_paper_query() {
        let q = parse_sparql(FOUNDED).unwrap();
        assert_eq!(q.answer_var, "x");
        assert!(q.distinct);
        assert_eq!(q.pattern.triples.len(), 2);
        assert_eq!(
            q.pattern.triples[0],
            TriplePattern::new(
                Term::iri("m.07l8x"),
                Term::iri("sports.sports_team.founded"),
                Term::var("x")
            )
        );
        assert_eq!(q.serialize(), FOUNDED);
    }

    #[test]
    fn pretty_layout_parses_the_same() {
        let q = parse_sparql(FOUNDED).unwrap();
        let pretty = q.to_pretty();
        assert!(pretty.starts_with("SELECT DISTINCT ?x\nWHERE {\nns:m.07l8x"));
        assert_eq!(parse_sparql(&pretty).unwrap(), q);
    }

    #[test]
    fn empty_pattern_rejected() {
        assert_eq!(
            parse_sparql("SELECT ?x WHERE {}").unwrap_err(),
            LogicalFormError::EmptyPattern
        );
    }

    #[test]
    fn full_iris_and_prefixes_shortened() {
        let q = parse_sparql(
            "PREFIX : <http://rdf.freebase.com/ns/>\nSELECT DISTINCT ?x WHERE { :m.0abc :a.b.c ?x . ?x <http://rdf.freebase.com/ns/type.object.type> :d.e }",
        )
        .unwrap();
        assert_eq!(q.pattern.triples[0].subject, Term::iri("m.0abc"));
        assert_eq!(
            q.pattern.triples[1].predicate,
            Term::iri("type.object.type")
        );
        assert_eq!(q.pattern.triples[1].object, Term::iri("d.e"));
    }

    #[test]
    fn unsupported_features() {
        for (text, what) in [
            (
                "SELECT ?x WHERE { ?x ns:a.b ?y . OPTIONAL { ?y ns:c.d ?z } }",
                "OPTIONAL",
            ),
            (
                "SELECT ?x WHERE { { ?x ns:a.b ?y } UNION { ?x ns:c.d ?y } }",
                "nested group pattern",
            ),
            (
                "SELECT ?x WHERE { ?x ns:a.b ?y . { SELECT ?y WHERE { ?y ns:c.d ?z } } }",
                "nested group pattern",
            ),
        ] {
            match parse_sparql(text).unwrap_err() {
                LogicalFormError::UnsupportedConstruct(c) => assert_eq!(c, what),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn count_filters_order() {
        let text = "SELECT (COUNT(DISTINCT ?x) AS ?count) WHERE { ?x ns:a.b ?y0 . FILTER (?y0 >= \"3\"^^xsd:integer) }";
        let q = parse_sparql(text).unwrap();
        assert!(q.count.is_some());
        assert_eq!(q.pattern.filters[0].op, FilterOp::Ge);
        assert_eq!(q.serialize(), text);

        let q = parse_sparql(
            "SELECT DISTINCT ?x WHERE { ?x ns:a.b ?sk0 . } ORDER BY DESC(xsd:datetime(?sk0)) LIMIT 1",
        )
        .unwrap();
        assert_eq!(
            q.order,
            Some(OrderBy {
                var: "sk0".into(),
                descending: true
            })
        );
        assert_eq!(q.limit, Some(1));
    }

    #[test]
    fn predicate_object_lists_expand() {
        let q =
            parse_sparql("SELECT ?x WHERE { ?x ns:a.b ns:m.01 , ns:m.02 ; ns:c.d ?y . }").unwrap();
        assert_eq!(q.pattern.triples.len(), 3);
        assert_eq!(q.pattern.triples[2].predicate, Term::iri("c.d"));
    }

    #[test]
    fn unbound_variables_rejected() {
        assert!(matches!(
            parse_sparql("SELECT ?z WHERE { ?x ns:a.b ?y }").unwrap_err(),
            LogicalFormError::UnboundVariable(_)
        ));
        assert!(matches!(
            parse_sparql("SELECT ?x WHERE { ?x ns:a.b ?y FILTER (?q > 3) }").unwrap_err(),
            LogicalFormError::UnboundVariable(_)
        ));
    }

    #[test]
    fn less_than_without_spaces() {
        let q = parse_sparql("SELECT ?x WHERE { ?x ns:a.b ?y FILTER(?y<3) }").unwrap();
        assert_eq!(q.pattern.filters[0].op, FilterOp::Lt);
    }

    #[test]
    fn not_exists_round_trip() {
        let text = "SELECT DISTINCT ?x WHERE { ?x ns:a.b ?y0 . FILTER NOT EXISTS { ?y1 ns:a.b ?y2 . FILTER (?y2 > ?y0) } }";
        let q = parse_sparql(text).unwrap();
        assert_eq!(q.pattern.not_exists.len(), 1);
        assert_eq!(q.serialize(), text);
    }
}
