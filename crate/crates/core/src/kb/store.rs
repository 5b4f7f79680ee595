use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::KbError;
use crate::logical_form::sparql::FREEBASE_NS;
use crate::term::{normalize_datatype, Literal, Node};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Node,
    pub predicate: String,
    pub object: Node,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: Node) -> Self {
        Triple {
            subject: Node::Iri(subject.into()),
            predicate: predicate.into(),
            object,
        }
    }
}

/// In-memory triple set. Subjects are usually IRIs; literal subjects are
/// accepted so value-type facts such as `"1961"^^xsd:gYear type.object.type
/// type.datetime` can be stated. Duplicates are dropped on insert.
#[derive(Clone, Debug, Default)]
pub struct TripleStore {
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    by_sp: HashMap<(Node, String), Vec<usize>>,
    by_op: HashMap<(Node, String), Vec<usize>>,
    by_p: HashMap<String, Vec<usize>>,
    by_s: HashMap<Node, Vec<usize>>,
    by_o: HashMap<Node, Vec<usize>>,
}

impl FromIterator<Triple> for TripleStore {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut store = TripleStore::default();
        for t in iter {
            store.insert(t);
        }
        store
    }
}

impl TripleStore {
    pub fn new() -> Self {
        TripleStore::default()
    }

    /// Returns false if the triple was already present.
    pub fn insert(&mut self, t: Triple) -> bool {
        if !self.seen.insert(t.clone()) {
            return false;
        }
        let i = self.triples.len();
        self.by_sp
            .entry((t.subject.clone(), t.predicate.clone()))
            .or_default()
            .push(i);
        self.by_op
            .entry((t.object.clone(), t.predicate.clone()))
            .or_default()
            .push(i);
        self.by_p.entry(t.predicate.clone()).or_default().push(i);
        self.by_s.entry(t.subject.clone()).or_default().push(i);
        self.by_o.entry(t.object.clone()).or_default().push(i);
        self.triples.push(t);
        true
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.seen.contains(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    /// Triples matching the bound positions, in insertion order.
    pub fn matching<'a>(
        &'a self,
        subject: Option<&Node>,
        predicate: Option<&str>,
        object: Option<&Node>,
    ) -> Box<dyn Iterator<Item = &'a Triple> + 'a> {
        const NONE: &[usize] = &[];
        let idx: &[usize] = match (subject, predicate, object) {
            (Some(s), Some(p), _) => self
                .by_sp
                .get(&(s.clone(), p.to_string()))
                .map_or(NONE, Vec::as_slice),
            (None, Some(p), Some(o)) => self
                .by_op
                .get(&(o.clone(), p.to_string()))
                .map_or(NONE, Vec::as_slice),
            (None, Some(p), None) => self.by_p.get(p).map_or(NONE, Vec::as_slice),
            (Some(s), None, _) => self.by_s.get(s).map_or(NONE, Vec::as_slice),
            (None, None, Some(o)) => self.by_o.get(o).map_or(NONE, Vec::as_slice),
            (None, None, None) => return Box::new(self.triples.iter()),
        };
        let object = object.cloned();
        Box::new(
            idx.iter()
                .map(move |&i| &self.triples[i])
                .filter(move |t| object.as_ref().is_none_or(|o| &t.object == o)),
        )
    }

    /// Subjects `a` with `(a, predicate, object)`.
    pub fn subjects<'a>(
        &'a self,
        predicate: &str,
        object: &Node,
    ) -> impl Iterator<Item = &'a Node> + 'a {
        self.by_op
            .get(&(object.clone(), predicate.to_string()))
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i].subject)
    }

    /// Objects `o` with `(subject, predicate, o)`.
    pub fn objects<'a>(
        &'a self,
        subject: &Node,
        predicate: &str,
    ) -> impl Iterator<Item = &'a Node> + 'a {
        self.by_sp
            .get(&(subject.clone(), predicate.to_string()))
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i].object)
    }
}

/// Loads a line-oriented triple file.
///
/// Each non-blank line not starting with `#` holds `subject predicate
/// object [datatype] [.]`. IRIs may be dotted ids, `ns:`-prefixed or
/// `<...>`; objects may be quoted literals with `^^datatype` or `@lang`.
/// A fourth token types a bare object as a literal.
pub fn load_triples(path: &Path) -> Result<TripleStore, KbError> {
    let text =
        fs::read_to_string(path).map_err(|e| KbError::Io(format!("{}: {e}", path.display())))?;
    parse_triples(&text)
}

pub fn parse_triples(text: &str) -> Result<TripleStore, KbError> {
    let mut store = TripleStore::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let t = parse_line(trimmed).map_err(|message| KbError::Parse {
            line: line_no,
            message,
        })?;
        store.insert(t);
    }
    Ok(store)
}

#[derive(Debug)]
enum Tok {
    Bare(String),
    Quoted(Literal),
}

fn tokenize(line: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let mut chars = line.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '"' {
            chars.next();
            let mut lexical = String::new();
            let mut closed = false;
            while let Some((_, c)) = chars.next() {
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match chars.next() {
                        Some((_, 'n')) => lexical.push('\n'),
                        Some((_, 't')) => lexical.push('\t'),
                        Some((_, e)) => lexical.push(e),
                        None => return Err("dangling escape".into()),
                    },
                    c => lexical.push(c),
                }
            }
            if !closed {
                return Err("unterminated string literal".into());
            }
            let mut suffix = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                suffix.push(c);
                chars.next();
            }
            let lit = if let Some(dt) = suffix.strip_prefix("^^") {
                Literal::typed(lexical, dt)
            } else if let Some(lang) = suffix.strip_prefix('@') {
                Literal {
                    lexical,
                    datatype: None,
                    lang: Some(lang.to_string()),
                }
            } else if suffix.is_empty() {
                Literal::plain(lexical)
            } else {
                return Err(format!(
                    "unexpected text after literal at column {}",
                    start + 1
                ));
            };
            out.push(Tok::Quoted(lit));
        } else {
            let mut word = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                word.push(c);
                chars.next();
            }
            out.push(Tok::Bare(word));
        }
    }
    Ok(out)
}

fn iri(word: &str) -> Result<String, String> {
    let w = if let Some(inner) = word.strip_prefix('<') {
        inner
            .strip_suffix('>')
            .ok_or_else(|| format!("unterminated IRI {word}"))?
    } else {
        word
    };
    let w = w.strip_prefix(FREEBASE_NS).unwrap_or(w);
    let w = w.strip_prefix("ns:").unwrap_or(w);
    if w.is_empty() {
        return Err("empty IRI".into());
    }
    Ok(w.to_string())
}

fn parse_line(line: &str) -> Result<Triple, String> {
    let mut toks = tokenize(line)?;
    if matches!(toks.last(), Some(Tok::Bare(w)) if w == ".") {
        toks.pop();
    } else if let Some(Tok::Bare(w)) = toks.last_mut() {
        if w.len() > 1 && w.ends_with('.') && !w.starts_with('<') {
            w.pop();
        }
    }
    if toks.len() < 3 || toks.len() > 4 {
        return Err(format!("expected 3 or 4 fields, found {}", toks.len()));
    }
    let datatype = if toks.len() == 4 {
        match toks.pop() {
            Some(Tok::Bare(dt)) => Some(normalize_datatype(&dt)),
            _ => return Err("datatype must be a bare token".into()),
        }
    } else {
        None
    };
    let mut it = toks.into_iter();
    let subject = match it.next() {
        Some(Tok::Bare(w)) => Node::Iri(iri(&w)?),
        Some(Tok::Quoted(l)) => Node::Literal(l),
        None => return Err("missing subject".into()),
    };
    let predicate = match it.next() {
        Some(Tok::Bare(w)) => iri(&w)?,
        _ => return Err("predicate must be an IRI".into()),
    };
    let object = match (it.next(), datatype) {
        (Some(Tok::Quoted(mut l)), Some(dt)) => {
            l.datatype = Some(dt);
            l.lang = None;
            Node::Literal(l)
        }
        (Some(Tok::Quoted(l)), None) => Node::Literal(l),
        (Some(Tok::Bare(w)), Some(dt)) => Node::Literal(Literal {
            lexical: w,
            datatype: Some(dt),
            lang: None,
        }),
        (Some(Tok::Bare(w)), None) => Node::Iri(iri(&w)?),
        (None, _) => return Err("missing object".into()),
    };
    Ok(Triple {
        subject,
        predicate,
        object,
    })
}
