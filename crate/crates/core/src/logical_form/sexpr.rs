//! S-expression logical forms in the GrailQA dialect.
//!
//! ```text
//! expr     := set | (COUNT set) | (ARGMAX set rel) | (ARGMIN set rel)
//! set      := entity | literal | class
//!           | (AND set set) | (JOIN relation set) | (cmp rel literal)
//! relation := rel | (R rel)
//! cmp      := lt | le | gt | ge
//! ```
//!
//! COUNT and the superlatives only appear at the root. `TC` is recognised
//! and rejected.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::schema::EntityPattern;
use super::{is_dotted_iri, LogicalFormError};
use crate::term::{normalize_datatype, Literal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn keyword(self) -> &'static str {
        match self {
            CompareOp::Lt => "lt",
            CompareOp::Le => "le",
            CompareOp::Gt => "gt",
            CompareOp::Ge => "ge",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Lt => ord == Less,
            CompareOp::Le => ord != Greater,
            CompareOp::Gt => ord == Greater,
            CompareOp::Ge => ord != Less,
        }
    }
}

/// A relation in JOIN position, possibly reversed with `(R ...)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Relation {
    pub iri: String,
    pub reverse: bool,
}

impl Relation {
    pub fn forward(iri: impl Into<String>) -> Self {
        Relation {
            iri: iri.into(),
            reverse: false,
        }
    }

    pub fn reversed(iri: impl Into<String>) -> Self {
        Relation {
            iri: iri.into(),
            reverse: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SExpr {
    Entity(String),
    Literal(Literal),
    Class(String),
    And(Box<SExpr>, Box<SExpr>),
    /// `(JOIN r S)` denotes `{a : (a, r, b), b ∈ S}`; reversed relations
    /// swap subject and object.
    Join(Relation, Box<SExpr>),
    Count(Box<SExpr>),
    ArgMax(Box<SExpr>, String),
    ArgMin(Box<SExpr>, String),
    Compare(CompareOp, String, Literal),
}

impl SExpr {
    pub fn and(a: SExpr, b: SExpr) -> SExpr {
        SExpr::And(Box::new(a), Box::new(b))
    }

    pub fn join(rel: Relation, s: SExpr) -> SExpr {
        SExpr::Join(rel, Box::new(s))
    }

    pub fn count(s: SExpr) -> SExpr {
        SExpr::Count(Box::new(s))
    }

    pub fn entity(id: impl Into<String>) -> SExpr {
        SExpr::Entity(id.into())
    }

    pub fn class(iri: impl Into<String>) -> SExpr {
        SExpr::Class(iri.into())
    }

    /// True for nodes that denote a set of KB nodes.
    pub fn is_set_valued(&self) -> bool {
        !matches!(
            self,
            SExpr::Count(_) | SExpr::ArgMax(..) | SExpr::ArgMin(..)
        )
    }

    pub fn depth(&self) -> usize {
        match self {
            SExpr::Entity(_) | SExpr::Literal(_) | SExpr::Class(_) | SExpr::Compare(..) => 1,
            SExpr::And(a, b) => 1 + a.depth().max(b.depth()),
            SExpr::Join(_, s) | SExpr::Count(s) | SExpr::ArgMax(s, _) | SExpr::ArgMin(s, _) => {
                1 + s.depth()
            }
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Entity(id) => f.write_str(id),
            SExpr::Literal(l) => l.fmt(f),
            SExpr::Class(c) => f.write_str(c),
            SExpr::And(a, b) => write!(f, "(AND {a} {b})"),
            SExpr::Join(r, s) if r.reverse => write!(f, "(JOIN (R {}) {s})", r.iri),
            SExpr::Join(r, s) => write!(f, "(JOIN {} {s})", r.iri),
            SExpr::Count(s) => write!(f, "(COUNT {s})"),
            SExpr::ArgMax(s, r) => write!(f, "(ARGMAX {s} {r})"),
            SExpr::ArgMin(s, r) => write!(f, "(ARGMIN {s} {r})"),
            SExpr::Compare(op, r, l) => write!(f, "({} {r} {l})", op.keyword()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Open,
    Close,
    Symbol(String),
    Literal(Literal),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Token)>, LogicalFormError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next_token(&mut self) -> Result<Option<(usize, Token)>, LogicalFormError> {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        let start = self.pos;
        let Some(c) = self.peek() else {
            return Ok(None);
        };
        let tok = match c {
            '(' => {
                self.pos += 1;
                Token::Open
            }
            ')' => {
                self.pos += 1;
                Token::Close
            }
            '"' => Token::Literal(self.quoted(start)?),
            _ => {
                let word = self.word();
                if let Some((lex, dt)) = word.split_once("^^") {
                    Token::Literal(Literal::typed(lex, dt))
                } else if !word.is_empty() && word.bytes().all(|b| b.is_ascii_digit()) {
                    Token::Literal(Literal::typed(word, "xsd:integer"))
                } else {
                    Token::Symbol(word.to_string())
                }
            }
        };
        Ok(Some((start, tok)))
    }

    fn word(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.src[start..self.pos]
    }

    fn quoted(&mut self, start: usize) -> Result<Literal, LogicalFormError> {
        self.pos += 1;
        let mut lexical = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(LogicalFormError::syntax(start, "closing '\"'"));
            };
            self.pos += c.len_utf8();
            match c {
                '"' => break,
                '\\' => {
                    let Some(e) = self.peek() else {
                        return Err(LogicalFormError::syntax(self.pos, "escape character"));
                    };
                    self.pos += e.len_utf8();
                    lexical.push(match e {
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        other => other,
                    });
                }
                c => lexical.push(c),
            }
        }
        let suffix = self.word();
        if let Some(dt) = suffix.strip_prefix("^^") {
            Ok(Literal {
                lexical,
                datatype: Some(normalize_datatype(dt)),
                lang: None,
            })
        } else if let Some(lang) = suffix.strip_prefix('@') {
            Ok(Literal {
                lexical,
                datatype: None,
                lang: Some(lang.to_string()),
            })
        } else if suffix.is_empty() {
            Ok(Literal::plain(lexical))
        } else {
            Err(LogicalFormError::syntax(
                self.pos - suffix.len(),
                "whitespace or ')' after literal",
            ))
        }
    }
}

/// Parser bound to an entity-id pattern.
pub struct SexprParser<'p> {
    entities: &'p EntityPattern,
}

struct Cursor<'t> {
    tokens: &'t [(usize, Token)],
    idx: usize,
    end: usize,
}

impl Cursor<'_> {
    fn pos(&self) -> usize {
        self.tokens.get(self.idx).map(|t| t.0).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.idx).map(|t| &t.1);
        self.idx += 1;
        t
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.idx).map(|t| &t.1)
    }

    fn expect_close(&mut self) -> Result<(), LogicalFormError> {
        let pos = self.pos();
        match self.next() {
            Some(Token::Close) => Ok(()),
            _ => Err(LogicalFormError::syntax(pos, "')'")),
        }
    }
}

impl<'p> SexprParser<'p> {
    pub fn new(entities: &'p EntityPattern) -> Self {
        SexprParser { entities }
    }

    pub fn parse(&self, text: &str) -> Result<SExpr, LogicalFormError> {
        let tokens = Lexer::tokens(text)?;
        if tokens.is_empty() {
            return Err(LogicalFormError::syntax(0, "expression"));
        }
        let mut cur = Cursor {
            tokens: &tokens,
            idx: 0,
            end: text.len(),
        };
        let expr = self.expr(&mut cur, true)?;
        if cur.idx < tokens.len() {
            return Err(LogicalFormError::syntax(cur.pos(), "end of input"));
        }
        Ok(expr)
    }

    fn expr(&self, cur: &mut Cursor<'_>, root: bool) -> Result<SExpr, LogicalFormError> {
        let pos = cur.pos();
        match cur.next().cloned() {
            None => Err(LogicalFormError::syntax(pos, "expression")),
            Some(Token::Close) => Err(LogicalFormError::syntax(pos, "expression")),
            Some(Token::Literal(l)) => Ok(SExpr::Literal(l)),
            Some(Token::Symbol(s)) => self.atom(&s, pos),
            Some(Token::Open) => {
                let head_pos = cur.pos();
                let head = match cur.next() {
                    Some(Token::Symbol(h)) => h.clone(),
                    _ => return Err(LogicalFormError::syntax(head_pos, "operator")),
                };
                let upper = head.to_ascii_uppercase();
                let expr = match upper.as_str() {
                    "AND" => {
                        let a = self.expr(cur, false)?;
                        let b = self.expr(cur, false)?;
                        SExpr::and(a, b)
                    }
                    "JOIN" => {
                        let rel = self.relation(cur)?;
                        let s = self.expr(cur, false)?;
                        SExpr::join(rel, s)
                    }
                    "COUNT" | "ARGMAX" | "ARGMIN" if !root => {
                        return Err(LogicalFormError::UnsupportedConstruct(format!(
                            "nested {upper}"
                        )));
                    }
                    "COUNT" => SExpr::count(self.expr(cur, false)?),
                    "ARGMAX" | "ARGMIN" => {
                        let s = self.expr(cur, false)?;
                        let r = self.iri(cur)?;
                        if upper == "ARGMAX" {
                            SExpr::ArgMax(Box::new(s), r)
                        } else {
                            SExpr::ArgMin(Box::new(s), r)
                        }
                    }
                    "LT" | "LE" | "GT" | "GE" => {
                        let op = match upper.as_str() {
                            "LT" => CompareOp::Lt,
                            "LE" => CompareOp::Le,
                            "GT" => CompareOp::Gt,
                            _ => CompareOp::Ge,
                        };
                        let r = self.iri(cur)?;
                        let lit_pos = cur.pos();
                        let lit = match cur.next() {
                            Some(Token::Literal(l)) => l.clone(),
                            _ => return Err(LogicalFormError::syntax(lit_pos, "literal")),
                        };
                        SExpr::Compare(op, r, lit)
                    }
                    "R" => {
                        return Err(LogicalFormError::syntax(
                            head_pos,
                            "set expression (R is only valid as a JOIN relation)",
                        ))
                    }
                    "TC" => return Err(LogicalFormError::UnsupportedConstruct("TC".into())),
                    _ => return Err(LogicalFormError::syntax(head_pos, "known operator")),
                };
                cur.expect_close()?;
                Ok(expr)
            }
        }
    }

    fn atom(&self, s: &str, pos: usize) -> Result<SExpr, LogicalFormError> {
        if self.entities.is_match(s) {
            Ok(SExpr::Entity(s.to_string()))
        } else if is_dotted_iri(s) {
            Ok(SExpr::Class(s.to_string()))
        } else {
            Err(LogicalFormError::syntax(
                pos,
                "entity id, class IRI or literal",
            ))
        }
    }

    fn iri(&self, cur: &mut Cursor<'_>) -> Result<String, LogicalFormError> {
        let pos = cur.pos();
        match cur.next() {
            Some(Token::Symbol(s)) if is_dotted_iri(s) => Ok(s.clone()),
            _ => Err(LogicalFormError::syntax(pos, "relation IRI")),
        }
    }

    fn relation(&self, cur: &mut Cursor<'_>) -> Result<Relation, LogicalFormError> {
        if matches!(cur.peek(), Some(Token::Open)) {
            cur.next();
            let pos = cur.pos();
            match cur.next() {
                Some(Token::Symbol(h)) if h.eq_ignore_ascii_case("R") => {}
                _ => return Err(LogicalFormError::syntax(pos, "R")),
            }
            let iri = self.iri(cur)?;
            cur.expect_close()?;
            Ok(Relation::reversed(iri))
        } else {
            Ok(Relation::forward(self.iri(cur)?))
        }
    }
}

/// Parses with the default (Freebase mid) entity pattern.
pub fn parse_sexpr(text: &str) -> Result<SExpr, LogicalFormError> {
    SexprParser::new(&EntityPattern::default()).parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dialect_example_parses() {
        let e = parse_sexpr(
            "(AND language.language_dialect (JOIN (R language.human_language.dialects) m.097kp))",
        )
        .unwrap();
        assert_eq!(
            e,
            SExpr::and(
                SExpr::class("language.language_dialect"),
                SExpr::join(
                    Relation::reversed("language.human_language.dialects"),
                    SExpr::entity("m.097kp")
                )
            )
        );
    }

    #[test]
    fn bare_entity() {
        assert_eq!(parse_sexpr("m.097kp").unwrap(), SExpr::entity("m.097kp"));
    }

    #[test]
    fn count_of_join() {
        let e = parse_sexpr("(COUNT (JOIN location.country.languages_spoken m.097kp))").unwrap();
        assert_eq!(
            e,
            SExpr::count(SExpr::join(
                Relation::forward("location.country.languages_spoken"),
                SExpr::entity("m.097kp")
            ))
        );
    }

    #[test]
    fn grailqa_literal_spelling() {
        let e = parse_sexpr(
            "(lt aviation.airport.number_of_runways 3^^http://www.w3.org/2001/XMLSchema#integer)",
        )
        .unwrap();
        assert_eq!(
            e,
            SExpr::Compare(
                CompareOp::Lt,
                "aviation.airport.number_of_runways".into(),
                Literal::typed("3", "xsd:integer")
            )
        );
    }

    #[test]
    fn whitespace_normalized_on_display() {
        let text = "( AND  a.b\n (JOIN  c.d   m.0x ) )";
        let e = parse_sexpr(text).unwrap();
        assert_eq!(e.to_string(), "(AND a.b (JOIN c.d m.0x))");
    }

    #[test]
    fn tc_is_unsupported() {
        let err = parse_sexpr("(TC (JOIN a.b m.0x) c.d 2015)").unwrap_err();
        assert_eq!(err, LogicalFormError::UnsupportedConstruct("TC".into()));
    }

    #[test]
    fn nested_count_is_unsupported() {
        let err = parse_sexpr("(AND a.b (COUNT c.d))").unwrap_err();
        assert!(matches!(err, LogicalFormError::UnsupportedConstruct(_)));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_sexpr("(AND a.b (JOIN c.d m.0x)").unwrap_err() {
            LogicalFormError::Syntax { position, expected } => {
                assert_eq!(position, 24);
                assert_eq!(expected, "')'");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_sexpr("(FOO a.b)").unwrap_err(),
            LogicalFormError::Syntax { position: 1, .. }
        ));
        assert!(parse_sexpr("").is_err());
        assert!(parse_sexpr("(AND a.b c.d) extra.token").is_err());
    }

    #[test]
    fn literal_and_lang_round_trip() {
        for text in [
            "(JOIN a.b \"hello world\"@en)",
            "(JOIN a.b \"1961\"^^xsd:gYear)",
            "(ARGMAX c.d e.f)",
            "(ge x.y \"2.5\"^^xsd:double)",
        ] {
            let e = parse_sexpr(text).unwrap();
            assert_eq!(parse_sexpr(&e.to_string()).unwrap(), e, "{text}");
        }
    }
}
