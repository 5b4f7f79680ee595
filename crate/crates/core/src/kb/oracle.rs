//! Direct set-based evaluation of s-expressions. Shares nothing with the
//! SPARQL compiler or the binding executor, so agreement between the two
//! paths is meaningful.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::store::TripleStore;
use super::{AnswerSet, KbError};
use crate::logical_form::schema::DEFAULT_TYPE_RELATION;
use crate::logical_form::SExpr;
use crate::term::Node;

type Set = BTreeSet<Node>;

pub fn eval_sexpr(e: &SExpr, store: &TripleStore) -> Result<AnswerSet, KbError> {
    eval_sexpr_with(e, store, DEFAULT_TYPE_RELATION)
}

pub fn eval_sexpr_with(
    e: &SExpr,
    store: &TripleStore,
    type_relation: &str,
) -> Result<AnswerSet, KbError> {
    let ev = Eval {
        store,
        type_relation,
    };
    match e {
        SExpr::Count(s) => Ok(AnswerSet::Count(ev.set(s)?.len() as u64)),
        SExpr::ArgMax(s, r) => Ok(AnswerSet::Nodes(ev.extremum(s, r, Ordering::Greater)?)),
        SExpr::ArgMin(s, r) => Ok(AnswerSet::Nodes(ev.extremum(s, r, Ordering::Less)?)),
        other => Ok(AnswerSet::Nodes(ev.set(other)?)),
    }
}

struct Eval<'a> {
    store: &'a TripleStore,
    type_relation: &'a str,
}

impl Eval<'_> {
    fn set(&self, e: &SExpr) -> Result<Set, KbError> {
        Ok(match e {
            SExpr::Entity(id) => Set::from([Node::Iri(id.clone())]),
            SExpr::Literal(l) => Set::from([Node::Literal(l.clone())]),
            SExpr::Class(c) => self
                .store
                .matching(None, Some(self.type_relation), None)
                .filter(|t| t.object.as_iri() == Some(c.as_str()))
                .map(|t| t.subject.clone())
                .collect(),
            SExpr::And(a, b) => {
                let a = self.set(a)?;
                let b = self.set(b)?;
                a.intersection(&b).cloned().collect()
            }
            SExpr::Join(rel, s) => {
                let inner = self.set(s)?;
                self.store
                    .matching(None, Some(&rel.iri), None)
                    .filter_map(|t| {
                        let (from, to) = if rel.reverse {
                            (&t.object, &t.subject)
                        } else {
                            (&t.subject, &t.object)
                        };
                        inner.contains(to).then(|| from.clone())
                    })
                    .collect()
            }
            SExpr::Compare(op, r, lit) => self
                .store
                .matching(None, Some(r), None)
                .filter(|t| {
                    t.object
                        .as_literal()
                        .and_then(|v| v.compare(lit))
                        .is_some_and(|o| op.holds(o))
                })
                .map(|t| t.subject.clone())
                .collect(),
            SExpr::Count(_) | SExpr::ArgMax(..) | SExpr::ArgMin(..) => {
                return Err(KbError::Unsupported(format!("{e} is not set-valued")))
            }
        })
    }

    /// Members of `s` holding an `r` value that no other member's value
    /// beats in direction `better`. Ties are all kept.
    fn extremum(&self, s: &SExpr, r: &str, better: Ordering) -> Result<Set, KbError> {
        let members = self.set(s)?;
        let values: Vec<(&Node, &Node)> = self
            .store
            .matching(None, Some(r), None)
            .filter(|t| members.contains(&t.subject))
            .map(|t| (&t.subject, &t.object))
            .collect();
        let beats = |w: &Node, v: &Node| match (w, v) {
            (Node::Literal(w), Node::Literal(v)) => w.compare(v) == Some(better),
            _ => false,
        };
        Ok(values
            .iter()
            .filter(|(_, v)| !values.iter().any(|(_, w)| beats(w, v)))
            .map(|(a, _)| (*a).clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::store::parse_triples;
    use crate::logical_form::{parse_sexpr, Relation};

    fn store() -> TripleStore {
        parse_triples(
            "m.a p.r m.b .
m.c p.r m.b .
m.a type.object.type p.k .
m.x p.v 3 xsd:integer
m.y p.v 7 xsd:integer
m.z p.v 7 xsd:integer
",
        )
        .unwrap()
    }

    fn nodes(a: AnswerSet) -> Vec<String> {
        match a {
            AnswerSet::Nodes(n) => n.iter().map(Node::to_string).collect(),
            AnswerSet::Count(c) => vec![c.to_string()],
        }
    }

    #[test]
    fn entity_is_singleton() {
        assert_eq!(
            nodes(eval_sexpr(&SExpr::entity("m.097kp"), &store()).unwrap()),
            ["m.097kp"]
        );
    }

    #[test]
    fn and_is_idempotent() {
        let s = SExpr::join(Relation::forward("p.r"), SExpr::entity("m.b"));
        let once = eval_sexpr(&s, &store()).unwrap();
        assert_eq!(
            eval_sexpr(&SExpr::and(s.clone(), s), &store()).unwrap(),
            once
        );
        assert_eq!(nodes(once), ["m.a", "m.c"]);
    }

    #[test]
    fn reverse_flips() {
        let s = SExpr::join(Relation::reversed("p.r"), SExpr::entity("m.a"));
        assert_eq!(nodes(eval_sexpr(&s, &store()).unwrap()), ["m.b"]);
    }

    #[test]
    fn class_count_and_superlatives() {
        let st = store();
        assert_eq!(
            nodes(eval_sexpr(&SExpr::class("p.k"), &st).unwrap()),
            ["m.a"]
        );
        let e = parse_sexpr("(COUNT (JOIN p.r m.b))").unwrap();
        assert_eq!(eval_sexpr(&e, &st).unwrap(), AnswerSet::Count(2));
        let top = SExpr::ArgMax(
            Box::new(parse_sexpr("(ge p.v \"0\"^^xsd:integer)").unwrap()),
            "p.v".into(),
        );
        assert_eq!(nodes(eval_sexpr(&top, &st).unwrap()), ["m.y", "m.z"]);
        let bottom = SExpr::ArgMin(
            Box::new(parse_sexpr("(ge p.v \"0\"^^xsd:integer)").unwrap()),
            "p.v".into(),
        );
        assert_eq!(nodes(eval_sexpr(&bottom, &st).unwrap()), ["m.x"]);
    }

    #[test]
    fn nested_count_unsupported() {
        let e = SExpr::and(SExpr::count(SExpr::class("p.k")), SExpr::class("p.k"));
        assert!(matches!(
            eval_sexpr(&e, &store()),
            Err(KbError::Unsupported(_))
        ));
    }
}
