//! KB-element bags extracted from SPARQL for logical-form comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::schema::Schema;
use super::sparql::{FilterOp, GroupPattern, SparqlQuery, Term};
use super::LogicalFormError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FunctionTag {
    Count,
    ArgMax,
    ArgMin,
    Lt,
    Le,
    Gt,
    Ge,
}

impl fmt::Display for FunctionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionTag::Count => "COUNT",
            FunctionTag::ArgMax => "ARGMAX",
            FunctionTag::ArgMin => "ARGMIN",
            FunctionTag::Lt => "LT",
            FunctionTag::Le => "LE",
            FunctionTag::Gt => "GT",
            FunctionTag::Ge => "GE",
        })
    }
}

pub type Multiset<T> = BTreeMap<T, usize>;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementBag {
    pub classes: Multiset<String>,
    pub relations: Multiset<String>,
    pub entities: Multiset<String>,
    pub literals: Multiset<String>,
    pub functions: Multiset<FunctionTag>,
}

fn bump<T: Ord>(m: &mut Multiset<T>, k: T) {
    *m.entry(k).or_insert(0) += 1;
}

impl ElementBag {
    pub fn total(&self) -> usize {
        self.classes.values().sum::<usize>()
            + self.relations.values().sum::<usize>()
            + self.entities.values().sum::<usize>()
            + self.literals.values().sum::<usize>()
            + self.functions.values().sum::<usize>()
    }

    /// Distinct elements of every category except literals, tagged by
    /// category.
    pub fn set_without_literals(&self) -> BTreeSet<(u8, String)> {
        let mut out = BTreeSet::new();
        out.extend(self.classes.keys().map(|k| (0, k.clone())));
        out.extend(self.relations.keys().map(|k| (1, k.clone())));
        out.extend(self.entities.keys().map(|k| (2, k.clone())));
        out.extend(self.functions.keys().map(|k| (3, k.to_string())));
        out
    }

    /// Distinct schema elements (classes and relations).
    pub fn schema_elements(&self) -> BTreeSet<String> {
        self.classes
            .keys()
            .chain(self.relations.keys())
            .cloned()
            .collect()
    }
}

struct Extractor<'s> {
    schema: &'s Schema,
    bag: ElementBag,
}

#[derive(Clone, Copy, PartialEq)]
enum Position {
    Node,
    Predicate,
    TypeObject,
}

impl Extractor<'_> {
    fn iri(&mut self, iri: &str, pos: Position) -> Result<(), LogicalFormError> {
        let s = self.schema;
        if pos == Position::TypeObject || s.is_class(iri) {
            bump(&mut self.bag.classes, iri.to_string());
        } else if s.is_relation(iri) {
            bump(&mut self.bag.relations, iri.to_string());
        } else if s.is_entity(iri) {
            bump(&mut self.bag.entities, iri.to_string());
        } else if s.is_open() {
            match pos {
                Position::Predicate => bump(&mut self.bag.relations, iri.to_string()),
                _ => bump(&mut self.bag.classes, iri.to_string()),
            }
        } else {
            return Err(LogicalFormError::UnknownIri(iri.to_string()));
        }
        Ok(())
    }

    fn term(&mut self, t: &Term, pos: Position) -> Result<(), LogicalFormError> {
        match t {
            Term::Var(_) => Ok(()),
            Term::Iri(i) => self.iri(i, pos),
            Term::Literal(l) => {
                bump(&mut self.bag.literals, l.to_string());
                Ok(())
            }
        }
    }

    fn group(&mut self, g: &GroupPattern) -> Result<(), LogicalFormError> {
        let type_rel = self.schema.type_relation();
        for t in &g.triples {
            self.term(&t.subject, Position::Node)?;
            match &t.predicate {
                Term::Iri(p) if p == type_rel => self.term(&t.object, Position::TypeObject)?,
                p => {
                    self.term(p, Position::Predicate)?;
                    self.term(&t.object, Position::Node)?;
                }
            }
        }
        for f in &g.filters {
            let tag = match f.op {
                FilterOp::Lt => Some(FunctionTag::Lt),
                FilterOp::Le => Some(FunctionTag::Le),
                FilterOp::Gt => Some(FunctionTag::Gt),
                FilterOp::Ge => Some(FunctionTag::Ge),
                FilterOp::Eq | FilterOp::Ne => None,
            };
            if let Some(tag) = tag {
                bump(&mut self.bag.functions, tag);
            }
            self.term(&f.value, Position::Node)?;
        }
        for ne in &g.not_exists {
            match superlative(ne) {
                Some(tag) => bump(&mut self.bag.functions, tag),
                None => self.group(ne)?,
            }
        }
        Ok(())
    }
}

/// A `NOT EXISTS` group comparing two variables is the superlative rewrite;
/// its triples restate the outer pattern and are not counted again.
fn superlative(g: &GroupPattern) -> Option<FunctionTag> {
    g.filters.iter().find_map(|f| match (&f.value, f.op) {
        (Term::Var(_), FilterOp::Gt | FilterOp::Ge) => Some(FunctionTag::ArgMax),
        (Term::Var(_), FilterOp::Lt | FilterOp::Le) => Some(FunctionTag::ArgMin),
        _ => None,
    })
}

/// Classifies every IRI, literal and function construct of `q`.
///
/// Relations are recorded without direction. Objects of the type-check
/// relation are classes and the type-check relation itself is not
/// recorded. With a closed schema, an IRI found in neither table that is
/// not an entity id yields [`LogicalFormError::UnknownIri`].
pub fn extract_elements(q: &SparqlQuery, schema: &Schema) -> Result<ElementBag, LogicalFormError> {
    let mut ex = Extractor {
        schema,
        bag: ElementBag::default(),
    };
    ex.group(&q.pattern)?;
    if q.count.is_some() {
        bump(&mut ex.bag.functions, FunctionTag::Count);
    }
    if let (Some(o), Some(_)) = (&q.order, q.limit) {
        bump(
            &mut ex.bag.functions,
            if o.descending {
                FunctionTag::ArgMax
            } else {
                FunctionTag::ArgMin
            },
        );
    }
    Ok(ex.bag)
}
