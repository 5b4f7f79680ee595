//! S-expression to SPARQL compilation.
//!
//! The answer variable is always `?x`; intermediate variables are `?y0`,
//! `?y1`, ... allocated in left-to-right tree order. Class conjuncts become
//! type-check triples placed after their sibling's pattern. Superlatives
//! are compiled to a `FILTER NOT EXISTS` against a strictly better value so
//! that ties keep every extremal binding.

use super::schema::DEFAULT_TYPE_RELATION;
use super::sexpr::{Relation, SExpr};
use super::sparql::{
    CountAggregate, Filter, FilterOp, GroupPattern, SparqlQuery, Term, TriplePattern,
};
use super::LogicalFormError;

pub const ANSWER_VAR: &str = "x";

pub struct Compiler<'a> {
    type_relation: &'a str,
}

impl Default for Compiler<'static> {
    fn default() -> Self {
        Compiler {
            type_relation: DEFAULT_TYPE_RELATION,
        }
    }
}

struct Vars(usize);

impl Vars {
    fn fresh(&mut self) -> String {
        let v = format!("y{}", self.0);
        self.0 += 1;
        v
    }
}

fn constant(e: &SExpr) -> Option<Term> {
    match e {
        SExpr::Entity(id) => Some(Term::Iri(id.clone())),
        SExpr::Literal(l) => Some(Term::Literal(l.clone())),
        _ => None,
    }
}

impl<'a> Compiler<'a> {
    pub fn new(type_relation: &'a str) -> Self {
        Compiler { type_relation }
    }

    pub fn compile(&self, expr: &SExpr) -> Result<SparqlQuery, LogicalFormError> {
        let mut vars = Vars(0);
        let mut pattern = GroupPattern::default();
        let x = ANSWER_VAR.to_string();
        let mut query = match expr {
            SExpr::Count(s) => {
                self.root_set(s, &x, &mut pattern, &mut vars)?;
                let mut q = SparqlQuery::select_distinct(ANSWER_VAR, GroupPattern::default());
                q.distinct = false;
                q.count = Some(CountAggregate {
                    distinct: true,
                    alias: "count".into(),
                });
                q
            }
            SExpr::ArgMax(s, r) | SExpr::ArgMin(s, r) => {
                let op = if matches!(expr, SExpr::ArgMax(..)) {
                    FilterOp::Gt
                } else {
                    FilterOp::Lt
                };
                self.root_set(s, &x, &mut pattern, &mut vars)?;
                let value = vars.fresh();
                pattern.triples.push(TriplePattern::new(
                    Term::var(&x),
                    Term::iri(r),
                    Term::var(&value),
                ));
                let mut better = GroupPattern::default();
                let rival = vars.fresh();
                self.set(s, &rival, &mut better, &mut vars)?;
                let rival_value = vars.fresh();
                better.triples.push(TriplePattern::new(
                    Term::var(&rival),
                    Term::iri(r),
                    Term::var(&rival_value),
                ));
                better.filters.push(Filter {
                    var: rival_value,
                    op,
                    value: Term::var(value),
                });
                pattern.not_exists.push(better);
                SparqlQuery::select_distinct(ANSWER_VAR, GroupPattern::default())
            }
            _ => {
                self.root_set(expr, &x, &mut pattern, &mut vars)?;
                SparqlQuery::select_distinct(ANSWER_VAR, GroupPattern::default())
            }
        };
        query.pattern = pattern;
        query
            .validate()
            .map_err(|e| LogicalFormError::Compile(format!("malformed tree: {e}")))?;
        Ok(query)
    }

    fn root_set(
        &self,
        e: &SExpr,
        var: &str,
        g: &mut GroupPattern,
        vars: &mut Vars,
    ) -> Result<(), LogicalFormError> {
        if constant(e).is_some() {
            return Err(LogicalFormError::Compile(format!(
                "{e} has no answer variable"
            )));
        }
        self.set(e, var, g, vars)
    }

    fn set(
        &self,
        e: &SExpr,
        var: &str,
        g: &mut GroupPattern,
        vars: &mut Vars,
    ) -> Result<(), LogicalFormError> {
        match e {
            SExpr::Entity(_) | SExpr::Literal(_) => Err(LogicalFormError::Compile(format!(
                "constant {e} cannot bind ?{var}"
            ))),
            SExpr::Class(c) => {
                g.triples.push(TriplePattern::new(
                    Term::var(var),
                    Term::iri(self.type_relation),
                    Term::iri(c),
                ));
                Ok(())
            }
            SExpr::And(a, b) => match (constant(a), constant(b)) {
                (Some(_), Some(_)) => Err(LogicalFormError::Compile(format!(
                    "AND of two constants in {e}"
                ))),
                (Some(c), None) => {
                    self.set(b, var, g, vars)?;
                    g.filters.push(Filter {
                        var: var.to_string(),
                        op: FilterOp::Eq,
                        value: c,
                    });
                    Ok(())
                }
                (None, Some(c)) => {
                    self.set(a, var, g, vars)?;
                    g.filters.push(Filter {
                        var: var.to_string(),
                        op: FilterOp::Eq,
                        value: c,
                    });
                    Ok(())
                }
                (None, None) => {
                    if matches!(**a, SExpr::Class(_)) && !matches!(**b, SExpr::Class(_)) {
                        self.set(b, var, g, vars)?;
                        self.set(a, var, g, vars)
                    } else {
                        self.set(a, var, g, vars)?;
                        self.set(b, var, g, vars)
                    }
                }
            },
            SExpr::Join(rel, s) => {
                let (inner, child_var) = match constant(s) {
                    Some(c) => (c, None),
                    None => {
                        let y = vars.fresh();
                        (Term::var(&y), Some(y))
                    }
                };
                g.triples.push(self.edge(rel, Term::var(var), inner));
                if let Some(y) = child_var {
                    self.set(s, &y, g, vars)?;
                }
                Ok(())
            }
            SExpr::Compare(op, r, lit) => {
                let y = vars.fresh();
                g.triples.push(TriplePattern::new(
                    Term::var(var),
                    Term::iri(r),
                    Term::var(&y),
                ));
                g.filters.push(Filter {
                    var: y,
                    op: (*op).into(),
                    value: Term::Literal(lit.clone()),
                });
                Ok(())
            }
            SExpr::Count(_) | SExpr::ArgMax(..) | SExpr::ArgMin(..) => Err(
                LogicalFormError::UnsupportedConstruct(format!("nested {}", head(e))),
            ),
        }
    }

    /// `(JOIN r S)` at `?v` is `?v r s`; reversed, `s r ?v`.
    fn edge(&self, rel: &Relation, here: Term, other: Term) -> TriplePattern {
        let pred = Term::iri(&rel.iri);
        if rel.reverse {
            TriplePattern::new(other, pred, here)
        } else {
            TriplePattern::new(here, pred, other)
        }
    }
}

fn head(e: &SExpr) -> &'static str {
    match e {
        SExpr::Count(_) => "COUNT",
        SExpr::ArgMax(..) => "ARGMAX",
        SExpr::ArgMin(..) => "ARGMIN",
        _ => "expression",
    }
}

/// Compiles with the default type-check relation.
pub fn sexpr_to_sparql(expr: &SExpr) -> Result<SparqlQuery, LogicalFormError> {
    Compiler::default().compile(expr)
}
