//! Binding-based SPARQL evaluation over a [`TripleStore`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use super::store::{Triple, TripleStore};
use super::AnswerSet;
use crate::logical_form::sparql::{
    Filter, FilterOp, GroupPattern, SparqlQuery, Term, TriplePattern,
};
use crate::term::Node;

type Binding = BTreeMap<String, Node>;

fn resolve(t: &Term, b: &Binding) -> Option<Node> {
    match t {
        Term::Var(v) => b.get(v).cloned(),
        other => other.to_node(),
    }
}

fn bound_count(p: &TriplePattern, b: &Binding) -> usize {
    p.terms().iter().filter(|t| resolve(t, b).is_some()).count()
}

/// Binds `term` to `value`; false on conflict.
fn unify(term: &Term, value: &Node, b: &mut Binding, added: &mut Vec<String>) -> bool {
    match term {
        Term::Var(v) => match b.get(v) {
            Some(existing) => existing == value,
            None => {
                b.insert(v.clone(), value.clone());
                added.push(v.clone());
                true
            }
        },
        other => other.to_node().as_ref() == Some(value),
    }
}

fn filter_holds(f: &Filter, b: &Binding) -> bool {
    let (Some(left), Some(right)) = (b.get(&f.var), resolve(&f.value, b)) else {
        return false;
    };
    let ord = match (&left, &right) {
        (Node::Literal(a), Node::Literal(c)) => a.compare(c),
        _ => None,
    };
    match f.op {
        FilterOp::Eq => ord.map_or(*left == right, |o| o == Ordering::Equal),
        FilterOp::Ne => ord.map_or(*left != right, |o| o != Ordering::Equal),
        op => ord.is_some_and(|o| match op {
            FilterOp::Lt => o == Ordering::Less,
            FilterOp::Le => o != Ordering::Greater,
            FilterOp::Gt => o == Ordering::Greater,
            FilterOp::Ge => o != Ordering::Less,
            FilterOp::Eq | FilterOp::Ne => unreachable!(),
        }),
    }
}

struct Solver<'s> {
    store: &'s TripleStore,
}

impl Solver<'_> {
    /// Calls `emit` for each solution of `g` extending `b`; stops early when
    /// `emit` returns true. Returns whether it stopped early.
    fn solve(
        &self,
        g: &GroupPattern,
        b: &mut Binding,
        emit: &mut dyn FnMut(&Binding) -> bool,
    ) -> bool {
        let mut used = vec![false; g.triples.len()];
        self.search(g, &mut used, b, emit)
    }

    fn search(
        &self,
        g: &GroupPattern,
        used: &mut [bool],
        b: &mut Binding,
        emit: &mut dyn FnMut(&Binding) -> bool,
    ) -> bool {
        let next = (0..g.triples.len())
            .filter(|&i| !used[i])
            .max_by_key(|&i| (bound_count(&g.triples[i], b), std::cmp::Reverse(i)));
        let Some(i) = next else {
            if g.filters.iter().all(|f| filter_holds(f, b))
                && g.not_exists.iter().all(|ne| !self.exists(ne, b))
            {
                return emit(b);
            }
            return false;
        };
        let pat = &g.triples[i];
        let s = resolve(&pat.subject, b);
        let p = resolve(&pat.predicate, b);
        let o = resolve(&pat.object, b);
        let p_iri = match &p {
            Some(Node::Iri(x)) => Some(x.as_str()),
            Some(Node::Literal(_)) => return false,
            None => None,
        };
        let candidates: Vec<&Triple> = self.store.matching(s.as_ref(), p_iri, o.as_ref()).collect();
        used[i] = true;
        for t in candidates {
            let mut added = Vec::new();
            let ok = unify(&pat.subject, &t.subject, b, &mut added)
                && unify(
                    &pat.predicate,
                    &Node::Iri(t.predicate.clone()),
                    b,
                    &mut added,
                )
                && unify(&pat.object, &t.object, b, &mut added);
            let stop = ok && self.search(g, used, b, emit);
            for v in added {
                b.remove(&v);
            }
            if stop {
                used[i] = false;
                return true;
            }
        }
        used[i] = false;
        false
    }

    fn exists(&self, g: &GroupPattern, b: &Binding) -> bool {
        let mut local = b.clone();
        self.solve(g, &mut local, &mut |_| true)
    }
}

/// Total order for ORDER BY: comparable literals by value, otherwise
/// unbound < IRIs < literals, then by lexical form.
fn order_key_cmp(a: Option<&Node>, b: Option<&Node>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(Node::Literal(x)), Some(Node::Literal(y))) => {
            x.compare(y).unwrap_or_else(|| x.cmp(y))
        }
        (Some(x), Some(y)) => x.cmp(y),
    }
}

pub fn execute_in_memory(q: &SparqlQuery, store: &TripleStore) -> AnswerSet {
    let solver = Solver { store };
    let mut rows: Vec<Binding> = Vec::new();
    solver.solve(&q.pattern, &mut Binding::new(), &mut |b| {
        rows.push(b.clone());
        false
    });

    if let Some(c) = &q.count {
        let n = if c.distinct {
            rows.iter()
                .filter_map(|r| r.get(&q.answer_var))
                .collect::<BTreeSet<_>>()
                .len()
        } else {
            rows.iter()
                .filter(|r| r.contains_key(&q.answer_var))
                .count()
        };
        return AnswerSet::Count(n as u64);
    }

    if let Some(o) = &q.order {
        rows.sort_by(|a, b| {
            let c = order_key_cmp(a.get(&o.var), b.get(&o.var));
            if o.descending {
                c.reverse()
            } else {
                c
            }
        });
    }
    let mut values: Vec<Node> = rows
        .into_iter()
        .filter_map(|mut r| r.remove(&q.answer_var))
        .collect();
    if q.distinct {
        let mut seen = BTreeSet::new();
        values.retain(|v| seen.insert(v.clone()));
    }
    let offset = q.offset.unwrap_or(0) as usize;
    let limit = q.limit.map_or(usize::MAX, |l| l as usize);
    AnswerSet::Nodes(values.into_iter().skip(offset).take(limit).collect())
}
