#![allow(dead_code)]

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kbqa_core::generate::{Exemplar, QuestionContext};
use kbqa_core::kb::{Triple, TripleStore};
use kbqa_core::logical_form::sparql::{GroupPattern, Term};
use kbqa_core::logical_form::{CompareOp, Relation, SExpr};
use kbqa_core::logical_form::{EntityPattern, Schema, SparqlQuery};
use kbqa_core::retrieval::{DataPath, LinkedEntity, RetrievalResult};
use kbqa_core::{Literal, Node};

pub const TYPE: &str = "type.object.type";

pub const CLASSES: &[&str] = &[
    "toy.person",
    "toy.athlete",
    "toy.city",
    "toy.country",
    "toy.team",
];
/// Relations between entities.
pub const RELATIONS: &[&str] = &[
    "toy.person.born_in",
    "toy.person.lives_in",
    "toy.person.plays_for",
    "toy.person.friend",
    "toy.person.nationality",
    "toy.city.located_in",
    "toy.team.based_in",
    "toy.team.rival",
    "toy.country.capital",
];
/// Relations whose objects are literals.
pub const VALUE_RELATIONS: &[&str] = &["toy.person.age", "toy.city.population", "toy.team.founded"];

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("m.{prefix}{i}")).collect()
}

pub fn persons() -> Vec<String> {
    ids("p", 20)
}
pub fn cities() -> Vec<String> {
    ids("c", 8)
}
pub fn countries() -> Vec<String> {
    ids("n", 3)
}
pub fn teams() -> Vec<String> {
    ids("t", 6)
}

pub fn all_entities() -> Vec<String> {
    [persons(), cities(), countries(), teams()].concat()
}

pub fn year(y: i64) -> Literal {
    Literal::typed(y.to_string(), "xsd:gYear")
}

fn value_literal(rel: &str, v: i64) -> Literal {
    match rel {
        "toy.team.founded" => year(v),
        _ => Literal::integer(v),
    }
}

fn value_range(rel: &str) -> (i64, i64) {
    match rel {
        "toy.person.age" => (20, 30),
        "toy.city.population" => (100, 110),
        _ => (1950, 1960),
    }
}

/// A seeded toy knowledge base of about 200 facts: people, cities,
/// countries and teams, with integer ages and populations and gYear
/// founding dates. Value ranges are narrow so ties occur.
pub fn toy_store() -> TripleStore {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut s = TripleStore::new();
    let add = |s: &mut TripleStore, a: &str, p: &str, o: Node| {
        s.insert(Triple::new(a, p, o));
    };
    let (ps, cs, ns, ts) = (persons(), cities(), countries(), teams());
    for p in &ps {
        add(&mut s, p, TYPE, Node::iri("toy.person"));
    }
    for c in &cs {
        add(&mut s, c, TYPE, Node::iri("toy.city"));
    }
    for n in &ns {
        add(&mut s, n, TYPE, Node::iri("toy.country"));
    }
    for t in &ts {
        add(&mut s, t, TYPE, Node::iri("toy.team"));
    }
    for p in &ps {
        add(
            &mut s,
            p,
            "toy.person.born_in",
            Node::iri(cs.choose(&mut rng).unwrap()),
        );
        add(
            &mut s,
            p,
            "toy.person.lives_in",
            Node::iri(cs.choose(&mut rng).unwrap()),
        );
        add(
            &mut s,
            p,
            "toy.person.nationality",
            Node::iri(ns.choose(&mut rng).unwrap()),
        );
        let (lo, hi) = value_range("toy.person.age");
        add(
            &mut s,
            p,
            "toy.person.age",
            Node::Literal(Literal::integer(rng.gen_range(lo..=hi))),
        );
        if rng.gen_bool(0.6) {
            add(&mut s, p, TYPE, Node::iri("toy.athlete"));
            add(
                &mut s,
                p,
                "toy.person.plays_for",
                Node::iri(ts.choose(&mut rng).unwrap()),
            );
        }
        for _ in 0..rng.gen_range(0..=3) {
            add(
                &mut s,
                p,
                "toy.person.friend",
                Node::iri(ps.choose(&mut rng).unwrap()),
            );
        }
    }
    for c in &cs {
        add(
            &mut s,
            c,
            "toy.city.located_in",
            Node::iri(ns.choose(&mut rng).unwrap()),
        );
        let (lo, hi) = value_range("toy.city.population");
        add(
            &mut s,
            c,
            "toy.city.population",
            Node::Literal(Literal::integer(rng.gen_range(lo..=hi))),
        );
    }
    for (i, n) in ns.iter().enumerate() {
        add(&mut s, n, "toy.country.capital", Node::iri(&cs[i]));
    }
    for t in &ts {
        add(
            &mut s,
            t,
            "toy.team.based_in",
            Node::iri(cs.choose(&mut rng).unwrap()),
        );
        add(
            &mut s,
            t,
            "toy.team.rival",
            Node::iri(ts.choose(&mut rng).unwrap()),
        );
        let (lo, hi) = value_range("toy.team.founded");
        add(
            &mut s,
            t,
            "toy.team.founded",
            Node::Literal(year(rng.gen_range(lo..=hi))),
        );
    }
    s
}

fn pick(xs: Vec<String>) -> BoxedStrategy<String> {
    proptest::sample::select(xs).boxed()
}

pub fn arb_entity() -> BoxedStrategy<String> {
    pick(all_entities())
}

pub fn arb_class() -> BoxedStrategy<SExpr> {
    pick(CLASSES.iter().map(|s| s.to_string()).collect())
        .prop_map(SExpr::Class)
        .boxed()
}

pub fn arb_relation() -> BoxedStrategy<Relation> {
    (
        pick(RELATIONS.iter().map(|s| s.to_string()).collect()),
        any::<bool>(),
    )
        .prop_map(|(r, rev)| {
            if rev {
                Relation::reversed(r)
            } else {
                Relation::forward(r)
            }
        })
        .boxed()
}

pub fn arb_value_relation() -> BoxedStrategy<String> {
    pick(VALUE_RELATIONS.iter().map(|s| s.to_string()).collect())
}

/// A value relation with a literal from (slightly beyond) its range.
pub fn arb_value() -> BoxedStrategy<(String, Literal)> {
    arb_value_relation()
        .prop_flat_map(|r| {
            let (lo, hi) = value_range(&r);
            (Just(r.clone()), (lo - 1)..=(hi + 1)).prop_map(|(r, v)| {
                let lit = value_literal(&r, v);
                (r, lit)
            })
        })
        .boxed()
}

pub fn arb_compare_op() -> BoxedStrategy<CompareOp> {
    prop_oneof![
        Just(CompareOp::Lt),
        Just(CompareOp::Le),
        Just(CompareOp::Gt),
        Just(CompareOp::Ge)
    ]
    .boxed()
}

/// Set-valued expressions of depth at most `d`.
pub fn arb_set(d: usize) -> BoxedStrategy<SExpr> {
    let compare = (arb_compare_op(), arb_value())
        .prop_map(|(op, (r, lit))| SExpr::Compare(op, r, lit))
        .boxed();
    let leaf = prop_oneof![arb_class(), compare].boxed();
    if d <= 1 {
        return leaf;
    }
    let sub = arb_set(d - 1);
    prop_oneof![
        2 => leaf,
        3 => (arb_relation(), arb_entity()).prop_map(|(r, e)| SExpr::join(r, SExpr::Entity(e))),
        1 => arb_value().prop_map(|(r, lit)| SExpr::join(Relation::forward(r), SExpr::Literal(lit))),
        3 => (arb_relation(), sub.clone()).prop_map(|(r, s)| SExpr::join(r, s)),
        3 => (sub.clone(), sub.clone()).prop_map(|(a, b)| SExpr::and(a, b)),
        1 => (arb_entity(), sub).prop_map(|(e, s)| SExpr::and(SExpr::Entity(e), s)),
    ]
    .boxed()
}

/// Whole logical forms of depth at most 4: a set, or a count or
/// superlative over one.
pub fn arb_sexpr() -> BoxedStrategy<SExpr> {
    prop_oneof![
        4 => arb_set(4),
        1 => arb_set(3).prop_map(SExpr::count),
        1 => (arb_set(3), arb_value_relation()).prop_map(|(s, r)| SExpr::ArgMax(Box::new(s), r)),
        1 => (arb_set(3), arb_value_relation()).prop_map(|(s, r)| SExpr::ArgMin(Box::new(s), r)),
    ]
    .boxed()
}

/// Closed schema over the toy vocabulary.
pub fn toy_schema() -> Schema {
    Schema::new(
        CLASSES.iter().map(|s| s.to_string()),
        RELATIONS
            .iter()
            .chain(VALUE_RELATIONS)
            .map(|s| s.to_string()),
        EntityPattern::default(),
        TYPE,
    )
    .unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    PermuteTriples,
    RenameVariables,
    SubstituteRelation,
    SubstituteClass,
    SubstituteEntity,
    ChangeLiteral,
}

pub const MUTATIONS: [Mutation; 6] = [
    Mutation::PermuteTriples,
    Mutation::RenameVariables,
    Mutation::SubstituteRelation,
    Mutation::SubstituteClass,
    Mutation::SubstituteEntity,
    Mutation::ChangeLiteral,
];

fn terms_mut(g: &mut GroupPattern) -> Vec<&mut Term> {
    let mut out = Vec::new();
    for t in &mut g.triples {
        out.push(&mut t.subject);
        out.push(&mut t.predicate);
        out.push(&mut t.object);
    }
    for f in &mut g.filters {
        out.push(&mut f.value);
    }
    for ne in &mut g.not_exists {
        out.extend(terms_mut(ne));
    }
    out
}

fn rename(g: &mut GroupPattern, keep: &str) {
    for t in terms_mut(g) {
        if let Term::Var(v) = t {
            if v != keep {
                *v = format!("renamed_{v}");
            }
        }
    }
    for f in &mut g.filters {
        if f.var != keep {
            f.var = format!("renamed_{}", f.var);
        }
    }
    for ne in &mut g.not_exists {
        rename(ne, keep);
    }
}

fn swap_one(
    q: &mut SparqlQuery,
    rng: &mut ChaCha8Rng,
    is_target: impl Fn(&Term) -> bool,
    pool: &[String],
) -> bool {
    let mut targets: Vec<&mut Term> = terms_mut(&mut q.pattern)
        .into_iter()
        .filter(|t| is_target(t))
        .collect();
    if targets.is_empty() {
        return false;
    }
    let i = rng.gen_range(0..targets.len());
    let t = &mut targets[i];
    let Term::Iri(old) = &**t else { return false };
    let choices: Vec<&String> = pool.iter().filter(|p| *p != old).collect();
    **t = Term::Iri(choices.choose(rng).unwrap().to_string());
    true
}

/// Applies one mutation; `None` when the query has nothing to mutate.
pub fn mutate(q: &SparqlQuery, m: Mutation, rng: &mut ChaCha8Rng) -> Option<SparqlQuery> {
    let mut q = q.clone();
    let all_rel: Vec<String> = RELATIONS
        .iter()
        .chain(VALUE_RELATIONS)
        .map(|s| s.to_string())
        .collect();
    let classes: Vec<String> = CLASSES.iter().map(|s| s.to_string()).collect();
    let ok = match m {
        Mutation::PermuteTriples => {
            q.pattern.triples.shuffle(rng);
            q.pattern.filters.shuffle(rng);
            true
        }
        Mutation::RenameVariables => {
            let keep = q.answer_var.clone();
            rename(&mut q.pattern, &keep);
            true
        }
        Mutation::SubstituteRelation => {
            let rel_pos: Vec<usize> = q
                .pattern
                .triples
                .iter()
                .enumerate()
                .filter(|(_, t)| matches!(&t.predicate, Term::Iri(p) if p != TYPE))
                .map(|(i, _)| i)
                .collect();
            match rel_pos.choose(rng) {
                None => false,
                Some(&i) => {
                    let Term::Iri(old) = q.pattern.triples[i].predicate.clone() else {
                        unreachable!()
                    };
                    let choices: Vec<&String> = all_rel.iter().filter(|r| **r != old).collect();
                    q.pattern.triples[i].predicate =
                        Term::Iri(choices.choose(rng).unwrap().to_string());
                    true
                }
            }
        }
        Mutation::SubstituteClass => {
            let class_pos: Vec<usize> = q
                .pattern
                .triples
                .iter()
                .enumerate()
                .filter(|(_, t)| matches!(&t.predicate, Term::Iri(p) if p == TYPE))
                .map(|(i, _)| i)
                .collect();
            match class_pos.choose(rng) {
                None => false,
                Some(&i) => {
                    let Term::Iri(old) = q.pattern.triples[i].object.clone() else {
                        return None;
                    };
                    let choices: Vec<&String> = classes.iter().filter(|c| **c != old).collect();
                    q.pattern.triples[i].object =
                        Term::Iri(choices.choose(rng).unwrap().to_string());
                    true
                }
            }
        }
        Mutation::SubstituteEntity => swap_one(
            &mut q,
            rng,
            |t| matches!(t, Term::Iri(s) if s.starts_with("m.")),
            &all_entities(),
        ),
        Mutation::ChangeLiteral => {
            let mut lits: Vec<&mut Term> = terms_mut(&mut q.pattern)
                .into_iter()
                .filter(|t| matches!(t, Term::Literal(_)))
                .collect();
            if lits.is_empty() {
                false
            } else {
                let i = rng.gen_range(0..lits.len());
                if let Term::Literal(l) = &mut *lits[i] {
                    let v: i64 = l.lexical.parse().unwrap_or(0);
                    l.lexical = (v + rng.gen_range(1..=3)).to_string();
                }
                true
            }
        }
    };
    ok.then_some(q)
}

/// A golden file with its final newline removed.
pub fn golden(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.strip_suffix('\n').unwrap_or(&text).to_string()
}

pub fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn entity(label: &str, mid: &str) -> LinkedEntity {
    LinkedEntity {
        mention: label.into(),
        mid: mid.into(),
        label: label.into(),
    }
}

pub const INDONESIA_Q: &str = "what the language spoken in indonesia?";

pub fn retrieval(
    id: &str,
    qid: &str,
    paths: &[&str],
    relations: &[&str],
    classes: &[&str],
) -> RetrievalResult {
    RetrievalResult {
        retriever: id.into(),
        qid: qid.into(),
        paths: Some(paths.iter().map(|p| DataPath::new(*p)).collect()),
        relations: Some(strings(relations)),
        classes: Some(strings(classes)),
    }
}

/// The worked example from the prompt appendix: texas rangers as the
/// exemplar, indonesia as the test question.
pub fn texas_rangers_exemplar() -> Exemplar {
    Exemplar {
        context: QuestionContext {
            question: "when were the texas rangers started".into(),
            entities: vec![entity("texas rangers", "m.07l8x")],
            retrievals: vec![retrieval(
                "r",
                "tr",
                &["SELECT DISTINCT ?x WHERE { ns:m.07l8x ns:sports.sports_team.founded ?x . ?x ns:type.object.type ns:type.datetime . }"],
                &["sports.sports_team.founded", "military.military_unit.formed"],
                &["media_common.finished_work", "transportation.road_starting_point"],
            )],
        },
        gold_sparql: "SELECT DISTINCT ?x WHERE { ns:m.07l8x ns:sports.sports_team.founded ?x . }".into(),
    }
}

pub fn indonesia_context() -> QuestionContext {
    QuestionContext {
        question: INDONESIA_Q.into(),
        entities: vec![entity("indonesia", "m.097kp")],
        retrievals: vec![retrieval(
            "r",
            "id",
            &["(AND language.language_dialect (JOIN (R language.human_language.dialects) m.097kp))"],
            &["lang.human_language.countries_spoken_in", "location.country.languages_spoken"],
            &["language.human_language", "language.language_dialect"],
        )],
    }
}

pub fn toy_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

/// The toy run config with its outputs under `out`.
pub fn toy_config(out: &std::path::Path) -> kbqa_core::pipeline::RunConfig {
    let mut cfg = kbqa_core::pipeline::RunConfig::load(&toy_dir().join("config.toml")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

pub fn numbered_exemplar(i: usize, retrievers: usize) -> Exemplar {
    let mut e = texas_rangers_exemplar();
    e.context.question = format!("exemplar question {i}");
    e.context.retrievals = (0..retrievers)
        .map(|r| wide_retrieval(&format!("r{r}")))
        .collect();
    e
}

/// Twenty paths, fifty relations and fifty classes, all distinct.
pub fn wide_retrieval(id: &str) -> RetrievalResult {
    let paths: Vec<String> = (0..20)
        .map(|i| format!("SELECT DISTINCT ?x WHERE {{ ns:m.0{i} ns:{id}.path.rel{i} ?x . }}"))
        .collect();
    let rels: Vec<String> = (0..50).map(|i| format!("{id}.rel.r{i}")).collect();
    let classes: Vec<String> = (0..50).map(|i| format!("{id}.class.c{i}")).collect();
    let p: Vec<&str> = paths.iter().map(String::as_str).collect();
    let r: Vec<&str> = rels.iter().map(String::as_str).collect();
    let c: Vec<&str> = classes.iter().map(String::as_str).collect();
    retrieval(id, "q", &p, &r, &c)
}

pub fn test_context(retrievers: usize) -> QuestionContext {
    QuestionContext {
        question: "the test question".into(),
        entities: vec![entity("indonesia", "m.097kp")],
        retrievals: (0..retrievers)
            .map(|r| wide_retrieval(&format!("r{r}")))
            .collect(),
    }
}

/// Splits a rendered prompt into question blocks and counts, per block,
/// the items of every section with the given label.
pub fn section_sizes(prompt: &str, label: &str) -> Vec<Vec<usize>> {
    prompt
        .split("question: ")
        .skip(1)
        .map(|block| {
            block
                .split("\n\n")
                .filter(|part| part.starts_with(label))
                .map(|part| {
                    part.lines()
                        .skip(1)
                        .collect::<Vec<_>>()
                        .join("\n")
                        .split("|\n")
                        .count()
                })
                .collect()
        })
        .collect()
}
