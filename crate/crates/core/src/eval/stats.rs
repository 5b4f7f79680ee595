use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::divergence::{js_divergence_maps, normalize_counts};
use super::EvalError;
use crate::dataset::Question;
use crate::logical_form::{extract_elements, ElementBag, Schema};

/// Bucket for questions without a domain or without function tags.
pub const NONE_BUCKET: &str = "NONE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub source_questions: usize,
    pub target_questions: usize,
    pub domain_jsd: f64,
    pub function_jsd: f64,
    pub unseen_relation_pct: f64,
    pub relations_per_lf_source: f64,
    pub relations_per_lf_target: f64,
    pub tokens_per_question_source: f64,
    pub tokens_per_question_target: f64,
}

struct Profile {
    domains: BTreeMap<String, usize>,
    functions: BTreeMap<String, usize>,
    relation_sets: Vec<BTreeSet<String>>,
    relation_occurrences: usize,
    tokens: usize,
    n: usize,
}

fn gold_bag(q: &Question, schema: &Schema) -> Result<ElementBag, EvalError> {
    let missing = || EvalError::MissingGoldForm(q.qid.clone());
    let query = q
        .gold_query(schema)
        .ok_or_else(missing)?
        .map_err(|_| missing())?;
    extract_elements(&query, schema).map_err(|_| missing())
}

fn profile(qs: &[Question], schema: &Schema) -> Result<Profile, EvalError> {
    let mut p = Profile {
        domains: BTreeMap::new(),
        functions: BTreeMap::new(),
        relation_sets: Vec::new(),
        relation_occurrences: 0,
        tokens: 0,
        n: qs.len(),
    };
    for q in qs {
        let bag = gold_bag(q, schema)?;
        let domain = q.domain.clone().unwrap_or_else(|| NONE_BUCKET.to_string());
        *p.domains.entry(domain).or_default() += 1;
        if bag.functions.is_empty() {
            *p.functions.entry(NONE_BUCKET.to_string()).or_default() += 1;
        }
        for (f, c) in &bag.functions {
            *p.functions.entry(f.to_string()).or_default() += c;
        }
        p.relation_occurrences += bag.relations.values().sum::<usize>();
        p.relation_sets
            .push(bag.relations.keys().cloned().collect());
        p.tokens += q.question.split_whitespace().count();
    }
    Ok(p)
}

fn mean(total: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

/// Source/target comparison: domain and function-tag divergence (base 2),
/// share of target questions using a relation absent from every source
/// gold form, mean relation occurrences per gold form and mean whitespace
/// tokens per question.
pub fn dataset_stats(
    source: &[Question],
    target: &[Question],
    schema: &Schema,
) -> Result<StatsReport, EvalError> {
    let s = profile(source, schema)?;
    let t = profile(target, schema)?;
    let js = |a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>| {
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        js_divergence_maps(&normalize_counts(a), &normalize_counts(b), 2.0)
    };
    let seen: BTreeSet<&String> = s.relation_sets.iter().flatten().collect();
    let unseen = t
        .relation_sets
        .iter()
        .filter(|rels| rels.iter().any(|r| !seen.contains(r)))
        .count();
    Ok(StatsReport {
        source_questions: s.n,
        target_questions: t.n,
        domain_jsd: js(&s.domains, &t.domains)?,
        function_jsd: js(&s.functions, &t.functions)?,
        unseen_relation_pct: 100.0 * mean(unseen, t.n),
        relations_per_lf_source: mean(s.relation_occurrences, s.n),
        relations_per_lf_target: mean(t.relation_occurrences, t.n),
        tokens_per_question_source: mean(s.tokens, s.n),
        tokens_per_question_target: mean(t.tokens, t.n),
    })
}
