//! Answer F1, the three-valued logical-form match, and dataset statistics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::AnswerSet;
use crate::logical_form::{extract_elements, ElementBag, Schema, SparqlQuery};

pub mod divergence;
pub mod stats;

pub use divergence::{js_divergence, js_divergence_maps, normalize_counts};
pub use stats::{dataset_stats, StatsReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("distribution sums to {0}, not 1")]
    NotNormalized(String),
    #[error("distributions have different supports ({0} vs {1} entries)")]
    SupportMismatch(usize, usize),
    #[error("negative probability {0}")]
    Negative(String),
    #[error("question {0} has no usable gold logical form")]
    MissingGoldForm(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set precision, recall and F1 over normalized answer strings. An empty
/// prediction has precision 0; with an empty gold set the score is 1 only
/// if the prediction is empty too.
pub fn answer_f1_strings(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> Prf {
    if gold.is_empty() {
        let v = if pred.is_empty() { 1.0 } else { 0.0 };
        return Prf {
            precision: v,
            recall: v,
            f1: v,
        };
    }
    let hit = pred.intersection(gold).count() as f64;
    let precision = if pred.is_empty() {
        0.0
    } else {
        hit / pred.len() as f64
    };
    let recall = hit / gold.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

pub fn answer_f1(pred: &AnswerSet, gold: &AnswerSet) -> Prf {
    answer_f1_strings(&pred.to_strings(), &gold.to_strings())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Equivalent,
    NonEquivalent,
    NoDecision,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmReason {
    /// Element multisets equal and answers identical.
    MultisetMatch,
    /// Element sets (literals excluded) differ.
    SetMismatch,
    /// Multisets equal but the answers differ.
    MultisetMatchImperfectF1,
    /// Sets equal, multisets differ.
    MultisetMismatch,
    ExtractionFailed(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmVerdict {
    pub verdict: Verdict,
    pub reason: EmReason,
    pub pred: Option<ElementBag>,
    pub gold: Option<ElementBag>,
}

/// Compares the KB elements of two queries. Equal multisets with a perfect
/// F1 is EQUIVALENT; unequal literal-free sets is NON_EQUIVALENT; anything
/// else needs a human.
pub fn em_classify(pred: &SparqlQuery, gold: &SparqlQuery, f1: f64, schema: &Schema) -> EmVerdict {
    let (p, g) = match (
        extract_elements(pred, schema),
        extract_elements(gold, schema),
    ) {
        (Ok(p), Ok(g)) => (p, g),
        (p, g) => {
            let msg = [p.as_ref().err(), g.as_ref().err()]
                .into_iter()
                .flatten()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return EmVerdict {
                verdict: Verdict::NoDecision,
                reason: EmReason::ExtractionFailed(msg),
                pred: p.ok(),
                gold: g.ok(),
            };
        }
    };
    let (verdict, reason) = if p.set_without_literals() != g.set_without_literals() {
        (Verdict::NonEquivalent, EmReason::SetMismatch)
    } else if p != g {
        (Verdict::NoDecision, EmReason::MultisetMismatch)
    } else if f1 == 1.0 {
        (Verdict::Equivalent, EmReason::MultisetMatch)
    } else {
        (Verdict::NoDecision, EmReason::MultisetMatchImperfectF1)
    };
    EmVerdict {
        verdict,
        reason,
        pred: Some(p),
        gold: Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logical_form::parse_sparql;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn f1_cases() {
        let p = answer_f1_strings(&set(&["a", "b"]), &set(&["a", "b"]));
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = answer_f1_strings(&set(&["a"]), &set(&["b"]));
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = answer_f1_strings(&set(&["a", "b"]), &set(&["b", "c"]));
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
        let p = answer_f1_strings(&set(&[]), &set(&["b"]));
        assert_eq!(p.f1, 0.0);
        assert_eq!(answer_f1_strings(&set(&[]), &set(&[])).f1, 1.0);
        assert_eq!(
            answer_f1(&AnswerSet::Count(3), &AnswerSet::Count(3)).f1,
            1.0
        );
    }

    #[test]
    fn verdicts() {
        let s = Schema::default();
        let gold = parse_sparql(
            "SELECT DISTINCT ?x WHERE { ?x ns:a.b ns:m.01 . ?x ns:type.object.type ns:c.d . }",
        )
        .unwrap();
        let perm = parse_sparql(
            "SELECT DISTINCT ?z WHERE { ?z ns:type.object.type ns:c.d . ?z ns:a.b ns:m.01 . }",
        )
        .unwrap();
        let sub = parse_sparql(
            "SELECT DISTINCT ?x WHERE { ?x ns:a.zz ns:m.01 . ?x ns:type.object.type ns:c.d . }",
        )
        .unwrap();
        assert_eq!(
            em_classify(&gold, &gold, 1.0, &s).verdict,
            Verdict::Equivalent
        );
        assert_eq!(
            em_classify(&perm, &gold, 1.0, &s).verdict,
            Verdict::Equivalent
        );
        assert_eq!(
            em_classify(&sub, &gold, 1.0, &s).verdict,
            Verdict::NonEquivalent
        );
        assert_eq!(
            em_classify(&gold, &gold, 0.5, &s).verdict,
            Verdict::NoDecision
        );

        let lit_a =
            parse_sparql("SELECT DISTINCT ?x WHERE { ?x ns:a.b ?v . FILTER (?v > 3) }").unwrap();
        let lit_b =
            parse_sparql("SELECT DISTINCT ?x WHERE { ?x ns:a.b ?v . FILTER (?v > 4) }").unwrap();
        let v = em_classify(&lit_a, &lit_b, 1.0, &s);
        assert_eq!(
            (v.verdict, v.reason),
            (Verdict::NoDecision, EmReason::MultisetMismatch)
        );
    }

    #[test]
    fn extraction_failure_is_no_decision() {
        let closed = Schema::new(
            vec!["c.d".into()],
            vec!["a.b".into()],
            Default::default(),
            "type.object.type",
        )
        .unwrap();
        let q = parse_sparql("SELECT DISTINCT ?x WHERE { ?x ns:zz.yy ns:m.01 . }").unwrap();
        let v = em_classify(&q, &q, 1.0, &closed);
        assert_eq!(v.verdict, Verdict::NoDecision);
        assert!(matches!(v.reason, EmReason::ExtractionFailed(_)));
    }
}
