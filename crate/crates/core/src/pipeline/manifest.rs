//! Per-question records, the run summary and the NO_DECISION review queue.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::Question;
use crate::egf::{EgfStatus, EgfTrace};
use crate::eval::{answer_f1_strings, em_classify, EmReason, EmVerdict, Prf, Verdict};
use crate::logical_form::{extract_elements, parse_sparql, ElementBag, Schema};
use crate::rerank::RerankOutcome;
use crate::retrieval::{recall_error_rate, RetrievalResult};

use super::config::Stage;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrieverRecord {
    pub retriever: String,
    /// Lists handed to generation.
    pub reranked: RetrievalResult,
    pub rerank: Vec<RerankOutcome>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiCalls {
    pub rerank: usize,
    pub generation: usize,
    pub feedback: usize,
}

impl ApiCalls {
    pub fn total(&self) -> usize {
        self.rerank + self.generation + self.feedback
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub raw: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionMetrics {
    #[serde(flatten)]
    pub answer: Prf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<EmVerdict>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub qid: String,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub stage: Stage,
    #[serde(default)]
    pub retrieval: Vec<RetrieverRecord>,
    /// Ids of the exemplars that made it into the prompt.
    #[serde(default)]
    pub exemplars: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub egf: Option<EgfTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_query: Option<String>,
    #[serde(default)]
    pub final_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<QuestionMetrics>,
    pub api_calls: ApiCalls,
}

impl QuestionRecord {
    pub fn new(qid: impl Into<String>, stage: Stage) -> Self {
        QuestionRecord {
            qid: qid.into(),
            status: RecordStatus::Ok,
            error: None,
            stage,
            retrieval: Vec::new(),
            exemplars: Vec::new(),
            prompt: None,
            generation: None,
            egf: None,
            final_query: None,
            final_answers: Vec::new(),
            metrics: None,
            api_calls: ApiCalls::default(),
        }
    }

    pub fn fail(mut self, message: impl Into<String>) -> Self {
        self.status = RecordStatus::Error;
        self.error = Some(message.into());
        self
    }
}

/// Scores a prediction against the question's gold answers, adding an EM
/// verdict when both queries are available. `None` without gold answers.
pub fn score(
    final_answers: &[String],
    final_query: Option<&str>,
    q: &Question,
    schema: &Schema,
) -> Option<QuestionMetrics> {
    if q.gold_answers.is_empty() {
        return None;
    }
    let pred: BTreeSet<String> = final_answers.iter().cloned().collect();
    let gold: BTreeSet<String> = q.gold_answers.iter().cloned().collect();
    let answer = answer_f1_strings(&pred, &gold);
    let em = match (final_query, q.gold_query(schema)) {
        (Some(p), Some(g)) => Some(match (parse_sparql(p), g) {
            (Ok(p), Ok(g)) => em_classify(&p, &g, answer.f1, schema),
            (p, g) => EmVerdict {
                verdict: Verdict::NoDecision,
                reason: EmReason::ExtractionFailed(
                    [p.err(), g.err()]
                        .into_iter()
                        .flatten()
                        .map(|e| e.to_string())
                        .collect::<Vec<_>>()
                        .join("; "),
                ),
                pred: None,
                gold: None,
            },
        }),
        _ => None,
    };
    Some(QuestionMetrics { answer, em })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub rerank: f64,
    pub generation: f64,
    pub feedback: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmCounts {
    pub equivalent: usize,
    pub non_equivalent: usize,
    pub no_decision: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub questions: usize,
    pub completed: usize,
    pub errors: usize,
    /// Questions with gold answers.
    pub scored: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub em: EmCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_error_rate: Option<f64>,
    /// Mean model calls per completed question.
    pub api_calls: Averages,
    pub egf_status: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hashes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Aggregates from per-question records alone. Questions in `dataset` with
/// a usable gold form enter the recall error rate, which is computed over
/// the re-ranked lists.
pub fn summarize(records: &[QuestionRecord], dataset: &[Question], schema: &Schema) -> Summary {
    let completed: Vec<&QuestionRecord> = records
        .iter()
        .filter(|r| r.status == RecordStatus::Ok)
        .collect();
    let metrics: Vec<&QuestionMetrics> =
        records.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let mut em = EmCounts::default();
    for v in metrics.iter().filter_map(|m| m.em.as_ref()) {
        match v.verdict {
            Verdict::Equivalent => em.equivalent += 1,
            Verdict::NonEquivalent => em.non_equivalent += 1,
            Verdict::NoDecision => em.no_decision += 1,
        }
    }
    let mut egf_status = BTreeMap::new();
    for t in records.iter().filter_map(|r| r.egf.as_ref()) {
        let key = match t.status {
            EgfStatus::NonEmptyAnswer => "non_empty_answer",
            EgfStatus::MaxItersExhausted => "max_iters_exhausted",
            EgfStatus::UnrecoverableError => "unrecoverable_error",
        };
        *egf_status.entry(key.to_string()).or_insert(0) += 1;
    }
    let by_qid: BTreeMap<&str, &QuestionRecord> =
        records.iter().map(|r| (r.qid.as_str(), r)).collect();
    let mut runs: BTreeMap<String, Vec<RetrievalResult>> = BTreeMap::new();
    let mut gold: BTreeMap<String, ElementBag> = BTreeMap::new();
    for q in dataset {
        let Some(r) = by_qid.get(q.qid.as_str()) else {
            continue;
        };
        if let Some(Ok(g)) = q.gold_query(schema) {
            if let Ok(bag) = extract_elements(&g, schema) {
                gold.insert(q.qid.clone(), bag);
                runs.insert(
                    q.qid.clone(),
                    r.retrieval.iter().map(|x| x.reranked.clone()).collect(),
                );
            }
        }
    }
    let recall_error_rate = if gold.is_empty() {
        None
    } else {
        recall_error_rate(&runs, &gold, schema).ok()
    };
    Summary {
        questions: records.len(),
        completed: completed.len(),
        errors: records.len() - completed.len(),
        scored: metrics.len(),
        precision: mean(metrics.iter().map(|m| m.answer.precision)),
        recall: mean(metrics.iter().map(|m| m.answer.recall)),
        f1: mean(metrics.iter().map(|m| m.answer.f1)),
        em,
        recall_error_rate,
        api_calls: Averages {
            rerank: mean(completed.iter().map(|r| r.api_calls.rerank as f64)),
            generation: mean(completed.iter().map(|r| r.api_calls.generation as f64)),
            feedback: mean(completed.iter().map(|r| r.api_calls.feedback as f64)),
            total: mean(completed.iter().map(|r| r.api_calls.total() as f64)),
        },
        egf_status,
        hashes: BTreeMap::new(),
        config: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub qid: String,
    pub question: String,
    pub pred: Option<String>,
    pub gold: Option<String>,
    pub f1: f64,
    pub reason: EmReason,
}

/// NO_DECISION verdicts, in record order, for manual review.
pub fn review_queue(
    records: &[QuestionRecord],
    dataset: &[Question],
    schema: &Schema,
) -> Vec<ReviewItem> {
    let by_qid: BTreeMap<&str, &Question> = dataset.iter().map(|q| (q.qid.as_str(), q)).collect();
    records
        .iter()
        .filter_map(|r| {
            let m = r.metrics.as_ref()?;
            let em = m.em.as_ref().filter(|e| e.verdict == Verdict::NoDecision)?;
            let q = by_qid.get(r.qid.as_str());
            Some(ReviewItem {
                qid: r.qid.clone(),
                question: q.map(|q| q.question.clone()).unwrap_or_default(),
                pred: r.final_query.clone(),
                gold: q
                    .and_then(|q| q.gold_query(schema))
                    .and_then(Result::ok)
                    .map(|g| g.serialize()),
                f1: m.answer.f1,
                reason: em.reason.clone(),
            })
        })
        .collect()
}
