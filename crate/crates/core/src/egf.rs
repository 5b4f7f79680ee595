//! Execution-guided feedback: re-prompt while the generated query returns
//! nothing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::generate::{parse_generation, GenerateError, Generation};
use crate::kb::{AnswerSet, KbBackend};
use crate::llm::{ChatModel, Message, Sampling};
use crate::logical_form::SparqlQuery;

pub const FEEDBACK: &str = "The generated SPARQL gives an empty answer when executed on freebase KG, Please generate again a different executable SPARQL using the same context and constraints.";

pub const DEFAULT_MAX_ITERS: usize = 4;

/// The user turn appended after each failed generation.
pub fn feedback_message() -> String {
    format!("{FEEDBACK}\n\nSPARQL:")
}

/// The conversation for the next attempt: the generation prompt, then each
/// earlier reply followed by the feedback turn.
pub fn build_egf_prompt(prompt: &str, replies: &[String]) -> Vec<Message> {
    let mut msgs = vec![Message::user(prompt)];
    for r in replies {
        msgs.push(Message::assistant(r.clone()));
        msgs.push(Message::user(feedback_message()));
    }
    msgs
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecOutcome {
    Answers { answers: AnswerSet },
    Empty,
    ParseFailure { reason: String },
    ExecutionError { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgfIteration {
    pub index: usize,
    /// User turn added before this generation; absent for the first one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    pub raw: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    pub outcome: ExecOutcome,
    /// Index of an earlier iteration with the same reply text.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<usize>,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EgfStatus {
    NonEmptyAnswer,
    MaxItersExhausted,
    UnrecoverableError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgfTrace {
    pub iterations: Vec<EgfIteration>,
    pub status: EgfStatus,
    /// Model calls made for this trace, the initial generation included.
    pub llm_calls: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EgfTrace {
    pub fn feedback_calls(&self) -> usize {
        self.llm_calls.saturating_sub(1)
    }

    pub fn duplicates(&self) -> usize {
        self.iterations
            .iter()
            .filter(|i| i.duplicate_of.is_some())
            .count()
    }

    /// The last query that parsed, if any.
    pub fn final_query(&self) -> Option<&str> {
        self.iterations
            .iter()
            .rev()
            .find_map(|i| i.query.as_deref())
    }

    /// Answers of the last iteration; empty unless it succeeded.
    pub fn final_answers(&self) -> AnswerSet {
        match self.iterations.last().map(|i| &i.outcome) {
            Some(ExecOutcome::Answers { answers }) => answers.clone(),
            _ => AnswerSet::default(),
        }
    }
}

fn execute(query: &Result<SparqlQuery, GenerateError>, kb: &dyn KbBackend) -> ExecOutcome {
    match query {
        Err(e) => ExecOutcome::ParseFailure {
            reason: e.to_string(),
        },
        Ok(q) => match kb.execute(q) {
            Ok(a) if a.is_empty() => ExecOutcome::Empty,
            Ok(answers) => ExecOutcome::Answers { answers },
            Err(e) => ExecOutcome::ExecutionError {
                message: e.to_string(),
            },
        },
    }
}

/// Runs the loop from an initial generation. Empty answers, unparsable
/// replies and execution errors all trigger feedback while iterations
/// remain; only a failed model call ends the loop early.
pub fn run_egf(
    llm: &dyn ChatModel,
    sampling: &Sampling,
    kb: &dyn KbBackend,
    prompt: &str,
    initial: Generation,
    max_iters: usize,
) -> EgfTrace {
    let mut iterations: Vec<EgfIteration> = Vec::new();
    let mut replies: Vec<String> = Vec::new();
    let mut llm_calls = 1;
    let mut current = initial;
    let mut feedback = None;
    let mut started = Instant::now();
    loop {
        let outcome = execute(&current.query, kb);
        let duplicate_of = replies.iter().position(|r| *r == current.raw);
        let done = matches!(outcome, ExecOutcome::Answers { .. });
        iterations.push(EgfIteration {
            index: iterations.len(),
            feedback: feedback.take(),
            query: current.query.as_ref().ok().map(SparqlQuery::serialize),
            raw: current.raw.clone(),
            outcome,
            duplicate_of,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        replies.push(current.raw);
        if done {
            return EgfTrace {
                iterations,
                status: EgfStatus::NonEmptyAnswer,
                llm_calls,
                error: None,
            };
        }
        if iterations.len() > max_iters {
            return EgfTrace {
                iterations,
                status: EgfStatus::MaxItersExhausted,
                llm_calls,
                error: None,
            };
        }
        started = Instant::now();
        let messages = build_egf_prompt(prompt, &replies);
        llm_calls += 1;
        match llm.complete(&sampling.request(messages)) {
            Ok(raw) => {
                let query = parse_generation(&raw);
                current = Generation { raw, query };
                feedback = Some(feedback_message());
            }
            Err(e) => {
                return EgfTrace {
                    iterations,
                    status: EgfStatus::UnrecoverableError,
                    llm_calls,
                    error: Some(e.to_string()),
                }
            }
        }
    }
}
