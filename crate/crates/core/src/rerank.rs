//! LLM re-ranking of one retrieval aspect.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatModel, LlmError, Message, Sampling};
use crate::retrieval::LinkedEntity;

pub const SEPARATOR: &str = "@@";

const PATHS_INSTRUCTION: &str = "For a given question please select five relevant candidate paths which might be useful for answering it in ranked order. If the number of candidates are five or less then just rerank the candidates. candidate paths are seperated by | symbol. The output should contain only relevant candidates seperated by \"@@\".";
const CLASSES_INSTRUCTION: &str = "For a given question please select ten relevant candidate answer entity types which might be useful for answering it in ranked order. If the number of candidates are ten or less then just rerank the candidates. candidate answer entity types are seperated by | symbol. The output should contain only relevant candidates seperated by \"@@\".";
const RELATIONS_INSTRUCTION: &str = "For a given question please select ten relevant candidate relations which might be useful for answering it in ranked order. If the number of candidates are ten or less then just rerank the candidates. candidate relations are seperated by | symbol. The output should contain only relevant candidates seperated by \"@@\".";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Paths,
    Relations,
    Classes,
}

impl Aspect {
    pub const ALL: [Aspect; 3] = [Aspect::Paths, Aspect::Relations, Aspect::Classes];

    /// Target size when a single retriever feeds generation.
    pub fn default_k(self) -> usize {
        match self {
            Aspect::Paths => 5,
            Aspect::Relations | Aspect::Classes => 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RerankRequest {
    pub aspect: Aspect,
    pub question: String,
    pub entities: Vec<LinkedEntity>,
    pub candidates: Vec<String>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RerankError {
    #[error("nothing to select: the candidate list is empty")]
    EmptySelection,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

pub fn build_rerank_prompt(req: &RerankRequest) -> String {
    let candidates = req.candidates.join("|\n");
    let prompt = match req.aspect {
        Aspect::Paths => {
            let entities: Vec<String> = req.entities.iter().map(LinkedEntity::render).collect();
            format!(
                "{PATHS_INSTRUCTION}\n\nquestion: {}\n\nentity: {}\n\ncandidate paths:\n{candidates}",
                req.question,
                entities.join("|")
            )
        }
        Aspect::Classes => format!(
            "{CLASSES_INSTRUCTION}\n\nquestion: {}\n\ncandidate entity types:\n{candidates}",
            req.question
        ),
        Aspect::Relations => format!(
            "{RELATIONS_INSTRUCTION}\n\nquestion: {}\n\ncandidate Relations:\n{candidates}",
            req.question
        ),
    };
    prompt
        .lines()
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Reads an `@@`-separated selection. Items are matched against the
/// candidates after whitespace collapsing; unknown and repeated items are
/// dropped; the list is topped up from the original order. The result has
/// `min(k, |distinct candidates|)` entries, all taken from `candidates`.
pub fn parse_rerank_response(
    text: &str,
    candidates: &[String],
    k: usize,
) -> Result<Vec<String>, RerankError> {
    if candidates.is_empty() {
        return Err(RerankError::EmptySelection);
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, c) in candidates.iter().enumerate() {
        index.entry(collapse(c)).or_insert(i);
    }
    let mut taken: HashSet<usize> = HashSet::new();
    let mut order: Vec<usize> = Vec::new();
    for item in text.split(SEPARATOR) {
        if order.len() == k {
            break;
        }
        if let Some(&i) = index.get(&collapse(item)) {
            if taken.insert(i) {
                order.push(i);
            }
        }
    }
    for (i, c) in candidates.iter().enumerate() {
        if order.len() == k {
            break;
        }
        if index.get(&collapse(c)) == Some(&i) && taken.insert(i) {
            order.push(i);
        }
    }
    Ok(order.into_iter().map(|i| candidates[i].clone()).collect())
}

/// What one re-ranking exchange produced, kept for the run manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankOutcome {
    pub aspect: Aspect,
    pub prompt: String,
    pub raw: String,
    pub selected: Vec<String>,
}

/// Builds the prompt, makes exactly one model call and parses the reply.
pub fn rerank_aspect(
    llm: &dyn ChatModel,
    sampling: &Sampling,
    req: &RerankRequest,
) -> Result<RerankOutcome, RerankError> {
    if req.candidates.is_empty() {
        return Err(RerankError::EmptySelection);
    }
    let prompt = build_rerank_prompt(req);
    let raw = llm.complete(&sampling.request(vec![Message::user(prompt.clone())]))?;
    let selected = parse_rerank_response(&raw, &req.candidates, req.k)?;
    Ok(RerankOutcome {
        aspect: req.aspect,
        prompt,
        raw,
        selected,
    })
}
