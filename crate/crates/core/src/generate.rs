//! Few-shot SPARQL generation prompt and the generation call.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatModel, LlmError, Message, Sampling};
use crate::logical_form::{parse_sparql, sanitize_llm_sparql, SparqlQuery};
use crate::retrieval::{LinkedEntity, RetrievalResult};

const HEADER_TAIL: &str = " to SPARQL for Freebase based on the candidate paths (represented using SPARQL), candidate entities, candidate relations and candidate entity types, which are separated by '|',  retrieved from Freebase by one or more retrievers. Please do not include any other relations, entities and entity types.

Your final SPARQL can have three scenarios:

1. When you need to just pick from candidate paths represented using SPARQL.

2. When you need to extend one of candidate paths represented using SPARQL using the candidate relations and entity types.

3. When you need to generate a new SPARQL only using the candidate entities, relations and entity types.

For  entity type check please use this relation \"type.object.type\".

Make sure that the original question can be regenerated only using the identified entity types, specific entities and relations used in the generated SPARQL.";

pub const DEFAULT_TOKEN_CEILING: usize = 8192;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    #[default]
    Standard,
    /// Exemplars fenced by `####` lines, test block marked with `<<<>>>`.
    Delimited,
}

/// Per-retriever aspect sizes and exemplar count for one prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectBudget {
    pub paths: usize,
    pub relations: usize,
    pub classes: usize,
    pub shots: usize,
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Shrinks per-retriever retrieval sizes as retrievers are added so the
/// prompt keeps roughly the same length.
pub fn merge_budgets(num_retrievers: usize) -> AspectBudget {
    let n = num_retrievers.max(1);
    let (paths, relations, classes) = match n {
        1 => (5, 10, 10),
        2 => (3, 5, 5),
        n => (ceil_div(5, n), ceil_div(10, n), ceil_div(10, n)),
    };
    AspectBudget {
        paths,
        relations,
        classes,
        shots: 5,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("exemplar pool is empty")]
    EmptyPool,
    #[error("prompt needs {tokens} tokens, ceiling is {ceiling}")]
    BudgetExceeded { tokens: usize, ceiling: usize },
    #[error("no SPARQL in model output: {reason}")]
    Unparseable { raw: String, reason: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// `n` items drawn uniformly without replacement; the whole pool when it
/// is smaller than `n`.
pub fn select_exemplars<T: Clone>(
    pool: &[T],
    n: usize,
    seed: u64,
) -> Result<Vec<T>, GenerateError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if pool.is_empty() {
        return Err(GenerateError::EmptyPool);
    }
    if pool.len() <= n {
        return Ok(pool.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// A question with its linked entities and per-retriever retrieval.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionContext {
    pub question: String,
    pub entities: Vec<LinkedEntity>,
    pub retrievals: Vec<RetrievalResult>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    #[serde(flatten)]
    pub context: QuestionContext,
    pub gold_sparql: String,
}

pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// One token per four characters, rounded up.
#[derive(Clone, Copy, Debug, Default)]
pub struct CharEstimator;

impl TokenEstimator for CharEstimator {
    fn estimate(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }
}

fn push_section(out: &mut Vec<String>, label: &str, items: Vec<String>) {
    if !items.is_empty() {
        out.push(format!("{label}\n{}", items.join("|\n")));
    }
}

fn context_block(ctx: &QuestionContext, budget: &AspectBudget) -> String {
    let mut parts = vec![format!("question: {}", ctx.question)];
    let entities: Vec<String> = ctx.entities.iter().map(LinkedEntity::render).collect();
    parts.push(format!("candidate entities: {}", entities.join("|")));
    for r in &ctx.retrievals {
        let paths = r
            .paths
            .iter()
            .flatten()
            .take(budget.paths)
            .map(|p| p.to_sparql_text())
            .collect();
        push_section(
            &mut parts,
            "candidate paths from Retriever represented using SPARQL:",
            paths,
        );
    }
    for r in &ctx.retrievals {
        let rels = r
            .relations
            .iter()
            .flatten()
            .take(budget.relations)
            .cloned()
            .collect();
        push_section(&mut parts, "candidate relations from Retriever:", rels);
    }
    for r in &ctx.retrievals {
        let classes = r
            .classes
            .iter()
            .flatten()
            .take(budget.classes)
            .cloned()
            .collect();
        push_section(
            &mut parts,
            "candidate entity types from Retriever:",
            classes,
        );
    }
    parts.join("\n\n")
}

fn render_gold(text: &str) -> String {
    parse_sparql(text).map_or_else(|_| text.trim().to_string(), |q| q.to_pretty())
}

/// Renders the prompt without any length check. Every aspect list of the
/// test question and of each exemplar is cut to `budget`; `budget.shots`
/// is not applied here, pass the exemplars to include.
pub fn render_generation_prompt(
    test: &QuestionContext,
    exemplars: &[Exemplar],
    variant: PromptVariant,
    budget: &AspectBudget,
) -> String {
    let shots: Vec<String> = exemplars
        .iter()
        .map(|e| {
            format!(
                "{}\n\nSPARQL:\n{}",
                context_block(&e.context, budget),
                render_gold(&e.gold_sparql)
            )
        })
        .collect();
    let test_block = format!("{}\n\nSPARQL:", context_block(test, budget));
    let text = match variant {
        PromptVariant::Standard => {
            let mut s = format!("Translate the following question{HEADER_TAIL}\n\n");
            if !shots.is_empty() {
                s.push_str("# FEW-SHOTS\n\n");
                s.push_str(&shots.join("\n\n"));
                s.push_str("\n\n");
            }
            s.push_str(&test_block);
            s
        }
        PromptVariant::Delimited => {
            let mut s = format!("Translate the following question after <<<>>>{HEADER_TAIL}\n");
            if !shots.is_empty() {
                s.push_str("####\n# FEW-SHOTS\nHere are some examples:\n");
                s.push_str(&shots.join("\n\n"));
                s.push_str("\n####\n");
            }
            s.push_str("<<<>>>\n");
            s.push_str(&test_block);
            s
        }
    };
    text.lines()
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders the prompt and checks it against the token ceiling.
pub fn build_generation_prompt(
    test: &QuestionContext,
    exemplars: &[Exemplar],
    variant: PromptVariant,
    budget: &AspectBudget,
    estimator: &dyn TokenEstimator,
    ceiling: usize,
) -> Result<String, GenerateError> {
    let prompt = render_generation_prompt(test, exemplars, variant, budget);
    let tokens = estimator.estimate(&prompt);
    if tokens > ceiling {
        return Err(GenerateError::BudgetExceeded { tokens, ceiling });
    }
    Ok(prompt)
}

/// Like [`build_generation_prompt`], dropping trailing exemplars until the
/// prompt fits. Returns the prompt and the number of exemplars kept.
pub fn fit_generation_prompt(
    test: &QuestionContext,
    exemplars: &[Exemplar],
    variant: PromptVariant,
    budget: &AspectBudget,
    estimator: &dyn TokenEstimator,
    ceiling: usize,
) -> Result<(String, usize), GenerateError> {
    let mut n = exemplars.len();
    loop {
        match build_generation_prompt(test, &exemplars[..n], variant, budget, estimator, ceiling) {
            Ok(p) => return Ok((p, n)),
            Err(e) if n == 0 => return Err(e),
            Err(_) => n -= 1,
        }
    }
}

/// Sanitizes and parses a model reply.
pub fn parse_generation(raw: &str) -> Result<SparqlQuery, GenerateError> {
    let text = sanitize_llm_sparql(raw);
    if !text.contains('{') {
        return Err(GenerateError::Unparseable {
            raw: raw.to_string(),
            reason: "no graph pattern".into(),
        });
    }
    parse_sparql(&text).map_err(|e| GenerateError::Unparseable {
        raw: raw.to_string(),
        reason: e.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub raw: String,
    pub query: Result<SparqlQuery, GenerateError>,
}

/// One model call with the prompt as a single user message.
pub fn generate_lf(
    llm: &dyn ChatModel,
    sampling: &Sampling,
    prompt: &str,
) -> Result<Generation, LlmError> {
    let raw = llm.complete(&sampling.request(vec![Message::user(prompt)]))?;
    let query = parse_generation(&raw);
    Ok(Generation { raw, query })
}
