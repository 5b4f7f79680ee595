mod common;

use common::*;
use kbqa_core::egf::{build_egf_prompt, feedback_message};
use kbqa_core::generate::{
    build_generation_prompt, merge_budgets, render_generation_prompt, select_exemplars,
    CharEstimator, Exemplar, GenerateError, PromptVariant,
};
use kbqa_core::llm::Role;
use kbqa_core::rerank::{build_rerank_prompt, Aspect, RerankRequest};

fn rerank_req(aspect: Aspect, candidates: &[&str]) -> RerankRequest {
    RerankRequest {
        aspect,
        question: INDONESIA_Q.into(),
        entities: vec![entity("indonesia", "m.097kp")],
        candidates: strings(candidates),
        k: aspect.default_k(),
    }
}

#[test]
fn rerank_prompts_match_golden_files() {
    let paths = rerank_req(
        Aspect::Paths,
        &[
            "(AND language.language_dialect (JOIN (R language.human_language.dialects) m.097kp))",
            "(AND language.language_dialect (JOIN language.language_dialect.language m.097kp))",
        ],
    );
    assert_eq!(build_rerank_prompt(&paths), golden("rerank_paths.txt"));
    let classes = rerank_req(
        Aspect::Classes,
        &[
            "language.human_language",
            "fictional_universe.fictional_language",
        ],
    );
    assert_eq!(build_rerank_prompt(&classes), golden("rerank_classes.txt"));
    let relations = rerank_req(
        Aspect::Relations,
        &[
            "lang.human_language.countries_spoken_in",
            "location.country.languages_spoken",
        ],
    );
    assert_eq!(
        build_rerank_prompt(&relations),
        golden("rerank_relations.txt")
    );
}

#[test]
fn rerank_default_sizes() {
    let k: Vec<usize> = Aspect::ALL.iter().map(|a| a.default_k()).collect();
    assert_eq!(k, [5, 10, 10]);
}

#[test]
fn single_candidate_still_prompts() {
    let p = build_rerank_prompt(&rerank_req(Aspect::Paths, &["x.y"]));
    assert!(p.starts_with("For a given question please select five relevant candidate paths"));
    assert!(p.ends_with("candidate paths:\nx.y"));
}

#[test]
fn generation_prompts_match_golden_files() {
    let b = merge_budgets(1);
    let ex = [texas_rangers_exemplar()];
    let test = indonesia_context();
    assert_eq!(
        render_generation_prompt(&test, &ex, PromptVariant::Standard, &b),
        golden("generation_standard.txt")
    );
    assert_eq!(
        render_generation_prompt(&test, &ex, PromptVariant::Delimited, &b),
        golden("generation_delimited.txt")
    );
}

#[test]
fn feedback_turn_matches_golden_file() {
    assert_eq!(feedback_message(), golden("egf_feedback.txt"));
    let msgs = build_egf_prompt("PROMPT", &strings(&["q1"]));
    assert_eq!(msgs.len(), 3);
    assert_eq!(
        (msgs[0].role, msgs[1].role, msgs[2].role),
        (Role::User, Role::Assistant, Role::User)
    );
    assert_eq!(msgs[2].content, golden("egf_feedback.txt"));
}

#[test]
fn one_retriever_five_shots() {
    let b = merge_budgets(1);
    let ex: Vec<Exemplar> = (0..5).map(|i| numbered_exemplar(i, 1)).collect();
    let p = render_generation_prompt(&test_context(1), &ex, PromptVariant::Standard, &b);
    assert_eq!(p.matches("\nquestion: ").count(), 6);
    assert_eq!(p.matches("\nSPARQL:\nSELECT").count(), 5);
    assert!(p.ends_with("SPARQL:"));
    assert!(section_sizes(&p, "candidate paths from Retriever")
        .iter()
        .all(|s| s == &[5]));
    assert!(section_sizes(&p, "candidate relations from Retriever")
        .iter()
        .all(|s| s == &[10]));
    assert!(section_sizes(&p, "candidate entity types from Retriever")
        .iter()
        .all(|s| s == &[10]));
}

#[test]
fn two_retrievers_use_the_merged_budget() {
    let b = merge_budgets(2);
    let ex: Vec<Exemplar> = (0..5).map(|i| numbered_exemplar(i, 2)).collect();
    let p = render_generation_prompt(&test_context(2), &ex, PromptVariant::Standard, &b);
    let blocks = section_sizes(&p, "candidate paths from Retriever");
    assert_eq!(blocks.len(), 6);
    assert!(blocks.iter().all(|s| s == &[3, 3]));
    for label in [
        "candidate relations from Retriever",
        "candidate entity types from Retriever",
    ] {
        assert!(section_sizes(&p, label).iter().all(|s| s == &[5, 5]));
    }
}

#[test]
fn delimited_variant_fences_the_exemplars() {
    let b = merge_budgets(1);
    let ex: Vec<Exemplar> = (0..3).map(|i| numbered_exemplar(i, 1)).collect();
    let p = render_generation_prompt(&test_context(1), &ex, PromptVariant::Delimited, &b);
    let fences: Vec<usize> = p.match_indices("\n####\n").map(|(i, _)| i).collect();
    assert_eq!(fences.len(), 2);
    let inside = &p[fences[0]..fences[1]];
    assert_eq!(inside.matches("question: exemplar question").count(), 3);
    assert!(p[fences[1]..].starts_with("\n####\n<<<>>>\nquestion: the test question"));
}

#[test]
fn more_shots_means_a_longer_prompt() {
    let b = merge_budgets(1);
    let pool: Vec<Exemplar> = (0..6).map(|i| numbered_exemplar(i, 1)).collect();
    let lens: Vec<usize> = [0, 1, 3, 5]
        .iter()
        .map(|&n| {
            render_generation_prompt(&test_context(1), &pool[..n], PromptVariant::Standard, &b)
                .len()
        })
        .collect();
    assert!(lens.windows(2).all(|w| w[0] < w[1]), "{lens:?}");
    let a = render_generation_prompt(&test_context(1), &pool, PromptVariant::Standard, &b);
    assert_eq!(
        a,
        render_generation_prompt(&test_context(1), &pool, PromptVariant::Standard, &b)
    );
}

#[test]
fn budget_ceiling() {
    let b = merge_budgets(1);
    let ex: Vec<Exemplar> = (0..5).map(|i| numbered_exemplar(i, 1)).collect();
    let err = build_generation_prompt(
        &test_context(1),
        &ex,
        PromptVariant::Standard,
        &b,
        &CharEstimator,
        100,
    )
    .unwrap_err();
    assert!(matches!(
        err,
        GenerateError::BudgetExceeded { ceiling: 100, .. }
    ));
    assert!(build_generation_prompt(
        &test_context(1),
        &ex,
        PromptVariant::Standard,
        &b,
        &CharEstimator,
        8192
    )
    .is_ok());
}

#[test]
fn exemplar_selection_is_static_per_seed() {
    let pool: Vec<Exemplar> = (0..100).map(|i| numbered_exemplar(i, 1)).collect();
    let a = select_exemplars(&pool, 5, 7).unwrap();
    assert_eq!(a, select_exemplars(&pool, 5, 7).unwrap());
    assert_ne!(a, select_exemplars(&pool, 5, 8).unwrap());
}
