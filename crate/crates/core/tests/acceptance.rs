//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use kbqa_core::egf::{run_egf, EgfStatus};
use kbqa_core::eval::{answer_f1, answer_f1_strings, em_classify, js_divergence, Verdict};
use kbqa_core::generate::{
    generate_lf, merge_budgets, render_generation_prompt, Exemplar, PromptVariant,
};
use kbqa_core::kb::{eval_sexpr, execute_in_memory, parse_triples, TripleStore};
use kbqa_core::llm::{Sampling, ScriptedModel};
use kbqa_core::logical_form::{
    extract_elements, parse_sexpr, parse_sparql, sexpr_to_sparql, ElementBag,
};
use kbqa_core::pipeline::run_pipeline;
use kbqa_core::rerank::{build_rerank_prompt, parse_rerank_response, Aspect, RerankRequest};
use kbqa_core::retrieval::{recall_error_rate, RetrievalResult};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn runner(seed: u8) -> TestRunner {
    TestRunner::new_with_rng(
        Config::default(),
        proptest::test_runner::TestRng::from_seed(
            proptest::test_runner::RngAlgorithm::ChaCha,
            &[seed; 32],
        ),
    )
}

fn compiler_soundness() -> Outcome {
    let store = toy_store();
    let mut r = runner(1);
    let strategy = arb_sexpr();
    let start = Instant::now();
    let n = 1000;
    for _ in 0..n {
        let e = strategy
            .new_tree(&mut r)
            .map_err(|e| e.to_string())?
            .current();
        check(e.depth() <= 4, format!("depth {} > 4: {e}", e.depth()))?;
        let q = sexpr_to_sparql(&e).map_err(|err| format!("{e}: {err}"))?;
        let direct = eval_sexpr(&e, &store).map_err(|err| format!("{e}: {err}"))?;
        check(
            execute_in_memory(&q, &store) == direct,
            format!("answers differ for {e}"),
        )?;
    }
    let took = start.elapsed();
    check(took < Duration::from_secs(5), format!("took {took:?}"))?;
    Ok(format!(
        "{n}/{n} s-expressions agree on a {}-triple store in {took:.2?}",
        store.len()
    ))
}

fn equivalence_precision() -> Outcome {
    let store = toy_store();
    let schema = toy_schema();
    let mut r = runner(2);
    let strategy = arb_sexpr();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pairs = 0;
    let mut counts = [0usize; 3];
    while pairs < 1000 {
        let e = strategy
            .new_tree(&mut r)
            .map_err(|e| e.to_string())?
            .current();
        let gold = sexpr_to_sparql(&e).map_err(|err| err.to_string())?;
        let gold_answers = execute_in_memory(&gold, &store);
        let m = *MUTATIONS.choose(&mut rng).unwrap();
        let Some(pred) = mutate(&gold, m, &mut rng) else {
            continue;
        };
        pairs += 1;
        let answers = execute_in_memory(&pred, &store);
        let v = em_classify(&pred, &gold, answer_f1(&answers, &gold_answers).f1, &schema);
        match v.verdict {
            Verdict::Equivalent => {
                counts[0] += 1;
                check(
                    answers == gold_answers,
                    format!("EQUIVALENT with different answers: {e} / {m:?}"),
                )?;
            }
            Verdict::NonEquivalent => {
                counts[1] += 1;
                check(
                    v.pred != v.gold,
                    format!("NON_EQUIVALENT with equal bags: {e} / {m:?}"),
                )?;
            }
            Verdict::NoDecision => counts[2] += 1,
        }
    }

    let gold = sexpr_to_sparql(
        &parse_sexpr(
            r#"(AND (JOIN toy.person.born_in m.c1) (gt toy.person.age "25"^^xsd:integer))"#,
        )
        .unwrap(),
    )
    .unwrap();
    let gold_answers = execute_in_memory(&gold, &store);
    let verdict = |m: Mutation, rng: &mut ChaCha8Rng| {
        let pred = mutate(&gold, m, rng).unwrap();
        let f1 = answer_f1(&execute_in_memory(&pred, &store), &gold_answers).f1;
        em_classify(&pred, &gold, f1, &schema).verdict
    };
    check(
        verdict(Mutation::PermuteTriples, &mut rng) == Verdict::Equivalent,
        "permuted is not EQUIVALENT",
    )?;
    check(
        verdict(Mutation::SubstituteRelation, &mut rng) == Verdict::NonEquivalent,
        "relation swap is not NON_EQUIVALENT",
    )?;
    check(
        verdict(Mutation::ChangeLiteral, &mut rng) == Verdict::NoDecision,
        "literal change is not NO_DECISION",
    )?;
    Ok(format!(
        "{pairs} mutated pairs sound ({} equivalent, {} non-equivalent, {} no-decision); permuted/relation/literal cases as expected",
        counts[0], counts[1], counts[2]
    ))
}

fn rerank_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut kinds = [0usize; 3];
    for i in 0..200 {
        let n = rng.gen_range(1..=15);
        let cands: Vec<String> = (0..n).map(|j| format!("toy.rel.r{j}")).collect();
        let aspect = Aspect::ALL[i % 3];
        let k = aspect.default_k();
        let mut items: Vec<String> = Vec::new();
        match i % 4 {
            0 => kinds[0] += 1,
            _ => {
                for _ in 0..rng.gen_range(1..20) {
                    let item = match rng.gen_range(0..4) {
                        0 => format!("hallucinated.rel.h{}", rng.gen_range(0..5)),
                        1 => format!("  {}\n", cands.choose(&mut rng).unwrap()),
                        _ => cands.choose(&mut rng).unwrap().clone(),
                    };
                    if item.starts_with("hallucinated") {
                        kinds[1] += 1;
                    }
                    items.push(item);
                }
                let dup = items[0].clone();
                items.push(dup);
                kinds[2] += 1;
            }
        }
        let out = parse_rerank_response(&items.join("@@"), &cands, k).map_err(|e| e.to_string())?;
        check(
            out.iter().all(|o| cands.contains(o)),
            format!("response {i}: item outside candidates"),
        )?;
        check(
            out.len() == k.min(cands.len()),
            format!(
                "response {i}: {} items, want {}",
                out.len(),
                k.min(cands.len())
            ),
        )?;
        check(
            out.iter().collect::<BTreeSet<_>>().len() == out.len(),
            format!("response {i}: repeated item"),
        )?;
    }

    let ks: Vec<usize> = Aspect::ALL.iter().map(|a| a.default_k()).collect();
    check(ks == [5, 10, 10], format!("default k {ks:?}"))?;
    let req = |aspect, cands: &[&str]| RerankRequest {
        aspect,
        question: INDONESIA_Q.into(),
        entities: vec![entity("indonesia", "m.097kp")],
        candidates: strings(cands),
        k: Aspect::default_k(aspect),
    };
    let goldens = [
        (
            req(
                Aspect::Paths,
                &[
                    "(AND language.language_dialect (JOIN (R language.human_language.dialects) m.097kp))",
                    "(AND language.language_dialect (JOIN language.language_dialect.language m.097kp))",
                ],
            ),
            "rerank_paths.txt",
        ),
        (
            req(Aspect::Classes, &["language.human_language", "fictional_universe.fictional_language"]),
            "rerank_classes.txt",
        ),
        (
            req(
                Aspect::Relations,
                &["lang.human_language.countries_spoken_in", "location.country.languages_spoken"],
            ),
            "rerank_relations.txt",
        ),
    ];
    for (r, file) in &goldens {
        check(
            build_rerank_prompt(r) == golden(file),
            format!("{file} differs"),
        )?;
    }
    Ok(format!(
        "200 fuzzed responses ({} empty, {} hallucinated items, {} with duplicates) bounded subsets; k = (5, 10, 10); 3 golden prompts byte-identical",
        kinds[0], kinds[1], kinds[2]
    ))
}

fn merge_budget_sizes() -> Outcome {
    let t = |n| {
        let b = merge_budgets(n);
        (b.paths, b.relations, b.classes)
    };
    check(
        t(1) == (5, 10, 10),
        format!("merge_budgets(1) = {:?}", t(1)),
    )?;
    check(t(2) == (3, 5, 5), format!("merge_budgets(2) = {:?}", t(2)))?;
    let ex: Vec<Exemplar> = (0..5).map(|i| numbered_exemplar(i, 2)).collect();
    let p = render_generation_prompt(
        &test_context(2),
        &ex,
        PromptVariant::Standard,
        &merge_budgets(2),
    );
    let mut blocks = 0;
    for (label, max) in [
        ("candidate paths from Retriever", 3),
        ("candidate relations from Retriever", 5),
        ("candidate entity types from Retriever", 5),
    ] {
        let sizes = section_sizes(&p, label);
        blocks = sizes.len();
        check(
            sizes
                .iter()
                .all(|s| s.len() == 2 && s.iter().all(|&n| n <= max)),
            format!("{label}: {sizes:?}"),
        )?;
    }
    Ok(format!("(5,10,10) and (3,5,5); {blocks} question blocks with 2 retrievers within 3 paths and 5 relations/classes each"))
}

fn egf_bound() -> Outcome {
    let kb: TripleStore = parse_triples("m.a toy.r m.b .\n").unwrap();
    const EMPTY: &str = "SELECT DISTINCT ?x WHERE { ns:m.zz ns:toy.r ?x . }";
    const GOOD: &str = "SELECT DISTINCT ?x WHERE { ns:m.a ns:toy.r ?x . }";
    let s = Sampling::default();
    for n in 1..=5 {
        let mut replies = vec![EMPTY; n - 1];
        replies.extend([GOOD, GOOD, GOOD]);
        let m = ScriptedModel::queue(replies);
        let initial = generate_lf(&m, &s, "PROMPT").map_err(|e| e.to_string())?;
        let t = run_egf(&m, &s, &kb, "PROMPT", initial, 4);
        check(
            t.status == EgfStatus::NonEmptyAnswer,
            format!("n={n}: {:?}", t.status),
        )?;
        check(
            t.iterations.len() == n && t.llm_calls == n,
            format!("n={n}: {} generations", t.iterations.len()),
        )?;
        check(
            m.calls() == n,
            format!("n={n}: model called {} times", m.calls()),
        )?;
    }
    let m = ScriptedModel::queue([EMPTY; 10]);
    let initial = generate_lf(&m, &s, "PROMPT").map_err(|e| e.to_string())?;
    let t = run_egf(&m, &s, &kb, "PROMPT", initial, 4);
    check(
        t.status == EgfStatus::MaxItersExhausted,
        format!("never-succeeding: {:?}", t.status),
    )?;
    check(
        t.iterations.len() == 5 && m.calls() == 5,
        format!("never-succeeding: {} generations", m.calls()),
    )?;
    Ok("success at n = 1..5 takes exactly n generations and no further calls; failure stops at 5 with MaxItersExhausted".into())
}

/// Jensen-Shannon divergence written out directly, base 2.
fn jsd_oracle(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (x / y).log2())
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
    0.5 * kl(p, &m) + 0.5 * kl(q, &m)
}

fn metrics() -> Outcome {
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let f = |a: &[&str], b: &[&str]| {
        let r = answer_f1_strings(&set(a), &set(b));
        (r.precision, r.recall, r.f1)
    };
    check(
        f(&["a", "b"], &["a", "b"]) == (1.0, 1.0, 1.0),
        "identical sets",
    )?;
    check(f(&["a"], &["b"]) == (0.0, 0.0, 0.0), "disjoint sets")?;
    check(
        f(&["a", "b"], &["b", "c"]) == (0.5, 0.5, 0.5),
        "{a,b} vs {b,c}",
    )?;

    let jsd = |p: &[f64], q: &[f64]| js_divergence(p, q, 2.0).map_err(|e| e.to_string());
    check(
        jsd(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5])? == 0.0,
        "identical JSD",
    )?;
    let disjoint = jsd(&[1.0, 0.0], &[0.0, 1.0])?;
    check(
        (disjoint - 1.0).abs() < 1e-12,
        format!("disjoint JSD {disjoint}"),
    )?;
    let got = jsd(&[0.5, 0.5], &[1.0, 0.0])?;
    let want = jsd_oracle(&[0.5, 0.5], &[1.0, 0.0]);
    check(
        (want - 0.31128).abs() < 1e-5,
        format!("oracle gives {want}"),
    )?;
    check(
        (got - want).abs() < 1e-5,
        format!("JSD {got}, oracle {want}"),
    )?;
    Ok(format!("F1 cases exact; JSD identical 0, disjoint {disjoint}, [0.5,0.5] vs [1,0] = {got:.5} (oracle {want:.5})"))
}

fn end_to_end_determinism() -> Outcome {
    let io = |e: std::io::Error| e.to_string();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let a = run_pipeline(toy_config(dirs[0].path())).map_err(|e| e.to_string())?;
    run_pipeline(toy_config(dirs[1].path())).map_err(|e| e.to_string())?;
    let first = fs::read(dirs[0].path().join("manifest.jsonl")).map_err(io)?;
    let second = fs::read(dirs[1].path().join("manifest.jsonl")).map_err(io)?;
    check(first == second, "cold runs differ")?;

    let text = String::from_utf8(first.clone()).map_err(|e| e.to_string())?;
    let head: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
    fs::write(dirs[2].path().join("manifest.jsonl"), head).map_err(io)?;
    let resumed = run_pipeline(toy_config(dirs[2].path())).map_err(|e| e.to_string())?;
    check(
        resumed.skipped == 5 && resumed.processed == 5,
        "resume did not skip 5",
    )?;
    check(
        fs::read(dirs[2].path().join("manifest.jsonl")).map_err(io)? == first,
        "resumed run differs",
    )?;

    let scripted_feedback = [0, 0, 0, 0, 0, 0, 1, 1, 2, 3];
    check(
        a.records.len() == 10,
        format!("{} records", a.records.len()),
    )?;
    for (r, fb) in a.records.iter().zip(scripted_feedback) {
        let c = &r.api_calls;
        check(
            (c.rerank, c.generation, c.feedback) == (3, 1, fb) && c.total() == 4 + fb,
            format!("{}: {c:?}", r.qid),
        )?;
    }
    let s = &a.summary.api_calls;
    check(
        (s.feedback - 0.7).abs() < 1e-12 && (s.total - 4.7).abs() < 1e-12,
        format!("averages {s:?}"),
    )?;
    Ok(format!(
        "10-question manifests byte-identical across 2 cold runs and a resume from 5; calls 3 + 1 + feedback, average {:.1} feedback, {:.1} total",
        s.feedback, s.total
    ))
}

fn recall_metric() -> Outcome {
    let schema = toy_schema();
    let forms = [
        ("r1", "(JOIN (R toy.person.born_in) m.p0)"),
        ("r2", "(AND toy.team (JOIN toy.team.based_in m.c0))"),
        ("r3", "(JOIN (R toy.city.located_in) m.c1)"),
        (
            "r4",
            "(JOIN toy.person.plays_for (JOIN toy.team.based_in m.c1))",
        ),
    ];
    let mut gold: BTreeMap<String, ElementBag> = BTreeMap::new();
    for (qid, f) in forms {
        let q = sexpr_to_sparql(&parse_sexpr(f).unwrap()).unwrap();
        gold.insert(
            qid.into(),
            extract_elements(&q, &schema).map_err(|e| e.to_string())?,
        );
    }
    let first =
        |qid: &str, rels: &[&str], classes: &[&str]| retrieval("first", qid, &[], rels, classes);
    let mut runs: BTreeMap<String, Vec<RetrievalResult>> = BTreeMap::new();
    runs.insert("r1".into(), vec![first("r1", &["toy.person.born_in"], &[])]);
    runs.insert(
        "r2".into(),
        vec![first("r2", &["toy.team.based_in"], &["toy.team"])],
    );
    runs.insert(
        "r3".into(),
        vec![retrieval(
            "first",
            "r3",
            &["(JOIN (R toy.city.located_in) m.c0)"],
            &[],
            &[],
        )],
    );
    runs.insert(
        "r4".into(),
        vec![first("r4", &["toy.person.plays_for"], &["toy.person"])],
    );
    let one = recall_error_rate(&runs, &gold, &schema).map_err(|e| e.to_string())?;
    check(one == 25.0, format!("one retriever: {one}"))?;

    let second = parse_sparql("SELECT DISTINCT ?x WHERE { ?x ns:toy.person.plays_for ?y . ?y ns:toy.team.based_in ns:m.c1 . }")
        .unwrap()
        .serialize();
    runs.get_mut("r4")
        .unwrap()
        .push(retrieval("second", "r4", &[&second], &[], &[]));
    let two = recall_error_rate(&runs, &gold, &schema).map_err(|e| e.to_string())?;
    check(two == 0.0, format!("two retrievers: {two}"))?;
    Ok(format!(
        "one retriever {one:.1}, with the second retriever {two:.1}"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("compiler soundness", compiler_soundness),
        ("equivalence-checker precision", equivalence_precision),
        ("re-rank contract", rerank_contract),
        ("merge budgets", merge_budget_sizes),
        ("feedback-loop bound", egf_bound),
        ("metrics", metrics),
        ("end-to-end determinism", end_to_end_determinism),
        ("recall metric", recall_metric),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
