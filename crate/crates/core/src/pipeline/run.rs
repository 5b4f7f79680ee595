//! The per-question pipeline and the batch runner.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{load_dataset, DatasetError, Question};
use crate::egf::{run_egf, EgfStatus};
use crate::generate::{
    fit_generation_prompt, generate_lf, select_exemplars, AspectBudget, CharEstimator, Exemplar,
    QuestionContext,
};
use crate::kb::{load_triples, KbBackend, SparqlEndpoint};
use crate::llm::{CachedModel, ChatModel, HttpChatClient, LlmError, Sampling, ScriptedModel};
use crate::logical_form::{Schema, SparqlQuery};
use crate::rerank::{rerank_aspect, Aspect, RerankRequest};
use crate::retrieval::{
    load_retrieval, truncate_topk, DataPath, HttpRetriever, RetrievalError, RetrievalResult, TopK,
};

use super::config::{ConfigError, KbConfig, LlmBackend, RunConfig, Stage};
use super::manifest::{
    review_queue, score, summarize, GenerationRecord, QuestionRecord, RecordStatus,
    RetrieverRecord, Summary,
};

pub const MANIFEST: &str = "manifest.jsonl";
pub const SUMMARY: &str = "summary.json";
pub const REVIEW: &str = "review.jsonl";
pub const TIMINGS: &str = "timings.jsonl";
pub const CACHE_DIR: &str = "cache";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{0}")]
    Kb(String),
    #[error("exemplar {qid}: {message}")]
    Exemplar { qid: String, message: String },
    #[error("{0}")]
    Io(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

enum RetrieverSource {
    File {
        id: String,
        results: BTreeMap<String, RetrievalResult>,
    },
    Http(String, HttpRetriever),
}

impl RetrieverSource {
    fn id(&self) -> &str {
        match self {
            RetrieverSource::File { id, .. } | RetrieverSource::Http(id, _) => id,
        }
    }

    fn fetch(&self, q: &Question) -> Result<RetrievalResult, RetrievalError> {
        match self {
            RetrieverSource::File { id, results } => Ok(results
                .get(&q.qid)
                .cloned()
                .unwrap_or_else(|| RetrievalResult::absent(id, &q.qid))),
            RetrieverSource::Http(_, h) => h.retrieve(&q.qid, &q.question, &q.entities),
        }
    }
}

/// The model and knowledge base a run talks to.
#[derive(Clone)]
pub struct Services {
    pub llm: Arc<dyn ChatModel>,
    pub kb: Arc<dyn KbBackend>,
}

impl Services {
    /// Builds the backends named in the config. The response cache lives
    /// under the output directory.
    pub fn from_config(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let base: Arc<dyn ChatModel> = match cfg.llm.backend {
            LlmBackend::Script => {
                let path = cfg
                    .llm
                    .script
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("missing llm.script".into()))?;
                Arc::new(
                    ScriptedModel::from_path(path)?.with_miss_dir(cfg.output_dir.join("misses")),
                )
            }
            LlmBackend::Http => {
                let http = cfg
                    .llm
                    .http
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("missing [llm.http]".into()))?;
                Arc::new(HttpChatClient::new(http))
            }
        };
        let llm: Arc<dyn ChatModel> = if cfg.llm.cache {
            Arc::new(CachedModel::new(base, cfg.output_dir.join(CACHE_DIR)))
        } else {
            base
        };
        let kb: Arc<dyn KbBackend> = match &cfg.kb {
            KbConfig::Triples { path } => {
                Arc::new(load_triples(path).map_err(|e| PipelineError::Kb(e.to_string()))?)
            }
            KbConfig::Endpoint(e) => Arc::new(SparqlEndpoint::new(e.clone())),
        };
        Ok(Services { llm, kb })
    }
}

/// Wall-clock milliseconds per stage; written beside the manifest.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timing {
    pub qid: String,
    pub retrieval_ms: f64,
    pub rerank_ms: f64,
    pub generate_ms: f64,
    pub egf_ms: f64,
    pub total_ms: f64,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

pub struct Pipeline {
    cfg: RunConfig,
    schema: Schema,
    sampling: Sampling,
    budget: AspectBudget,
    dataset: Vec<Question>,
    retrievers: Vec<RetrieverSource>,
    exemplars: Vec<Exemplar>,
    exemplar_ids: Vec<String>,
    services: Services,
}

impl Pipeline {
    /// Loads every input named in the config and selects the exemplars.
    pub fn new(cfg: RunConfig, services: Services) -> Result<Self, PipelineError> {
        cfg.check()?;
        let schema = cfg.schema.load()?;
        let dataset = load_dataset(&cfg.dataset)?;
        let mut retrievers = Vec::new();
        for r in &cfg.retrievers {
            retrievers.push(match (&r.file, &r.url) {
                (Some(f), _) => RetrieverSource::File {
                    id: r.id.clone(),
                    results: load_retrieval(f, &r.id)?,
                },
                (None, Some(u)) => RetrieverSource::Http(
                    r.id.clone(),
                    HttpRetriever::new(&r.id, u, Duration::from_secs_f64(r.timeout_secs)),
                ),
                (None, None) => unreachable!("checked by RunConfig::check"),
            });
        }
        let budget = cfg.effective_budget();
        let mut p = Pipeline {
            sampling: cfg.llm.sampling(),
            cfg,
            schema,
            budget,
            dataset,
            retrievers,
            exemplars: Vec::new(),
            exemplar_ids: Vec::new(),
            services,
        };
        p.load_exemplars()?;
        Ok(p)
    }

    /// Exemplars are drawn once per run and carry their retrieval cut to
    /// the generation budget without re-ranking.
    fn load_exemplars(&mut self) -> Result<(), PipelineError> {
        let Some(path) = self.cfg.exemplar_pool() else {
            return Ok(());
        };
        if self.budget.shots == 0 {
            return Ok(());
        }
        let pool = load_dataset(path)?;
        let chosen = select_exemplars(&pool, self.budget.shots, self.cfg.seed).map_err(|e| {
            PipelineError::Exemplar {
                qid: String::new(),
                message: e.to_string(),
            }
        })?;
        let cut = TopK {
            paths: self.budget.paths,
            relations: self.budget.relations,
            classes: self.budget.classes,
        };
        for q in chosen {
            let gold = match q.gold_query(&self.schema) {
                Some(Ok(g)) => g,
                Some(Err(e)) => {
                    return Err(PipelineError::Exemplar {
                        qid: q.qid,
                        message: e.to_string(),
                    })
                }
                None => {
                    return Err(PipelineError::Exemplar {
                        qid: q.qid,
                        message: "no gold logical form".into(),
                    })
                }
            };
            let mut retrievals = Vec::new();
            for r in &self.retrievers {
                retrievals.push(truncate_topk(&r.fetch(&q)?, &cut));
            }
            self.exemplar_ids.push(q.qid.clone());
            self.exemplars.push(Exemplar {
                context: QuestionContext {
                    question: q.question,
                    entities: q.entities,
                    retrievals,
                },
                gold_sparql: gold.serialize(),
            });
        }
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &[Question] {
        &self.dataset
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn exemplar_ids(&self) -> &[String] {
        &self.exemplar_ids
    }

    fn aspect_k(&self, a: Aspect) -> usize {
        match a {
            Aspect::Paths => self.budget.paths,
            Aspect::Relations => self.budget.relations,
            Aspect::Classes => self.budget.classes,
        }
    }

    fn rerank_one(
        &self,
        q: &Question,
        fetched: RetrievalResult,
        rec: &mut QuestionRecord,
    ) -> Result<RetrieverRecord, String> {
        let mut reranked = fetched.clone();
        let mut outcomes = Vec::new();
        for aspect in Aspect::ALL {
            let candidates: Vec<String> = match aspect {
                Aspect::Paths => fetched
                    .paths
                    .iter()
                    .flatten()
                    .map(|p| p.text.clone())
                    .collect(),
                Aspect::Relations => fetched.relations.clone().unwrap_or_default(),
                Aspect::Classes => fetched.classes.clone().unwrap_or_default(),
            };
            if candidates.is_empty() {
                continue;
            }
            let req = RerankRequest {
                aspect,
                question: q.question.clone(),
                entities: q.entities.clone(),
                candidates,
                k: self.aspect_k(aspect),
            };
            rec.api_calls.rerank += 1;
            let out = rerank_aspect(self.services.llm.as_ref(), &self.sampling, &req)
                .map_err(|e| format!("re-ranking {aspect:?} for {}: {e}", fetched.retriever))?;
            match aspect {
                Aspect::Paths => {
                    reranked.paths =
                        Some(out.selected.iter().cloned().map(DataPath::from).collect())
                }
                Aspect::Relations => reranked.relations = Some(out.selected.clone()),
                Aspect::Classes => reranked.classes = Some(out.selected.clone()),
            }
            outcomes.push(out);
        }
        Ok(RetrieverRecord {
            retriever: fetched.retriever.clone(),
            reranked,
            rerank: outcomes,
        })
    }

    /// Runs one question through the configured stages. Failures end up in
    /// the returned record, never as an `Err`.
    pub fn process(&self, q: &Question, timing: &mut Timing) -> QuestionRecord {
        let start = Instant::now();
        timing.qid = q.qid.clone();
        let mut rec = QuestionRecord::new(&q.qid, self.cfg.stage);
        let result = self.process_inner(q, &mut rec, timing);
        timing.total_ms = ms(start);
        match result {
            Ok(()) => rec,
            Err(e) => rec.fail(e),
        }
    }

    fn process_inner(
        &self,
        q: &Question,
        rec: &mut QuestionRecord,
        timing: &mut Timing,
    ) -> Result<(), String> {
        let t = Instant::now();
        let mut fetched = Vec::new();
        for r in &self.retrievers {
            let got = r
                .fetch(q)
                .map_err(|e| format!("retriever {}: {e}", r.id()))?;
            fetched.push(truncate_topk(&got, &self.cfg.topk));
        }
        timing.retrieval_ms = ms(t);

        let t = Instant::now();
        for f in fetched {
            let r = self.rerank_one(q, f, rec)?;
            rec.retrieval.push(r);
        }
        timing.rerank_ms = ms(t);
        if self.cfg.stage == Stage::Rerank {
            return Ok(());
        }

        let t = Instant::now();
        let ctx = QuestionContext {
            question: q.question.clone(),
            entities: q.entities.clone(),
            retrievals: rec.retrieval.iter().map(|r| r.reranked.clone()).collect(),
        };
        let (prompt, kept) = fit_generation_prompt(
            &ctx,
            &self.exemplars,
            self.cfg.prompt_template,
            &self.budget,
            &CharEstimator,
            self.cfg.token_ceiling,
        )
        .map_err(|e| e.to_string())?;
        rec.exemplars = self.exemplar_ids[..kept].to_vec();
        rec.prompt = Some(prompt.clone());
        rec.api_calls.generation += 1;
        let gen = generate_lf(self.services.llm.as_ref(), &self.sampling, &prompt)
            .map_err(|e| format!("generation: {e}"))?;
        timing.generate_ms = ms(t);
        if self.cfg.stage == Stage::Generate {
            rec.final_query = gen.query.as_ref().ok().map(SparqlQuery::serialize);
            rec.generation = Some(GenerationRecord {
                raw: gen.raw,
                query: rec.final_query.clone(),
                parse_error: gen.query.err().map(|e| e.to_string()),
            });
            return Ok(());
        }

        let t = Instant::now();
        let trace = run_egf(
            self.services.llm.as_ref(),
            &self.sampling,
            self.services.kb.as_ref(),
            &prompt,
            gen,
            self.cfg.max_egf_iters,
        );
        timing.egf_ms = ms(t);
        rec.api_calls.feedback = trace.feedback_calls();
        rec.final_query = trace.final_query().map(str::to_string);
        rec.final_answers = trace.final_answers().to_strings().into_iter().collect();
        let failed = (trace.status == EgfStatus::UnrecoverableError)
            .then(|| trace.error.clone().unwrap_or_default());
        rec.egf = Some(trace);
        if let Some(e) = failed {
            return Err(format!("feedback loop: {e}"));
        }
        rec.metrics = score(
            &rec.final_answers,
            rec.final_query.as_deref(),
            q,
            &self.schema,
        );
        Ok(())
    }

    /// Content hashes of every input file.
    pub fn input_hashes(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let c = &self.cfg;
        let mut files: Vec<(String, &Path)> = vec![("dataset".into(), c.dataset.as_path())];
        if let Some(p) = c.exemplar_pool() {
            files.push(("exemplars".into(), p));
        }
        for r in &c.retrievers {
            if let Some(f) = &r.file {
                files.push((format!("retriever:{}", r.id), f));
            }
        }
        if let (LlmBackend::Script, Some(s)) = (c.llm.backend, &c.llm.script) {
            files.push(("script".into(), s));
        }
        if let KbConfig::Triples { path } = &c.kb {
            files.push(("kb".into(), path));
        }
        for (name, p) in [
            ("classes", &c.schema.classes),
            ("relations", &c.schema.relations),
        ] {
            if let Some(p) = p {
                files.push((name.into(), p));
            }
        }
        files
            .into_iter()
            .map(|(k, p)| Ok((k, sha256_file(p)?)))
            .collect()
    }

    pub fn run(&self) -> Result<RunOutcome, PipelineError> {
        let out = &self.cfg.output_dir;
        fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        let manifest_path = out.join(MANIFEST);
        let existing = read_manifest_for_resume(&manifest_path)?;
        let done: HashSet<&str> = existing.iter().map(|r| r.qid.as_str()).collect();
        let todo: Vec<&Question> = self
            .dataset
            .iter()
            .filter(|q| !done.contains(q.qid.as_str()))
            .collect();
        info!(
            "{} questions, {} already in the manifest, {} to run",
            self.dataset.len(),
            existing.len(),
            todo.len()
        );
        let skipped = existing.len();
        let fresh = self.run_batch(&todo, &manifest_path, &out.join(TIMINGS))?;

        let mut all = existing;
        all.extend(fresh);
        let order: BTreeMap<&str, usize> = self
            .dataset
            .iter()
            .enumerate()
            .map(|(i, q)| (q.qid.as_str(), i))
            .collect();
        let pos = |r: &QuestionRecord| order.get(r.qid.as_str()).copied().unwrap_or(usize::MAX);
        if all.windows(2).any(|w| pos(&w[0]) > pos(&w[1])) {
            all.sort_by_key(|r| pos(r));
            write_jsonl(&manifest_path, &all)?;
        }

        let mut summary = summarize(&all, &self.dataset, &self.schema);
        summary.hashes = self.input_hashes()?;
        summary.config = serde_json::to_value(&self.cfg).ok();
        let text =
            serde_json::to_string_pretty(&summary).map_err(|e| PipelineError::Io(e.to_string()))?;
        let sp = out.join(SUMMARY);
        fs::write(&sp, text + "\n").map_err(|e| io_err(&sp, e))?;
        write_jsonl(
            &out.join(REVIEW),
            &review_queue(&all, &self.dataset, &self.schema),
        )?;
        Ok(RunOutcome {
            processed: all.len() - skipped,
            skipped,
            records: all,
            summary,
        })
    }

    /// Processes `todo` on a worker pool and appends records to the manifest
    /// in `todo` order as they become available.
    fn run_batch(
        &self,
        todo: &[&Question],
        manifest: &Path,
        timings: &Path,
    ) -> Result<Vec<QuestionRecord>, PipelineError> {
        let open = |p: &Path| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map(BufWriter::new)
                .map_err(|e| io_err(p, e))
        };
        let mut mw = open(manifest)?;
        let mut tw = open(timings)?;
        let next = AtomicUsize::new(0);
        let workers = self.cfg.workers.min(todo.len()).max(1);
        let (tx, rx) = mpsc::channel::<(usize, QuestionRecord, Timing)>();
        let mut written = Vec::with_capacity(todo.len());
        let mut write_err: Option<PipelineError> = None;
        thread::scope(|s| {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(q) = todo.get(i) else { break };
                    let mut timing = Timing::default();
                    let rec = catch_unwind(AssertUnwindSafe(|| self.process(q, &mut timing)))
                        .unwrap_or_else(|p| {
                            let msg = p
                                .downcast_ref::<&str>()
                                .map(|s| s.to_string())
                                .or_else(|| p.downcast_ref::<String>().cloned())
                                .unwrap_or_else(|| "unknown panic".into());
                            QuestionRecord::new(&q.qid, self.cfg.stage)
                                .fail(format!("panic: {msg}"))
                        });
                    if tx.send((i, rec, timing)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            let mut pending: BTreeMap<usize, (QuestionRecord, Timing)> = BTreeMap::new();
            for (i, rec, timing) in rx {
                pending.insert(i, (rec, timing));
                while let Some((rec, timing)) = pending.remove(&written.len()) {
                    if rec.status == RecordStatus::Error {
                        warn!("{}: {}", rec.qid, rec.error.as_deref().unwrap_or(""));
                    }
                    if write_err.is_none() {
                        let r = append_line(&mut mw, &rec)
                            .and_then(|_| append_line(&mut tw, &timing))
                            .map_err(|e| io_err(manifest, e));
                        write_err = r.err();
                    }
                    written.push(rec);
                }
            }
        });
        match write_err {
            Some(e) => Err(e),
            None => Ok(written),
        }
    }
}

fn append_line<T: Serialize>(w: &mut BufWriter<File>, v: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n")?;
    w.flush()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it).map_err(|e| PipelineError::Io(e.to_string()))?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<QuestionRecord>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| PipelineError::Io(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Complete records of an earlier run. A torn last line is cut off so that
/// appending continues from a clean state.
fn read_manifest_for_resume(path: &Path) -> Result<Vec<QuestionRecord>, PipelineError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    let mut good = 0;
    for line in text.split_inclusive('\n') {
        if !line.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<QuestionRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if line.trim().is_empty() => {}
            Err(_) => break,
        }
        good += line.len();
    }
    if good < text.len() {
        warn!(
            "{}: dropping {} trailing bytes",
            path.display(),
            text.len() - good
        );
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        f.set_len(good as u64).map_err(|e| io_err(path, e))?;
    }
    Ok(records)
}

pub struct RunOutcome {
    /// Every record in the manifest, resumed ones included.
    pub records: Vec<QuestionRecord>,
    pub summary: Summary,
    pub processed: usize,
    pub skipped: usize,
}

/// Loads the config, builds the configured services and runs.
pub fn run_pipeline(cfg: RunConfig) -> Result<RunOutcome, PipelineError> {
    let services = Services::from_config(&cfg)?;
    Pipeline::new(cfg, services)?.run()
}

/// Input checks beyond the config itself: every file loads, every
/// exemplar has a gold form, every gold form compiles.
pub fn validate(cfg: &RunConfig) -> Result<Vec<String>, PipelineError> {
    let mut notes = Vec::new();
    let services = Services::from_config(cfg)?;
    let p = Pipeline::new(cfg.clone(), services)?;
    for q in p.dataset() {
        match q.gold_query(p.schema()) {
            Some(Err(e)) => notes.push(format!("{}: gold logical form does not parse: {e}", q.qid)),
            None if q.gold_answers.is_empty() => {
                notes.push(format!("{}: no gold answers or logical form", q.qid))
            }
            _ => {}
        }
    }
    Ok(notes)
}
