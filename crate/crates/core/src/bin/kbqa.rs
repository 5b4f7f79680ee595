//! `kbqa`: command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 the run
//! finished but some questions failed. Errors are printed to stderr as one
//! JSON object.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kbqa_core::dataset::load_dataset;
use kbqa_core::eval::{dataset_stats, em_classify, Verdict};
use kbqa_core::logical_form::schema::DEFAULT_TYPE_RELATION;
use kbqa_core::logical_form::{parse_sparql, Compiler, EntityPattern, Schema, SexprParser};
use kbqa_core::pipeline::{
    read_manifest, run_pipeline, score, summarize, validate, RunConfig, SchemaConfig, Stage,
};

#[derive(Parser)]
#[command(
    name = "kbqa",
    version,
    about = "Few-shot KBQA: retrieval re-ranking, SPARQL generation and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a run config and every file it references.
    Validate { config: PathBuf },
    /// Retrieve and re-rank only.
    Rerank(RunArgs),
    /// Re-rank and generate, without execution or feedback.
    Generate(RunArgs),
    /// The full pipeline.
    Run(RunArgs),
    /// Recompute metrics for a manifest against a gold dataset.
    Eval {
        manifest: PathBuf,
        gold: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        /// Config whose schema settings to use.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Source/target dataset statistics.
    Stats {
        source: PathBuf,
        target: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Compile an s-expression to SPARQL.
    Translate {
        sexpr: String,
        /// Multi-line layout.
        #[arg(long)]
        pretty: bool,
        #[arg(long, default_value = DEFAULT_TYPE_RELATION)]
        type_relation: String,
    },
    /// Classify two SPARQL files as equivalent, non-equivalent or undecided.
    Equiv {
        pred: PathBuf,
        gold: PathBuf,
        /// Answer F1 of the prediction.
        #[arg(long)]
        f1: f64,
        #[command(flatten)]
        schema: SchemaArgs,
        /// Print the element bags as JSON too.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    max_egf_iters: Option<usize>,
    /// Bypass the response cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args)]
struct SchemaArgs {
    /// One class IRI per line.
    #[arg(long, requires = "relations")]
    classes: Option<PathBuf>,
    /// One relation IRI per line.
    #[arg(long, requires = "classes")]
    relations: Option<PathBuf>,
}

impl SchemaArgs {
    fn load(&self) -> Result<Schema> {
        match (&self.classes, &self.relations) {
            (Some(c), Some(r)) => Ok(Schema::load(
                c,
                r,
                EntityPattern::default(),
                DEFAULT_TYPE_RELATION,
            )?),
            _ => Ok(Schema::default()),
        }
    }
}

/// Failure categories, mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Partial(usize),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

/// Writes a line to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    emit(&serde_json::to_string_pretty(v)?)
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run(args: RunArgs, stage: Stage) -> Result<(), Failure> {
    let mut cfg = load_config(&args.config)?;
    cfg.stage = stage;
    if let Some(o) = args.output {
        cfg.output_dir = o;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.shots {
        cfg.shots = Some(s);
    }
    if let Some(m) = args.max_egf_iters {
        cfg.max_egf_iters = m;
    }
    if args.no_cache {
        cfg.llm.cache = false;
    }
    let out = run_pipeline(cfg)?;
    print_json(&out.summary)?;
    eprintln!(
        "{} questions run, {} resumed, {} failed",
        out.processed, out.skipped, out.summary.errors
    );
    if out.summary.errors > 0 {
        return Err(Failure::Partial(out.summary.errors));
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let notes = validate(&cfg)?;
            for n in &notes {
                eprintln!("{n}");
            }
            if !notes.is_empty() {
                return Err(Failure::Usage(anyhow!("{} problems found", notes.len())));
            }
            emit("ok")?;
        }
        Command::Rerank(a) => run(a, Stage::Rerank)?,
        Command::Generate(a) => run(a, Stage::Generate)?,
        Command::Run(a) => run(a, Stage::Full)?,
        Command::Eval {
            manifest,
            gold,
            schema,
            config,
        } => {
            let schema = match config {
                Some(c) => load_config(&c)?.schema.load()?,
                None if schema.classes.is_some() => schema.load()?,
                None => SchemaConfig::default().load()?,
            };
            let dataset = load_dataset(&gold)?;
            let mut records = read_manifest(&manifest)?;
            for r in &mut records {
                if let Some(q) = dataset.iter().find(|q| q.qid == r.qid) {
                    if r.egf.is_some() {
                        r.metrics = score(&r.final_answers, r.final_query.as_deref(), q, &schema);
                    }
                }
            }
            print_json(&summarize(&records, &dataset, &schema))?;
        }
        Command::Stats {
            source,
            target,
            schema,
        } => {
            let schema = schema.load()?;
            let report = dataset_stats(&load_dataset(&source)?, &load_dataset(&target)?, &schema)?;
            print_json(&report)?;
        }
        Command::Translate {
            sexpr,
            pretty,
            type_relation,
        } => {
            let pattern = EntityPattern::default();
            let e = SexprParser::new(&pattern).parse(&sexpr)?;
            let q = Compiler::new(&type_relation).compile(&e)?;
            emit(&if pretty { q.to_pretty() } else { q.serialize() })?;
        }
        Command::Equiv {
            pred,
            gold,
            f1,
            schema,
            json,
        } => {
            let read = |p: &Path| fs::read_to_string(p).with_context(|| p.display().to_string());
            let p = parse_sparql(&read(&pred)?)?;
            let g = parse_sparql(&read(&gold)?)?;
            let v = em_classify(&p, &g, f1, &schema.load()?);
            if json {
                print_json(&v)?;
            } else {
                emit(match v.verdict {
                    Verdict::Equivalent => "EQUIVALENT",
                    Verdict::NonEquivalent => "NON_EQUIVALENT",
                    Verdict::NoDecision => "NO_DECISION",
                })?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({"error": "usage", "message": e.to_string().trim_end()})
            );
            return ExitCode::from(1);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!(
                "{}",
                json!({"error": "failed", "message": format!("{e:#}")})
            );
            ExitCode::from(1)
        }
        Err(Failure::Partial(n)) => {
            eprintln!("{}", json!({"error": "partial", "failed_questions": n}));
            ExitCode::from(2)
        }
    }
}
