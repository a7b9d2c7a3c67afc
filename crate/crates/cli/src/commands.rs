use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use kgexplain::analysis::{build_tables, compare_costs, text_baseline_cost, AverageCost, CostRecord};
use kgexplain::explain::{write_explanation_records, ExplanationReport};
use kgexplain::extraction::load_corpus;
use kgexplain::fixtures::{self, read_questions, SYNTHETIC_SEED};
use kgexplain::generator::{
    Backend, GeneratorClient, LiveBackend, MockBackend, MockRuleTable, RecordingBackend, ReplayBackend, UreqTransport,
};
use kgexplain::kg_store::KnowledgeGraph;
use kgexplain::perturbation::{read_suite_records, run_suite, write_suite_records, Question, SuiteResult};
use kgexplain::pipeline::{build_graph, chunk_corpus, ExplainResult, Pipeline, Templates};
use kgexplain::retrieval::{path_to_pseudo_paragraph, ChunkIndex, ContextOrigin, RetrievedPath};
use kgexplain::{whitespace_tokens, Error};

use crate::config::{BackendKind, RunConfig};
use crate::{CmdResult, Exit, Failure};

#[derive(Debug, Clone, Args)]
pub struct QuestionArgs {
    /// Questions file: one {id, question, options, answer?, dataset?} per line.
    #[arg(long, conflicts_with = "question")]
    pub questions: Option<PathBuf>,
    /// A single question, with its options given by repeated --option.
    #[arg(long, requires = "options")]
    pub question: Option<String>,
    #[arg(long = "option")]
    pub options: Vec<String>,
    /// Id for a single --question.
    #[arg(long, default_value = "q")]
    pub id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FixtureKind {
    WorkedExample,
    Synthetic,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> CmdResult<String> {
    let mut s = serde_json::to_string_pretty(value).context("serializing output")?;
    s.push('\n');
    Ok(s)
}

fn make_client(cfg: &RunConfig) -> CmdResult<GeneratorClient> {
    let backend: Box<dyn Backend> = match cfg.backend {
        BackendKind::Mock => {
            let path = cfg
                .mock_rules
                .as_ref()
                .ok_or_else(|| Failure::new(Exit::Config, anyhow!("the mock backend needs --mock-rules")))?;
            let table = MockRuleTable::load(path).map_err(|e| Failure::new(Exit::Config, e))?;
            Box::new(MockBackend::new(table))
        }
        BackendKind::Replay => {
            let dir = cfg
                .replay_dir
                .as_ref()
                .ok_or_else(|| Failure::new(Exit::Config, anyhow!("the replay backend needs --replay-dir")))?;
            if !dir.is_dir() {
                return Err(Failure::new(
                    Exit::Config,
                    anyhow!("replay directory {} not found", dir.display()),
                ));
            }
            Box::new(ReplayBackend::new(dir))
        }
        BackendKind::Live => {
            let live = LiveBackend::from_env(cfg.live.clone(), Box::new(UreqTransport::new(cfg.timeout)));
            match &cfg.record_dir {
                Some(dir) => Box::new(RecordingBackend::new(live, dir).map_err(|e| Failure::new(Exit::Config, e))?),
                None => Box::new(live),
            }
        }
    };
    Ok(GeneratorClient::with_in_flight(backend, cfg.in_flight))
}

fn load_graph(cfg: &RunConfig) -> CmdResult<KnowledgeGraph> {
    let mut g = KnowledgeGraph::load(&cfg.graph)
        .with_context(|| format!("loading graph {}", cfg.graph.display()))
        .map_err(|e| Failure::new(Exit::Input, e))?;
    g.freeze();
    Ok(g)
}

/// BM25 index over the corpus; empty when no corpus is configured.
fn load_index(cfg: &RunConfig) -> CmdResult<ChunkIndex> {
    let Some(path) = &cfg.corpus else {
        return Ok(ChunkIndex::new(Vec::new()));
    };
    let docs = load_corpus(path).map_err(|e| Failure::new(Exit::Input, e))?;
    Ok(ChunkIndex::new(chunk_corpus(&docs, cfg.chunk_size)))
}

fn load_questions(args: &QuestionArgs) -> CmdResult<Vec<Question>> {
    if let Some(path) = &args.questions {
        return read_questions(path).map_err(|e| Failure::new(Exit::Input, e));
    }
    let Some(text) = &args.question else {
        return Err(Failure::new(
            Exit::Config,
            anyhow!("give --questions FILE or --question TEXT with --option"),
        ));
    };
    let q = Question {
        id: args.id.clone(),
        question: text.clone(),
        options: args.options.clone(),
        answer: None,
        dataset: None,
    };
    q.validate().map_err(|e| Failure::new(Exit::Config, e))?;
    Ok(vec![q])
}

/// Map over questions on `jobs` worker threads, keeping input order.
fn for_each_question<T: Send>(
    cfg: &RunConfig,
    questions: &[Question],
    f: impl Fn(&Question) -> T + Sync + Send,
) -> CmdResult<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("starting worker pool")?;
    Ok(pool.install(|| questions.par_iter().map(f).collect()))
}

pub fn build_kg(cfg: &RunConfig) -> CmdResult {
    let corpus = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| Failure::new(Exit::Config, anyhow!("build-kg needs --corpus")))?;
    let docs = load_corpus(corpus).map_err(|e| Failure::new(Exit::Input, e))?;
    if docs.is_empty() {
        return Err(Failure::new(
            Exit::Input,
            anyhow!("corpus {} holds no documents", corpus.display()),
        ));
    }
    let client = make_client(cfg)?;
    let templates = Templates::default();
    let (g, report) = build_graph(&docs, &client, &templates.extraction, cfg.chunk_size, cfg.in_flight)?;
    if report.accepted == 0 {
        return Err(Failure::new(
            Exit::Input,
            anyhow!("no triplets were extracted from the corpus"),
        ));
    }
    if let Some(parent) = cfg.graph.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    g.save(&cfg.graph)?;
    write_file(&cfg.out.join("build_report.json"), to_json(&report)?)?;

    print!("{}", report.stats);
    println!(
        "documents {}  chunks {}  triplets accepted {}  rejected {}  skipped lines {}  label conflicts {}",
        report.documents, report.chunks, report.accepted, report.rejected, report.skipped_lines, report.label_conflicts
    );
    println!("graph written to {}", cfg.graph.display());
    Ok(())
}

fn pipeline<'a>(
    cfg: &RunConfig,
    graph: &'a KnowledgeGraph,
    index: &'a ChunkIndex,
    client: &'a GeneratorClient,
    templates: &'a Templates,
) -> Pipeline<'a> {
    Pipeline {
        graph,
        index,
        client,
        templates,
        settings: cfg.retrieval,
        in_flight: cfg.in_flight,
        bands: cfg.bands,
    }
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn render_path(p: &RetrievedPath) -> String {
    let mut out = String::new();
    for i in 0..p.edge_count() {
        let (head, tail) = p.edge_endpoints(i);
        let _ = writeln!(out, "- {head} -> {} -> {tail}", p.edges[i].predicate);
    }
    if p.edges.is_empty() {
        let _ = writeln!(out, "- {}", p.nodes[0].name);
    }
    out
}

pub fn ask(cfg: &RunConfig, args: &QuestionArgs) -> CmdResult {
    let questions = load_questions(args)?;
    let graph = load_graph(cfg)?;
    let index = load_index(cfg)?;
    let client = make_client(cfg)?;
    let templates = Templates::default();
    let p = pipeline(cfg, &graph, &index, &client, &templates);
    let results = for_each_question(cfg, &questions, |q| p.ask(q))?;
    for (q, r) in questions.iter().zip(results) {
        let r = r?;
        let option = q.option_text(r.answer.answer).unwrap_or("-");
        let origin = match r.retrieval.context.origin {
            ContextOrigin::GraphPaths => "graph paths",
            ContextOrigin::Fallback => "fallback chunks",
        };
        println!("{}: {} ({option}) from {origin}", q.id, r.answer.answer);
        for s in &r.sources {
            println!("  source: {s}");
        }
        write_file(
            &cfg.out.join("ask").join(format!("{}.json", file_stem(&q.id))),
            to_json(&r)?,
        )?;
    }
    Ok(())
}

fn explanation_text(q: &Question, r: &ExplainResult) -> String {
    let suite = &r.suite;
    let report = &r.report;
    let mut out = String::new();
    let _ = writeln!(out, "[{}] {}", q.id, q.question);
    let _ = writeln!(
        out,
        "Selected option: {} ({})",
        suite.baseline.answer,
        q.option_text(suite.baseline.answer).unwrap_or("-")
    );
    let _ = writeln!(out, "Retrieved path:");
    out.push_str(&render_path(&suite.path));
    let _ = writeln!(out, "Explanation:");
    let _ = writeln!(out, "{}", report.user_text);
    let _ = writeln!(out, "Technical insight:");
    let _ = writeln!(out, "{}", report.technical_text);
    let _ = writeln!(out, "Sources:");
    for s in report.sources() {
        let _ = writeln!(out, "- {s}");
    }
    let _ = writeln!(
        out,
        "Cost: {} generator calls, {} tokens",
        report.cost.generator_calls, report.cost.tokens
    );
    if let Some(reason) = &report.incomplete {
        let _ = writeln!(out, "Incomplete: {reason}");
    }
    out
}

pub fn explain(cfg: &RunConfig, args: &QuestionArgs) -> CmdResult {
    let questions = load_questions(args)?;
    let graph = load_graph(cfg)?;
    let index = load_index(cfg)?;
    let client = make_client(cfg)?;
    let templates = Templates::default();
    let p = pipeline(cfg, &graph, &index, &client, &templates);
    let results = for_each_question(cfg, &questions, |q| p.explain(q))?;

    let mut suites: Vec<SuiteResult> = Vec::new();
    let mut reports: Vec<ExplanationReport> = Vec::new();
    let mut text = String::new();
    let mut fallback_only: Vec<&str> = Vec::new();
    for (q, r) in questions.iter().zip(results) {
        let r = match r {
            Ok(r) => r,
            Err(Error::NoPathsFound) => {
                fallback_only.push(&q.id);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        text.push_str(&explanation_text(q, &r));
        text.push('\n');
        write_file(
            &cfg.out.join("contexts").join(format!("{}.json", file_stem(&q.id))),
            to_json(&r.retrieval)?,
        )?;
        suites.push(r.suite);
        reports.push(r.report);
    }

    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write_suite_records(cfg.out.join("suite.jsonl"), &suites)?;
    write_explanation_records(cfg.out.join("explanations.jsonl"), &reports)?;
    write_file(&cfg.out.join("explanations.txt"), &text)?;
    print!("{text}");

    if !fallback_only.is_empty() {
        eprintln!(
            "no graph path for {} question(s), explanation skipped: {}",
            fallback_only.len(),
            fallback_only.join(", ")
        );
    }
    if suites.is_empty() {
        return Err(Failure::new(
            Exit::FallbackOnly,
            anyhow!("no question had a graph path; explanations need one"),
        ));
    }
    Ok(())
}

pub fn analyze(cfg: &RunConfig, reports: &[PathBuf]) -> CmdResult {
    if reports.is_empty() {
        return Err(Failure::new(
            Exit::Config,
            anyhow!("analyze needs at least one report file"),
        ));
    }
    let mut results = Vec::new();
    for path in reports {
        results.extend(read_suite_records(path).map_err(|e| Failure::new(Exit::Input, e))?);
    }
    if results.is_empty() {
        return Err(Failure::new(Exit::Input, anyhow!("report files hold no examples")));
    }
    let graph = load_graph(cfg)?;
    let tables = build_tables(&results, &graph).map_err(|e| Failure::new(Exit::Input, e))?;
    tables.check_consistency()?;
    let dir = cfg.out.join("tables");
    let written = tables.write_csv(&dir)?;

    let s = &tables.impact[0];
    println!("examples          {}", s.examples);
    println!("node impact       {}  (most changes in {})", s.node_impact, s.node_wins);
    println!("edge impact       {}  (most changes in {})", s.edge_impact, s.edge_wins);
    println!(
        "sub-path impact   {}  (most changes in {})",
        s.subpath_impact, s.subpath_wins
    );
    println!("no change         {}", s.no_change);
    println!("changed outcomes  {} of {}", s.changed_outcomes, s.total_outcomes);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct QuestionCostRow {
    question_id: String,
    dataset: String,
    path_nodes: usize,
    context_tokens: usize,
    suite_calls: u64,
    suite_tokens: u64,
    baseline_calls: u64,
    baseline_tokens: u64,
}

#[derive(Debug, Serialize)]
struct DatasetCostRow {
    dataset: String,
    questions: usize,
    excluded: usize,
    suite_calls: f64,
    suite_tokens: f64,
    baseline_calls: f64,
    baseline_tokens: f64,
    calls_difference: f64,
    tokens_difference: f64,
}

const QUESTION_COST_COLUMNS: [&str; 8] = [
    "question_id",
    "dataset",
    "path_nodes",
    "context_tokens",
    "suite_calls",
    "suite_tokens",
    "baseline_calls",
    "baseline_tokens",
];

const DATASET_COST_COLUMNS: [&str; 9] = [
    "dataset",
    "questions",
    "excluded",
    "suite_calls",
    "suite_tokens",
    "baseline_calls",
    "baseline_tokens",
    "calls_difference",
    "tokens_difference",
];

fn write_csv<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> CmdResult {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(columns).context("writing csv header")?;
    for r in rows {
        w.serialize(r).context("writing csv row")?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("flushing csv: {e}"))?;
    write_file(path, bytes)
}

/// Per-call overhead of the answer prompt: everything except the context.
fn prompt_overhead(q: &Question, templates: &Templates) -> String {
    templates.answer.render(&[
        ("context", ""),
        ("question", &q.question),
        ("options", &q.render_options()),
    ])
}

pub fn bench_cost(cfg: &RunConfig, questions_path: &Path) -> CmdResult {
    let questions = read_questions(questions_path).map_err(|e| Failure::new(Exit::Input, e))?;
    let graph = load_graph(cfg)?;
    let index = load_index(cfg)?;
    let client = make_client(cfg)?;
    let templates = Templates::default();
    let p = pipeline(cfg, &graph, &index, &client, &templates);
    let window = cfg.window;

    let results = for_each_question(cfg, &questions, |q| -> Result<Option<QuestionCostRow>, Error> {
        let retrieval = match p.retrieve(q) {
            Ok(r) if r.context.origin == ContextOrigin::GraphPaths => r,
            Ok(_) | Err(Error::NoContext) => return Ok(None),
            Err(e) => return Err(e),
        };
        let path = &retrieval.paths[0];
        let suite = run_suite(q, path, p.client, &templates.answer, cfg.in_flight)?;
        let context = path_to_pseudo_paragraph(path);
        let baseline = text_baseline_cost(&context, &prompt_overhead(q, &templates), window, whitespace_tokens)?;
        let cost = suite.cost();
        Ok(Some(QuestionCostRow {
            question_id: q.id.clone(),
            dataset: q.dataset.clone().unwrap_or_else(|| "default".into()),
            path_nodes: path.node_count(),
            context_tokens: whitespace_tokens(&context),
            suite_calls: cost.generator_calls,
            suite_tokens: cost.tokens,
            baseline_calls: baseline.generator_calls,
            baseline_tokens: baseline.tokens,
        }))
    })?;

    let mut rows = Vec::new();
    let mut excluded: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (q, r) in questions.iter().zip(results) {
        match r? {
            Some(row) => rows.push(row),
            None => excluded
                .entry(q.dataset.clone().unwrap_or_else(|| "default".into()))
                .or_default()
                .push(q.id.clone()),
        }
    }

    let mut by_dataset: BTreeMap<String, (Vec<CostRecord>, Vec<CostRecord>)> = BTreeMap::new();
    for r in &rows {
        let e = by_dataset.entry(r.dataset.clone()).or_default();
        e.0.push(CostRecord {
            generator_calls: r.suite_calls,
            tokens: r.suite_tokens,
        });
        e.1.push(CostRecord {
            generator_calls: r.baseline_calls,
            tokens: r.baseline_tokens,
        });
    }
    for name in excluded.keys() {
        by_dataset.entry(name.clone()).or_default();
    }
    let mut summary = Vec::new();
    for (dataset, (suite, baseline)) in &by_dataset {
        let s = AverageCost::of(suite).unwrap_or_default();
        let b = AverageCost::of(baseline).unwrap_or_default();
        let c = compare_costs(s, b);
        summary.push(DatasetCostRow {
            dataset: dataset.clone(),
            questions: suite.len(),
            excluded: excluded.get(dataset).map_or(0, Vec::len),
            suite_calls: s.generator_calls,
            suite_tokens: s.tokens,
            baseline_calls: b.generator_calls,
            baseline_tokens: b.tokens,
            calls_difference: c.calls_difference,
            tokens_difference: c.tokens_difference,
        });
    }

    write_csv(&cfg.out.join("cost_per_question.csv"), &QUESTION_COST_COLUMNS, &rows)?;
    write_csv(&cfg.out.join("cost_report.csv"), &DATASET_COST_COLUMNS, &summary)?;

    println!("window {window}");
    println!(
        "{:<16} {:>9} {:>8} {:>11} {:>12} {:>14} {:>15} {:>10} {:>11}",
        "dataset",
        "questions",
        "excluded",
        "suite calls",
        "suite tokens",
        "baseline calls",
        "baseline tokens",
        "calls diff",
        "tokens diff"
    );
    for r in &summary {
        println!(
            "{:<16} {:>9} {:>8} {:>11.2} {:>12.2} {:>14.2} {:>15.2} {:>10.2} {:>11.2}",
            r.dataset,
            r.questions,
            r.excluded,
            r.suite_calls,
            r.suite_tokens,
            r.baseline_calls,
            r.baseline_tokens,
            r.calls_difference,
            r.tokens_difference
        );
    }
    for (dataset, ids) in &excluded {
        eprintln!("{dataset}: excluded without a graph path: {}", ids.join(", "));
    }
    Ok(())
}

pub fn fixtures(cfg: &RunConfig, kind: FixtureKind, count: usize) -> CmdResult {
    let (set, manifest) = match kind {
        FixtureKind::WorkedExample => (
            fixtures::worked_example_fixture_set(),
            serde_json::json!({ "kind": "worked-example" }),
        ),
        FixtureKind::Synthetic => {
            let seed = cfg.seed.unwrap_or(SYNTHETIC_SEED);
            let bench = fixtures::synthetic_benchmark(seed, count, cfg.chunk_size);
            let manifest = serde_json::json!({
                "kind": "synthetic",
                "seed": seed,
                "questions": count,
                "chunk_size": cfg.chunk_size,
                "planted": bench.planted,
            });
            (bench.set, manifest)
        }
    };
    let mut files = set.write(&cfg.out)?;
    let manifest_path = cfg.out.join("manifest.json");
    write_file(&manifest_path, to_json(&manifest)?)?;
    files.push(manifest_path);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
