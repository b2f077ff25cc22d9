//! Single entry point wiring the library into subcommands.
//!
//! Conventions across every subcommand:
//! - machine output goes to stdout (or the file named by --out), diagnostics
//!   to stderr;
//! - exit 0 on success, 1 on a usage error, 2 on a runtime error;
//! - flags beat environment variables (LLM_API_KEY, LLM_BASE_URL, LLM_MODEL),
//!   which beat built-in defaults;
//! - subgraph inputs accept either the text serialization or subgraph JSON,
//!   sniffed by the leading character.

use std::error::Error;
use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use amlgraph::eval::{build_balanced_set, run_eval, EvalConfig, EvalReport, EvalSource};
use amlgraph::extract::{extract_khop, ExtractionConfig, Subgraph};
use amlgraph::graph_store::{CsvSchema, TransactionGraph};
use amlgraph::llm::LlmConfig;
use amlgraph::prompt::{build_prompt, default_demos, PromptConfig};
use amlgraph::serialize::{parse_serialized, serialize_with_focal_marker};
use amlgraph::typology::{
    detect, generate, generate_benign, BenignConfig, DetectorConfig, GenConfig, PatternKind,
};
use amlgraph::verdict::{normalize_pattern_name, parse_verdict, NormalizedPattern};

#[derive(Parser)]
#[command(
    name = "amlgraph",
    version,
    about = "Transaction-graph toolkit: ingest ledgers, extract and serialize subgraphs, \
             detect laundering typologies, and evaluate LLM verdicts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a transactions CSV into a binary graph cache
    Ingest(IngestArgs),
    /// Extract the k-hop neighborhood of an edge as subgraph JSON
    Extract(ExtractArgs),
    /// Render a subgraph in the text serialization
    Serialize(SerializeArgs),
    /// Parse raw model output into a structured verdict
    ParseVerdict(ParseVerdictArgs),
    /// Generate a labeled synthetic case
    Synth(SynthArgs),
    /// Run the pattern detectors over a subgraph
    Detect(DetectArgs),
    /// Assemble the few-shot prompt for a subgraph
    BuildPrompt(BuildPromptArgs),
    /// Run a balanced evaluation and write a report
    Eval(EvalArgs),
    /// Render a report as text, CSV, or JSON
    Report(ReportArgs),
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; they are not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<(), Box<dyn Error>> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Serialize(args) => cmd_serialize(args),
        Command::ParseVerdict(args) => cmd_parse_verdict(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Detect(args) => cmd_detect(args),
        Command::BuildPrompt(args) => cmd_build_prompt(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn read_input(path: &Option<PathBuf>) -> Result<String, Box<dyn Error>> {
    match path {
        Some(p) => Ok(fs::read_to_string(p)?),
        None => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text)?;
            Ok(text)
        }
    }
}

fn write_output(path: &Option<PathBuf>, content: &str) -> Result<(), Box<dyn Error>> {
    match path {
        Some(p) => fs::write(p, content)?,
        None => io::stdout().write_all(content.as_bytes())?,
    }
    Ok(())
}

fn read_subgraph(input: &Option<PathBuf>) -> Result<Subgraph, Box<dyn Error>> {
    let text = read_input(input)?;
    if text.trim_start().starts_with('{') {
        Ok(serde_json::from_str(&text)?)
    } else {
        Ok(parse_serialized(&text)?)
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Args)]
struct IngestArgs {
    /// Transactions CSV to load
    #[arg(long)]
    csv: PathBuf,
    /// Column layout of the CSV
    #[arg(long, default_value = "standard")]
    schema: String,
    /// Optional edge_id,pattern CSV with ground-truth pattern labels
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Binary graph cache to write
    #[arg(long)]
    out: PathBuf,
}

fn cmd_ingest(args: IngestArgs) -> Result<(), Box<dyn Error>> {
    let schema = CsvSchema::by_name(&args.schema)
        .ok_or_else(|| format!("unknown schema {:?} (try \"standard\")", args.schema))?;
    let mut graph = TransactionGraph::load_csv(&args.csv, &schema)?;
    if let Some(labels) = &args.labels {
        let applied = graph.apply_pattern_labels(labels)?;
        eprintln!("applied {applied} pattern labels");
    }
    graph.save_snapshot(&args.out)?;
    print!("{}", json_line(&graph.stats()));
    Ok(())
}

// ---------------------------------------------------------------------------
// extract / serialize
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ExtractionFlags {
    /// Hop limit counted over account nodes
    #[arg(long, default_value_t = ExtractionConfig::default().k)]
    k: u32,
    /// Cap on account nodes kept
    #[arg(long, default_value_t = ExtractionConfig::default().max_nodes)]
    max_nodes: usize,
    /// Per-direction cap on edges considered per account
    #[arg(long, default_value_t = ExtractionConfig::default().max_edges_per_account)]
    max_edges_per_account: usize,
}

impl ExtractionFlags {
    fn config(&self) -> ExtractionConfig {
        ExtractionConfig {
            k: self.k,
            max_nodes: self.max_nodes,
            max_edges_per_account: self.max_edges_per_account,
            time_window: None,
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Graph cache written by ingest
    #[arg(long)]
    graph: PathBuf,
    /// Focal edge id
    #[arg(long)]
    edge: u32,
    #[command(flatten)]
    extraction: ExtractionFlags,
    /// Output file (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_extract(args: ExtractArgs) -> Result<(), Box<dyn Error>> {
    let graph = TransactionGraph::load_snapshot(&args.graph)?;
    let sub = extract_khop(&graph, args.edge, &args.extraction.config())?;
    write_output(&args.out, &json_line(&sub))
}

#[derive(Args)]
struct SerializeArgs {
    /// Graph cache to extract from (with --edge); omit to read a subgraph
    /// from --in or stdin
    #[arg(long, requires = "edge")]
    graph: Option<PathBuf>,
    /// Focal edge id to extract
    #[arg(long, requires = "graph")]
    edge: Option<u32>,
    #[command(flatten)]
    extraction: ExtractionFlags,
    /// Subgraph file, text or JSON (default stdin)
    #[arg(long = "in", conflicts_with = "graph")]
    input: Option<PathBuf>,
    /// Output file (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_serialize(args: SerializeArgs) -> Result<(), Box<dyn Error>> {
    let sub = match (&args.graph, args.edge) {
        (Some(graph), Some(edge)) => {
            let graph = TransactionGraph::load_snapshot(graph)?;
            extract_khop(&graph, edge, &args.extraction.config())?
        }
        _ => read_subgraph(&args.input)?,
    };
    write_output(&args.out, &serialize_with_focal_marker(&sub).text)
}

// ---------------------------------------------------------------------------
// parse-verdict
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ParseVerdictArgs {
    /// Raw model output (default stdin)
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output file (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_parse_verdict(args: ParseVerdictArgs) -> Result<(), Box<dyn Error>> {
    let text = read_input(&args.input)?;
    let verdict = parse_verdict(&text)?;
    write_output(&args.out, &json_line(&verdict))
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SubgraphFormat {
    /// Text serialization with the focal marker
    Text,
    /// Subgraph JSON, ground truth included
    Json,
}

#[derive(Args)]
struct SynthArgs {
    /// Pattern kind (fan-out, fan-in, gather-scatter, scatter-gather, cycle,
    /// random, bipartite, stack) or "benign"
    #[arg(long)]
    kind: String,
    #[arg(long)]
    seed: u64,
    /// Branching factor (kind-specific default when omitted)
    #[arg(long)]
    fan: Option<usize>,
    /// Stacked layers; stack only
    #[arg(long)]
    layers: Option<usize>,
    /// Minutes all activity lands within
    #[arg(long)]
    span_minutes: Option<i64>,
    /// Relative amount jitter in [0, 1)
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long, value_enum, default_value_t = SubgraphFormat::Text)]
    format: SubgraphFormat,
    /// Output file (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_synth(args: SynthArgs) -> Result<(), Box<dyn Error>> {
    let sub = if args.kind.eq_ignore_ascii_case("benign") {
        let mut cfg = BenignConfig::new(args.seed);
        if let Some(v) = args.span_minutes {
            cfg.span_minutes = v;
        }
        generate_benign(&cfg)?
    } else {
        let kind = match normalize_pattern_name(&args.kind) {
            NormalizedPattern::Known(k) if k != PatternKind::None => k,
            _ => return Err(format!("unknown pattern kind {:?}", args.kind).into()),
        };
        let mut cfg = GenConfig::for_kind(kind, args.seed);
        if let Some(v) = args.fan {
            cfg.fan = v;
        }
        if let Some(v) = args.layers {
            cfg.layers = v;
        }
        if let Some(v) = args.span_minutes {
            cfg.span_minutes = v;
        }
        if let Some(v) = args.jitter {
            cfg.jitter = v;
        }
        generate(&cfg)?
    };
    match args.format {
        SubgraphFormat::Text => write_output(&args.out, &serialize_with_focal_marker(&sub).text),
        SubgraphFormat::Json => write_output(&args.out, &json_line(&sub)),
    }
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

#[derive(Args)]
struct DetectArgs {
    /// Subgraph file, text or JSON (default stdin)
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = DetectorConfig::default().min_fan)]
    min_fan: usize,
    #[arg(long, default_value_t = DetectorConfig::default().window_minutes)]
    window_minutes: i64,
    #[arg(long, default_value_t = DetectorConfig::default().conservation_tol)]
    conservation_tol: f64,
    #[arg(long, default_value_t = DetectorConfig::default().max_cycle_len)]
    max_cycle_len: usize,
    #[arg(long, default_value_t = DetectorConfig::default().bipartite_min_side)]
    bipartite_min_side: usize,
    #[arg(long, default_value_t = DetectorConfig::default().bipartite_min_density)]
    bipartite_min_density: f64,
    /// Output file (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_detect(args: DetectArgs) -> Result<(), Box<dyn Error>> {
    let sub = read_subgraph(&args.input)?;
    let cfg = DetectorConfig {
        min_fan: args.min_fan,
        window_minutes: args.window_minutes,
        conservation_tol: args.conservation_tol,
        max_cycle_len: args.max_cycle_len,
        bipartite_min_side: args.bipartite_min_side,
        bipartite_min_density: args.bipartite_min_density,
    };
    let matches = detect(&sub, &cfg);
    write_output(&args.out, &json_line(&matches))
}

// ---------------------------------------------------------------------------
// build-prompt
// ---------------------------------------------------------------------------

#[derive(Args)]
struct BuildPromptArgs {
    /// Test subgraph, text or JSON (default stdin)
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = PromptConfig::default().n_suspicious)]
    n_suspicious: usize,
    #[arg(long, default_value_t = PromptConfig::default().n_benign)]
    n_benign: usize,
    /// Seed for the stock demonstration set
    #[arg(long, default_value_t = PromptConfig::default().demo_seed)]
    demo_seed: u64,
    /// Output file (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_build_prompt(args: BuildPromptArgs) -> Result<(), Box<dyn Error>> {
    let sub = read_subgraph(&args.input)?;
    let mut cfg = PromptConfig::default();
    cfg.n_suspicious = args.n_suspicious;
    cfg.n_benign = args.n_benign;
    cfg.demo_seed = args.demo_seed;
    let (mut suspicious, mut benign) = default_demos(cfg.demo_seed);
    if cfg.n_suspicious > suspicious.len() || cfg.n_benign > benign.len() {
        return Err(format!(
            "stock demonstration set has {} suspicious and {} benign examples",
            suspicious.len(),
            benign.len()
        )
        .into());
    }
    suspicious.truncate(cfg.n_suspicious);
    benign.truncate(cfg.n_benign);
    let test = serialize_with_focal_marker(&sub);
    let bundle = build_prompt(&suspicious, &benign, &test, &cfg)?;
    write_output(&args.out, &bundle.text)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    /// Seeded generators; positives cycle through the pattern kinds
    Synthetic,
    /// Labeled focal edges sampled from a graph cache
    Dataset,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    source: SourceArg,
    /// Graph cache; required with --source dataset
    #[arg(long, required_if_eq("source", "dataset"))]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n_pos: usize,
    #[arg(long, default_value_t = 1000)]
    n_neg: usize,
    #[command(flatten)]
    extraction: ExtractionFlags,
    /// Master seed; sampling, demo choice and bootstraps derive from it
    #[arg(long)]
    seed: u64,
    /// Answer with the rule-based stub instead of a remote model
    #[arg(long)]
    offline: bool,
    #[arg(long, default_value_t = 1000)]
    n_resamples: usize,
    /// Worker threads for case execution
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long, default_value_t = PromptConfig::default().n_suspicious)]
    n_suspicious: usize,
    #[arg(long, default_value_t = PromptConfig::default().n_benign)]
    n_benign: usize,
    #[arg(long, default_value_t = PromptConfig::default().demo_seed)]
    demo_seed: u64,
    /// Chat model; beats LLM_MODEL
    #[arg(long)]
    model: Option<String>,
    /// Endpoint base URL; beats LLM_BASE_URL
    #[arg(long)]
    base_url: Option<String>,
    /// API key; beats LLM_API_KEY. Required for remote runs
    #[arg(long)]
    api_key: Option<String>,
    #[arg(long, default_value_t = LlmConfig::default().max_retries)]
    max_retries: u32,
    #[arg(long, default_value_t = LlmConfig::default().max_concurrency)]
    max_concurrency: usize,
    /// Report JSON file (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// NDJSON outcome log; rerunning with the same log resumes
    #[arg(long)]
    log: Option<PathBuf>,
}

fn cmd_eval(args: EvalArgs) -> Result<(), Box<dyn Error>> {
    let mut llm = LlmConfig::from_env();
    if let Some(model) = args.model {
        llm.model = model;
    }
    if let Some(base_url) = args.base_url {
        llm.base_url = base_url;
    }
    if let Some(api_key) = args.api_key {
        llm.api_key = Some(api_key);
    }
    llm.max_retries = args.max_retries;
    llm.max_concurrency = args.max_concurrency;

    let mut prompt = PromptConfig::default();
    prompt.n_suspicious = args.n_suspicious;
    prompt.n_benign = args.n_benign;
    prompt.demo_seed = args.demo_seed;

    let cfg = EvalConfig {
        offline: args.offline,
        llm,
        prompt,
        parallelism: args.parallelism,
        n_resamples: args.n_resamples,
        seed: args.seed,
        log_path: args.log,
    };

    let extraction = args.extraction.config();
    let cases = match args.source {
        SourceArg::Synthetic => build_balanced_set(
            EvalSource::Synthetic,
            args.n_pos,
            args.n_neg,
            &extraction,
            args.seed,
        )?,
        SourceArg::Dataset => {
            let path = args.graph.as_ref().expect("clap enforces --graph for dataset");
            let graph = TransactionGraph::load_snapshot(path)?;
            build_balanced_set(
                EvalSource::Dataset(&graph),
                args.n_pos,
                args.n_neg,
                &extraction,
                args.seed,
            )?
        }
    };
    eprintln!(
        "evaluating {} cases ({} offline={} seed={})",
        cases.len(),
        match args.source {
            SourceArg::Synthetic => "synthetic",
            SourceArg::Dataset => "dataset",
        },
        cfg.offline,
        cfg.seed
    );
    let report = run_eval(&cases, &cfg)?;
    eprintln!(
        "done: {} cases, {} errors, accuracy {}",
        report.n_cases,
        report.error_count,
        pct_ci(&report.classification.accuracy)
    );
    write_output(&args.out, &json_line(&report))
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Csv,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON written by eval
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    /// Output file (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

/// "63.7% ± 3.3%": point estimate with the 95% CI half-width.
fn pct_ci(b: &amlgraph::eval::BootstrapResult) -> String {
    let mut s = format!("{} ± {}", pct(b.point), pct(b.half_width));
    if b.n_undefined == b.n_resamples {
        s.push_str(" (undefined)");
    }
    s
}

fn render_text(report: &EvalReport) -> String {
    let c = &report.classification;
    let mut out = String::new();
    out.push_str(&format!(
        "Cases: {}    parse errors: {}    hallucinated pattern mentions: {}\n",
        report.n_cases, report.error_count, report.hallucination_mentions
    ));
    out.push_str(&format!(
        "Confusion: tp {}  fp {}  fn {}  tn {}\n\n",
        c.confusion.tp, c.confusion.fp, c.confusion.fn_, c.confusion.tn
    ));
    out.push_str(&format!(
        "Classification (95% CI over {} resamples, seed {}):\n",
        report.config.n_resamples, report.config.seed
    ));
    for (name, b) in [
        ("accuracy", &c.accuracy),
        ("precision", &c.precision),
        ("recall", &c.recall),
        ("f1", &c.f1),
    ] {
        out.push_str(&format!("  {name:<10} {}\n", pct_ci(b)));
    }
    out.push_str("\nPattern mentions:\n");
    out.push_str(&format!(
        "  {:<16} {:<18} {:<18} {:>8} {:>6}\n",
        "kind", "precision", "recall", "mentions", "truth"
    ));
    for (kind, pat) in &report.per_pattern {
        out.push_str(&format!(
            "  {:<16} {:<18} {:<18} {:>8} {:>6}\n",
            kind.to_string(),
            pct_ci(&pat.precision),
            pct_ci(&pat.recall),
            pat.counts.mentions,
            pat.counts.truth_occurrences
        ));
    }
    if !c.metrics.undefined.is_empty() {
        out.push_str(&format!(
            "\nUndefined (zero denominator, pinned to 0): {}\n",
            c.metrics.undefined.join(", ")
        ));
    }
    out
}

fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("section,name,point,mean,ci_low,ci_high,half_width,n_undefined\n");
    let c = &report.classification;
    for (name, count) in [
        ("tp", c.confusion.tp),
        ("fp", c.confusion.fp),
        ("fn", c.confusion.fn_),
        ("tn", c.confusion.tn),
        ("cases", report.n_cases),
        ("parse_errors", report.error_count),
        ("hallucination_mentions", report.hallucination_mentions),
    ] {
        out.push_str(&format!("counts,{name},{count},,,,,\n"));
    }
    let mut metric = |section: &str, name: &str, b: &amlgraph::eval::BootstrapResult| {
        out.push_str(&format!(
            "{section},{name},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            b.point, b.mean, b.ci_low, b.ci_high, b.half_width, b.n_undefined
        ));
    };
    metric("classification", "accuracy", &c.accuracy);
    metric("classification", "precision", &c.precision);
    metric("classification", "recall", &c.recall);
    metric("classification", "f1", &c.f1);
    for (kind, pat) in &report.per_pattern {
        let kind = kind.to_string().replace(' ', "_");
        metric("pattern_precision", &kind, &pat.precision);
        metric("pattern_recall", &kind, &pat.recall);
    }
    out
}

fn cmd_report(args: ReportArgs) -> Result<(), Box<dyn Error>> {
    let report: EvalReport = serde_json::from_str(&fs::read_to_string(&args.input)?)?;
    let rendered = match args.format {
        ReportFormat::Text => render_text(&report),
        ReportFormat::Csv => render_csv(&report),
        ReportFormat::Json => json_line(&report),
    };
    write_output(&args.out, &rendered)
}
