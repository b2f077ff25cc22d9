//! Balanced test sets, end-to-end evaluation runs, and the reported metrics:
//! accuracy, precision, recall and F1 with 1,000-resample percentile
//! bootstrap 95% intervals, plus per-pattern precision/recall.
//!
//! Policy for unparseable model output: those cases are excluded from the
//! confusion table and every metric, and surfaced as `error_count`. Coercing
//! them to a default verdict would silently bias recall.
//!
//! The outcome log is newline-delimited JSON, one record per case, appended
//! and flushed as each case finishes. Rerunning with the same log path skips
//! cases already present, so an interrupted run resumes where it stopped and
//! produces the same report as an uninterrupted one. A log belongs to one
//! case set; pointing it at a different set is a caller error (stale rows
//! are ignored by case id, nothing else is checked).
//!
//! Reports are deterministic for a given (cases, config) in offline mode,
//! except the `meta` block, which carries wall-clock timestamps.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{extract_khop, ExtractError, ExtractionConfig, Subgraph, fnv1a64};
use crate::graph_store::{EdgeId, TransactionGraph};
use crate::llm::{stub_complete, Client, HttpTransport, LlmConfig, LlmError};
use crate::prompt::{build_prompt, default_demos, Demonstration, PromptConfig, PromptError};
use crate::serialize::serialize_with_focal_marker;
use crate::typology::{
    generate, generate_benign, BenignConfig, GenConfig, GenerateError, PatternKind,
};
use crate::verdict::{parse_verdict, NormalizedPattern, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub case_id: String,
    pub subgraph: Subgraph,
    pub truth_label: bool,
    /// For negatives this is at most {None}.
    pub truth_patterns: std::collections::BTreeSet<PatternKind>,
}

/// One evaluated case, stored verbatim for audit. Exactly one of `verdict`
/// and `error` is set. `attempts` is 0 when no completion came back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub case: TestCase,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
    pub raw_text: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    /// False negatives; `fn` is reserved.
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Ratios with zero denominators are pinned to 0.0 and named in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Metric on the full sample (0.0 if undefined there; see `n_undefined`).
    pub point: f64,
    /// Mean over defined resamples.
    pub mean: f64,
    /// 2.5th percentile of defined resample values, linearly interpolated.
    pub ci_low: f64,
    /// 97.5th percentile.
    pub ci_high: f64,
    /// Half the interval width; rendered as the "± X" figure.
    pub half_width: f64,
    pub n_resamples: usize,
    pub seed: u64,
    /// Resamples where the metric had no defined value (zero denominator).
    pub n_undefined: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCounts {
    pub mentions: u64,
    pub correct_mentions: u64,
    pub truth_occurrences: u64,
}

impl PatternCounts {
    pub fn precision(&self) -> Option<f64> {
        (self.mentions > 0).then(|| self.correct_mentions as f64 / self.mentions as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        (self.truth_occurrences > 0)
            .then(|| self.correct_mentions as f64 / self.truth_occurrences as f64)
    }
}

/// Multi-label mention counts for every pattern kind, plus how many verdict
/// pattern strings matched no known kind at all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternTally {
    pub per_kind: BTreeMap<PatternKind, PatternCounts>,
    pub hallucination_mentions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternReport {
    pub counts: PatternCounts,
    pub precision: BootstrapResult,
    pub recall: BootstrapResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: ConfusionCounts,
    pub metrics: MetricSet,
    pub accuracy: BootstrapResult,
    pub precision: BootstrapResult,
    pub recall: BootstrapResult,
    pub f1: BootstrapResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub offline: bool,
    pub model: String,
    pub base_url: String,
    pub temperature: f64,
    pub n_suspicious: usize,
    pub n_benign: usize,
    pub demo_seed: u64,
    pub parallelism: usize,
    pub n_resamples: usize,
    pub seed: u64,
}

/// Wall-clock facts about one invocation. Excluded when comparing runs for
/// reproducibility.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub started_at: String,
    pub finished_at: String,
    /// Outcomes taken from the log instead of executed.
    pub resumed: usize,
    pub executed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ConfigSnapshot,
    pub n_cases: u64,
    pub error_count: u64,
    pub classification: ClassificationReport,
    pub per_pattern: BTreeMap<PatternKind, PatternReport>,
    pub hallucination_mentions: u64,
    pub meta: RunMeta,
}

#[derive(Debug)]
pub enum EvalSource<'a> {
    Synthetic,
    Dataset(&'a TransactionGraph),
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub offline: bool,
    pub llm: LlmConfig,
    pub prompt: PromptConfig,
    pub parallelism: usize,
    pub n_resamples: usize,
    /// Master seed for bootstrap resampling; per-metric streams derive from it.
    pub seed: u64,
    /// NDJSON outcome log; absent means in-memory only (not resumable).
    pub log_path: Option<PathBuf>,
}

impl EvalConfig {
    pub fn offline(seed: u64) -> Self {
        EvalConfig {
            offline: true,
            llm: LlmConfig::default(),
            prompt: PromptConfig::default(),
            parallelism: 4,
            n_resamples: 1000,
            seed,
            log_path: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no cases to evaluate")]
    EmptySample,
    #[error("invalid eval config: {0}")]
    InvalidConfig(&'static str),
    #[error("not enough labeled {label} edges: need {need}, found {have}")]
    InsufficientLabeled { label: &'static str, need: usize, have: usize },
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Client(#[from] LlmError),
    #[error("outcome log: {0}")]
    Log(#[from] std::io::Error),
}

/// splitmix64 finalizer; decorrelates the per-case and per-metric streams
/// that all hang off one master seed.
fn derived_seed(master: u64, stream: u64) -> u64 {
    let mut z = (master ^ stream).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const POS_STREAM: u64 = 1 << 32;
const NEG_STREAM: u64 = 2 << 32;
const SAMPLE_STREAM: u64 = 3 << 32;

fn labeled_case(case_id: String, subgraph: Subgraph) -> TestCase {
    let truth = subgraph
        .truth
        .clone()
        .expect("generators and labeled extractions always set truth");
    TestCase {
        case_id,
        subgraph,
        truth_label: truth.is_laundering,
        truth_patterns: truth.patterns,
    }
}

/// Builds n_pos positives and n_neg negatives. Synthetic positives cycle
/// through the pattern kinds in canonical order; dataset mode samples labeled
/// focal edges uniformly without replacement and extracts their k-hop
/// neighborhoods. Pure in (source, counts, extraction, seed).
pub fn build_balanced_set(
    source: EvalSource,
    n_pos: usize,
    n_neg: usize,
    extraction: &ExtractionConfig,
    seed: u64,
) -> Result<Vec<TestCase>, EvalError> {
    let mut cases = Vec::with_capacity(n_pos + n_neg);
    match source {
        EvalSource::Synthetic => {
            for i in 0..n_pos {
                let kind = PatternKind::ALL[i % PatternKind::ALL.len()];
                let cfg = GenConfig::for_kind(kind, derived_seed(seed, POS_STREAM | i as u64));
                cases.push(labeled_case(format!("syn-pos-{i:05}-{kind}"), generate(&cfg)?));
            }
            for j in 0..n_neg {
                let cfg = BenignConfig::new(derived_seed(seed, NEG_STREAM | j as u64));
                cases.push(labeled_case(format!("syn-neg-{j:05}"), generate_benign(&cfg)?));
            }
        }
        EvalSource::Dataset(graph) => {
            let mut pos: Vec<EdgeId> = Vec::new();
            let mut neg: Vec<EdgeId> = Vec::new();
            for e in graph.edges() {
                match e.is_laundering {
                    Some(true) => pos.push(e.id),
                    Some(false) => neg.push(e.id),
                    None => {}
                }
            }
            if pos.len() < n_pos {
                return Err(EvalError::InsufficientLabeled {
                    label: "positive",
                    need: n_pos,
                    have: pos.len(),
                });
            }
            if neg.len() < n_neg {
                return Err(EvalError::InsufficientLabeled {
                    label: "negative",
                    need: n_neg,
                    have: neg.len(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, SAMPLE_STREAM));
            for (ids, n) in [(pos, n_pos), (neg, n_neg)] {
                let mut picked: Vec<EdgeId> = rand::seq::index::sample(&mut rng, ids.len(), n)
                    .into_iter()
                    .map(|i| ids[i])
                    .collect();
                picked.sort_unstable();
                for id in picked {
                    let sub = extract_khop(graph, id, extraction)?;
                    cases.push(labeled_case(format!("edge-{id:010}"), sub));
                }
            }
        }
    }
    Ok(cases)
}

/// Tallies parsed outcomes into the four cells; outcomes without a verdict
/// contribute nothing (they are reported as errors, not guesses).
pub fn confusion<'a, I>(outcomes: I) -> ConfusionCounts
where
    I: IntoIterator<Item = &'a Outcome>,
{
    let mut c = ConfusionCounts::default();
    for o in outcomes {
        let Some(v) = &o.verdict else { continue };
        match (o.case.truth_label, v.conclusion.is_suspicious()) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

pub fn metrics(c: &ConfusionCounts) -> Result<MetricSet, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::EmptySample);
    }
    let mut undefined = Vec::new();
    let mut ratio = |num: u64, den: u64, name: &str| {
        if den == 0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = ratio(c.tp + c.tn, total, "accuracy");
    let precision = ratio(c.tp, c.tp + c.fp, "precision");
    let recall = ratio(c.tp, c.tp + c.fn_, "recall");
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1".to_string());
        0.0
    };
    Ok(MetricSet { accuracy, precision, recall, f1, undefined })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

/// Percentile bootstrap: each resample draws |items| items with replacement
/// from a ChaCha stream seeded by `seed`. `metric_fn` returns NaN where the
/// metric is undefined; such resamples are counted, not averaged. If every
/// value (point included) is undefined, the result collapses to zeros with
/// `n_undefined = n_resamples`.
pub fn bootstrap<T, F>(
    items: &[T],
    metric_fn: F,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapResult, EvalError>
where
    F: Fn(&[&T]) -> f64,
{
    if items.is_empty() {
        return Err(EvalError::EmptySample);
    }
    if n_resamples == 0 {
        return Err(EvalError::InvalidConfig("n_resamples must be positive"));
    }
    let full: Vec<&T> = items.iter().collect();
    let raw_point = metric_fn(&full);
    let point = if raw_point.is_nan() { 0.0 } else { raw_point };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n_resamples);
    let mut n_undefined = 0usize;
    let mut draw: Vec<&T> = Vec::with_capacity(items.len());
    for _ in 0..n_resamples {
        draw.clear();
        for _ in 0..items.len() {
            draw.push(&items[rng.gen_range(0..items.len())]);
        }
        let v = metric_fn(&draw);
        if v.is_nan() {
            n_undefined += 1;
        } else {
            values.push(v);
        }
    }
    let (mean, ci_low, ci_high) = if values.is_empty() {
        (point, point, point)
    } else {
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        (mean, quantile(&values, 0.025), quantile(&values, 0.975))
    };
    Ok(BootstrapResult {
        point,
        mean,
        ci_low,
        ci_high,
        half_width: (ci_high - ci_low) / 2.0,
        n_resamples,
        seed,
        n_undefined,
    })
}

fn count_kind<'a, I>(outcomes: I, kind: PatternKind) -> PatternCounts
where
    I: IntoIterator<Item = &'a Outcome>,
{
    let mut c = PatternCounts::default();
    for o in outcomes {
        let Some(v) = &o.verdict else { continue };
        let in_truth = o.case.truth_patterns.contains(&kind);
        if in_truth {
            c.truth_occurrences += 1;
        }
        let mentioned = v
            .patterns
            .iter()
            .any(|p| matches!(p, NormalizedPattern::Known(k) if *k == kind));
        if mentioned {
            c.mentions += 1;
            if in_truth {
                c.correct_mentions += 1;
            }
        }
    }
    c
}

/// Multi-label tallies per kind over outcomes with parsed verdicts. A mention
/// is correct when the kind is in the case's ground-truth pattern set;
/// unrecognized pattern strings count against no kind and land in the
/// hallucination tally instead.
pub fn pattern_metrics(outcomes: &[Outcome]) -> PatternTally {
    let per_kind = PatternKind::ALL
        .into_iter()
        .map(|kind| (kind, count_kind(outcomes, kind)))
        .collect();
    let hallucination_mentions = outcomes
        .iter()
        .filter_map(|o| o.verdict.as_ref())
        .flat_map(|v| &v.patterns)
        .filter(|p| matches!(p, NormalizedPattern::Unrecognized(_)))
        .count() as u64;
    PatternTally { per_kind, hallucination_mentions }
}

fn nan_ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

fn degenerate_result(n_resamples: usize, seed: u64) -> BootstrapResult {
    BootstrapResult {
        point: 0.0,
        mean: 0.0,
        ci_low: 0.0,
        ci_high: 0.0,
        half_width: 0.0,
        n_resamples,
        seed,
        n_undefined: n_resamples,
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn run_case(
    case: &TestCase,
    suspicious: &[Demonstration],
    benign: &[Demonstration],
    prompt_cfg: &PromptConfig,
    client: Option<&Client<HttpTransport>>,
) -> Outcome {
    let wall = Instant::now();
    let test_text = serialize_with_focal_marker(&case.subgraph);
    let completion = build_prompt(suspicious, benign, &test_text, prompt_cfg)
        .map_err(|e| e.to_string())
        .and_then(|bundle| {
            match client {
                None => stub_complete(&bundle),
                Some(c) => c.complete(&bundle),
            }
            .map_err(|e| e.to_string())
        });
    match completion {
        Ok(c) => {
            let (verdict, error) = match parse_verdict(&c.text) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Outcome {
                case: case.clone(),
                verdict,
                error,
                raw_text: c.text,
                latency_ms: c.latency.as_millis() as u64,
                attempts: c.attempts,
            }
        }
        Err(msg) => Outcome {
            case: case.clone(),
            verdict: None,
            error: Some(msg),
            raw_text: String::new(),
            latency_ms: wall.elapsed().as_millis() as u64,
            attempts: 0,
        },
    }
}

/// Runs every case through serialize, build_prompt, complete (stub when
/// offline) and parse_verdict, then aggregates. Case failures land on their
/// outcomes; only setup and log I/O failures abort the run.
pub fn run_eval(cases: &[TestCase], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let started_at = now_rfc3339();

    let (mut suspicious, mut benign) = default_demos(cfg.prompt.demo_seed);
    if cfg.prompt.n_suspicious > suspicious.len() {
        return Err(EvalError::Prompt(PromptError::CountMismatch {
            role: "suspicious",
            expected: cfg.prompt.n_suspicious,
            found: suspicious.len(),
        }));
    }
    if cfg.prompt.n_benign > benign.len() {
        return Err(EvalError::Prompt(PromptError::CountMismatch {
            role: "benign",
            expected: cfg.prompt.n_benign,
            found: benign.len(),
        }));
    }
    suspicious.truncate(cfg.prompt.n_suspicious);
    benign.truncate(cfg.prompt.n_benign);

    let client = if cfg.offline { None } else { Some(Client::new(cfg.llm.clone())?) };

    let mut done: BTreeMap<String, Outcome> = BTreeMap::new();
    let mut heal_newline = false;
    if let Some(path) = &cfg.log_path {
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            // An interrupted write can leave a torn final line; terminate it
            // before appending so the next record starts clean.
            heal_newline = !text.is_empty() && !text.ends_with('\n');
            for line in text.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                // Torn lines parse as garbage; drop them and re-execute.
                if let Ok(o) = serde_json::from_str::<Outcome>(line) {
                    done.insert(o.case.case_id.clone(), o);
                }
            }
            let wanted: std::collections::BTreeSet<&str> =
                cases.iter().map(|c| c.case_id.as_str()).collect();
            done.retain(|id, _| wanted.contains(id.as_str()));
        }
    }
    let resumed = done.len();
    let remaining: Vec<&TestCase> =
        cases.iter().filter(|c| !done.contains_key(&c.case_id)).collect();

    struct Sink {
        outcomes: Vec<Outcome>,
        file: Option<File>,
        failure: Option<std::io::Error>,
    }
    let file = match &cfg.log_path {
        Some(p) => {
            let mut f = OpenOptions::new().create(true).append(true).open(p)?;
            if heal_newline {
                writeln!(f)?;
            }
            Some(f)
        }
        None => None,
    };
    let sink = Mutex::new(Sink { outcomes: Vec::with_capacity(remaining.len()), file, failure: None });
    let next = AtomicUsize::new(0);
    let workers = cfg.parallelism.max(1).min(remaining.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= remaining.len() {
                    break;
                }
                let outcome =
                    run_case(remaining[i], &suspicious, &benign, &cfg.prompt, client.as_ref());
                let mut sink = sink.lock().expect("sink lock");
                if sink.failure.is_some() {
                    break;
                }
                if let Some(f) = sink.file.as_mut() {
                    let line = serde_json::to_string(&outcome).expect("outcome serializes");
                    if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                        sink.failure = Some(e);
                        break;
                    }
                }
                sink.outcomes.push(outcome);
            });
        }
    });
    let sink = sink.into_inner().expect("sink");
    if let Some(e) = sink.failure {
        return Err(EvalError::Log(e));
    }
    let executed = sink.outcomes.len();

    let mut outcomes: Vec<Outcome> = done.into_values().chain(sink.outcomes).collect();
    outcomes.sort_by(|a, b| a.case.case_id.cmp(&b.case.case_id));

    let meta = RunMeta { started_at, finished_at: now_rfc3339(), resumed, executed };
    Ok(assemble_report(&outcomes, cfg, meta))
}

/// Aggregation is a pure function of the (sorted) outcomes and the config,
/// so collection order and resume points cannot change the report.
fn assemble_report(outcomes: &[Outcome], cfg: &EvalConfig, meta: RunMeta) -> EvalReport {
    let parsed: Vec<&Outcome> = outcomes.iter().filter(|o| o.verdict.is_some()).collect();
    let error_count = (outcomes.len() - parsed.len()) as u64;

    let conf = confusion(outcomes.iter());
    let metric_set = metrics(&conf).unwrap_or(MetricSet {
        accuracy: 0.0,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        undefined: ["accuracy", "precision", "recall", "f1"].map(String::from).to_vec(),
    });

    let boot = |label: &str, pick: fn(&ConfusionCounts) -> f64| -> BootstrapResult {
        let seed = derived_seed(cfg.seed, fnv1a64(label.as_bytes()));
        bootstrap(
            &parsed,
            |draw| pick(&confusion(draw.iter().copied().copied())),
            cfg.n_resamples,
            seed,
        )
        .unwrap_or_else(|_| degenerate_result(cfg.n_resamples, seed))
    };
    let classification = ClassificationReport {
        confusion: conf,
        metrics: metric_set,
        accuracy: boot("accuracy", |c| nan_ratio(c.tp + c.tn, c.total())),
        precision: boot("precision", |c| nan_ratio(c.tp, c.tp + c.fp)),
        recall: boot("recall", |c| nan_ratio(c.tp, c.tp + c.fn_)),
        f1: boot("f1", |c| {
            let p = nan_ratio(c.tp, c.tp + c.fp);
            let r = nan_ratio(c.tp, c.tp + c.fn_);
            if p + r > 0.0 {
                2.0 * p * r / (p + r)
            } else {
                f64::NAN
            }
        }),
    };

    let tally = pattern_metrics(outcomes);
    let pattern_boot = |kind: PatternKind, which: &str| -> BootstrapResult {
        let seed = derived_seed(cfg.seed, fnv1a64(format!("pattern-{which}-{kind}").as_bytes()));
        let metric = |draw: &[&&Outcome]| {
            let counts = count_kind(draw.iter().copied().copied(), kind);
            let v = if which == "precision" { counts.precision() } else { counts.recall() };
            v.unwrap_or(f64::NAN)
        };
        bootstrap(&parsed, metric, cfg.n_resamples, seed)
            .unwrap_or_else(|_| degenerate_result(cfg.n_resamples, seed))
    };
    let per_pattern = PatternKind::ALL
        .into_iter()
        .map(|kind| {
            (
                kind,
                PatternReport {
                    counts: tally.per_kind[&kind],
                    precision: pattern_boot(kind, "precision"),
                    recall: pattern_boot(kind, "recall"),
                },
            )
        })
        .collect();

    EvalReport {
        config: ConfigSnapshot {
            offline: cfg.offline,
            model: cfg.llm.model.clone(),
            base_url: cfg.llm.base_url.clone(),
            temperature: cfg.llm.temperature,
            n_suspicious: cfg.prompt.n_suspicious,
            n_benign: cfg.prompt.n_benign,
            demo_seed: cfg.prompt.demo_seed,
            parallelism: cfg.parallelism,
            n_resamples: cfg.n_resamples,
            seed: cfg.seed,
        },
        n_cases: outcomes.len() as u64,
        error_count,
        classification,
        per_pattern,
        hallucination_mentions: tally.hallucination_mentions,
        meta,
    }
}
