//! Few-shot prompt assembly: investigator header, eight suspicious
//! demonstrations (one per pattern kind), four benign demonstrations, task
//! instructions, the serialized test subgraph, and the answer format.
//!
//! The template strings live under `data/prompts/`, one file per piece, so
//! the wording can be reviewed and edited without touching code. Assembly is
//! byte-deterministic: same demos, test text, and config give the same
//! prompt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::fnv1a64;
use crate::serialize::{serialize, SerializedSubgraph};
use crate::typology::{generate, generate_benign, BenignConfig, GenConfig, PatternKind};

const HEADER: &str = include_str!("../data/prompts/header.txt");
const TASK: &str = include_str!("../data/prompts/task.txt");
const ANSWER_FORMAT: &str = include_str!("../data/prompts/answer_format.txt");
const BENIGN_EXPLANATION: &str = include_str!("../data/prompts/benign.txt");

fn explanation_for(kind: PatternKind) -> &'static str {
    match kind {
        PatternKind::FanOut => include_str!("../data/prompts/fan_out.txt"),
        PatternKind::FanIn => include_str!("../data/prompts/fan_in.txt"),
        PatternKind::GatherScatter => include_str!("../data/prompts/gather_scatter.txt"),
        PatternKind::ScatterGather => include_str!("../data/prompts/scatter_gather.txt"),
        PatternKind::SimpleCycle => include_str!("../data/prompts/simple_cycle.txt"),
        PatternKind::Random => include_str!("../data/prompts/random.txt"),
        PatternKind::Bipartite => include_str!("../data/prompts/bipartite.txt"),
        PatternKind::Stack => include_str!("../data/prompts/stack.txt"),
        PatternKind::None => BENIGN_EXPLANATION,
    }
}

/// One worked example: a serialized subgraph and the rationale shown to the
/// model. Benign demonstrations carry `PatternKind::None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub text: SerializedSubgraph,
    pub explanation: String,
    pub kind: PatternKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub n_suspicious: usize,
    pub n_benign: usize,
    pub header: String,
    pub answer_format: String,
    pub demo_seed: u64,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            n_suspicious: 8,
            n_benign: 4,
            header: HEADER.trim_end().to_string(),
            answer_format: ANSWER_FORMAT.trim_end().to_string(),
            demo_seed: 1,
        }
    }
}

/// A fully assembled prompt plus the demonstrations that went into it and a
/// fingerprint of the test serialization, for joining results back to cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub text: String,
    pub demos: Vec<Demonstration>,
    pub test_fingerprint: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("expected {expected} {role} demonstrations, got {found}")]
    CountMismatch { role: &'static str, expected: usize, found: usize },
    #[error("test serialization is empty")]
    EmptyTest,
    #[error("invalid demonstration: {0}")]
    InvalidDemonstration(&'static str),
}

fn demo_seed_for(seed: u64, index: u64) -> u64 {
    seed ^ (index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Demonstration shapes stay small: a handful of accounts each, per the
/// "brief serialized subgraph" framing. The stack needs nine accounts, the
/// minimum for two chained three-by-three layers.
fn demo_config(kind: PatternKind, seed: u64) -> GenConfig {
    let mut cfg = GenConfig::for_kind(kind, seed);
    if matches!(kind, PatternKind::FanOut | PatternKind::FanIn) {
        cfg.fan = 5;
    }
    cfg
}

/// The stock demonstration set: one suspicious demo per pattern kind in
/// canonical order, then four benign demos. Pure in `seed`.
pub fn default_demos(seed: u64) -> (Vec<Demonstration>, Vec<Demonstration>) {
    let suspicious = PatternKind::ALL
        .into_iter()
        .enumerate()
        .map(|(i, kind)| {
            let cfg = demo_config(kind, demo_seed_for(seed, i as u64));
            let sub = generate(&cfg).expect("demo generation at stock sizes succeeds");
            Demonstration {
                text: serialize(&sub),
                explanation: explanation_for(kind).trim().to_string(),
                kind,
            }
        })
        .collect();
    let benign = (0..4)
        .map(|j| {
            let cfg = BenignConfig::new(demo_seed_for(seed, 100 + j));
            let sub = generate_benign(&cfg).expect("benign demo generation succeeds");
            Demonstration {
                text: serialize(&sub),
                explanation: BENIGN_EXPLANATION.trim().to_string(),
                kind: PatternKind::None,
            }
        })
        .collect();
    (suspicious, benign)
}

/// Assembles the final prompt. Layout: header, suspicious demos, benign
/// demos, task paragraph, test serialization, answer format. Section
/// headings appear only when their section is non-empty.
pub fn build_prompt(
    suspicious: &[Demonstration],
    benign: &[Demonstration],
    test: &SerializedSubgraph,
    cfg: &PromptConfig,
) -> Result<PromptBundle, PromptError> {
    if suspicious.len() != cfg.n_suspicious {
        return Err(PromptError::CountMismatch {
            role: "suspicious",
            expected: cfg.n_suspicious,
            found: suspicious.len(),
        });
    }
    if benign.len() != cfg.n_benign {
        return Err(PromptError::CountMismatch {
            role: "benign",
            expected: cfg.n_benign,
            found: benign.len(),
        });
    }
    if test.text.is_empty() {
        return Err(PromptError::EmptyTest);
    }
    for d in suspicious {
        if d.kind == PatternKind::None {
            return Err(PromptError::InvalidDemonstration(
                "suspicious demonstration labeled None",
            ));
        }
    }
    for d in suspicious.iter().chain(benign) {
        if d.explanation.trim().is_empty() {
            return Err(PromptError::InvalidDemonstration("empty explanation"));
        }
    }

    let mut text = String::new();
    text.push_str(cfg.header.trim_end());
    text.push_str("\n\n");
    if !suspicious.is_empty() {
        text.push_str("Few-shot Examples:\n\n");
        for d in suspicious {
            text.push_str(&d.text.text);
            text.push_str(&format!("Explanation: {}\n\n", d.explanation.trim()));
        }
    }
    if !benign.is_empty() {
        text.push_str("non-suspicious Examples:\n\n");
        for d in benign {
            text.push_str(&d.text.text);
            text.push_str(&format!("Explanation: {}\n\n", d.explanation.trim()));
        }
    }
    text.push_str(TASK.trim_end());
    text.push_str("\n\n");
    text.push_str("Test Example:\n");
    text.push_str(&test.text);
    text.push('\n');
    text.push_str(cfg.answer_format.trim_end());
    text.push('\n');

    let demos = suspicious.iter().chain(benign).cloned().collect();
    Ok(PromptBundle { text, demos, test_fingerprint: fnv1a64(test.text.as_bytes()) })
}

/// The test serialization inside an assembled prompt: everything between the
/// "Test Example:" heading and the answer format block.
pub fn test_section(prompt_text: &str) -> Option<&str> {
    let heading = "Test Example:\n";
    let start = prompt_text.rfind(heading)? + heading.len();
    let rest = &prompt_text[start..];
    let end = rest.find("\nAnswer Format:").unwrap_or(rest.len());
    Some(&rest[..end])
}
