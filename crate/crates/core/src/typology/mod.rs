//! Laundering typologies: the pattern taxonomy, rule-based detectors over
//! subgraphs, and seeded generators that produce labeled synthetic cases.
//!
//! Detector rules are one deliberate formalization of the taxonomy, fixed by
//! this module's tests; see `detect` for the per-kind definitions.

mod detect;
mod generate;

pub use detect::detect;
pub use generate::{generate, generate_benign, BenignConfig, GenConfig, GenerateError};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph_store::{AccountId, EdgeId};

/// The eight laundering shapes plus the benign marker.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum PatternKind {
    #[serde(rename = "fan-out")]
    FanOut,
    #[serde(rename = "fan-in")]
    FanIn,
    #[serde(rename = "gather-scatter")]
    GatherScatter,
    #[serde(rename = "scatter-gather")]
    ScatterGather,
    #[serde(rename = "simple cycle")]
    SimpleCycle,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "bipartite")]
    Bipartite,
    #[serde(rename = "stack")]
    Stack,
    #[serde(rename = "None")]
    None,
}

impl PatternKind {
    /// The eight real pattern kinds, in canonical order.
    pub const ALL: [PatternKind; 8] = [
        PatternKind::FanOut,
        PatternKind::FanIn,
        PatternKind::GatherScatter,
        PatternKind::ScatterGather,
        PatternKind::SimpleCycle,
        PatternKind::Random,
        PatternKind::Bipartite,
        PatternKind::Stack,
    ];

    pub fn display_name(&self) -> &'static str {
        match self {
            PatternKind::FanOut => "fan-out",
            PatternKind::FanIn => "fan-in",
            PatternKind::GatherScatter => "gather-scatter",
            PatternKind::ScatterGather => "scatter-gather",
            PatternKind::SimpleCycle => "simple cycle",
            PatternKind::Random => "random",
            PatternKind::Bipartite => "bipartite",
            PatternKind::Stack => "stack",
            PatternKind::None => "None",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Thresholds shared by every detector rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Minimum distinct counterparties for fan, scatter and gather rules.
    pub min_fan: usize,
    /// Burst window for fan rules, in minutes.
    pub window_minutes: i64,
    /// Relative |sum(in) - sum(out)| / sum(in) tolerance for gather-scatter.
    pub conservation_tol: f64,
    /// Longest cycle length reported.
    pub max_cycle_len: usize,
    /// Minimum size of each side of a bipartite layer.
    pub bipartite_min_side: usize,
    /// Minimum fraction of the side product covered by distinct transfer pairs.
    pub bipartite_min_density: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            min_fan: 3,
            window_minutes: 72 * 60,
            conservation_tol: 0.15,
            max_cycle_len: 6,
            bipartite_min_side: 3,
            bipartite_min_density: 0.6,
        }
    }
}

/// One detected pattern instance. `evidence` is a minimal witness: dropping
/// any evidence edge leaves the claimed participant set unsupported under the
/// kind's rule. `score` is 1.0 when every structural and temporal condition
/// was verified, 0.5 when a gather-scatter match skipped the conservation
/// check because the flows mix currencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMatch {
    pub kind: PatternKind,
    pub participants: BTreeSet<AccountId>,
    pub evidence: BTreeSet<EdgeId>,
    pub score: f64,
}

impl PatternMatch {
    /// Canonical report order: kind, then smallest participant id, then the
    /// full participant and evidence sets.
    pub(crate) fn sort_key(&self) -> (PatternKind, Option<AccountId>, Vec<AccountId>, Vec<EdgeId>) {
        (
            self.kind,
            self.participants.iter().next().cloned(),
            self.participants.iter().cloned().collect(),
            self.evidence.iter().copied().collect(),
        )
    }
}
