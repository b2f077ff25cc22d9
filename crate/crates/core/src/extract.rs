//! Ego-subgraph extraction around a focal transfer: bounded breadth-first
//! expansion over the undirected view of account-to-account transfers.
//! Banks never contribute hops; memberships ride along with their accounts.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_store::{
    AccountId, AccountNode, BankId, EdgeId, GraphError, TimeInterval, Timestamp,
    TransactionGraph, TransferEdge,
};
use crate::typology::PatternKind;

/// Symmetric slack around the focal timestamp, in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowAround {
    pub before_minutes: i64,
    pub after_minutes: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Hop limit counted over account nodes only.
    pub k: u32,
    /// Cap on account nodes kept, in first-touch BFS order. The two focal
    /// endpoints are always kept.
    pub max_nodes: usize,
    /// Per-direction cap on edges considered per account, nearest to the
    /// focal timestamp first (ties by edge id).
    pub max_edges_per_account: usize,
    pub time_window: Option<WindowAround>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            k: 2,
            max_nodes: 64,
            max_edges_per_account: 32,
            time_window: None,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), ExtractError> {
        if self.k < 1 {
            return Err(ExtractError::InvalidConfig("k must be at least 1"));
        }
        if self.max_nodes < 1 || self.max_edges_per_account < 1 {
            return Err(ExtractError::InvalidConfig("caps must be at least 1"));
        }
        if let Some(w) = &self.time_window {
            if w.before_minutes < 0 || w.after_minutes < 0 {
                return Err(ExtractError::InvalidConfig("window minutes must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Ground-truth annotation carried by synthetic subgraphs and by extractions
/// from labeled edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub is_laundering: bool,
    pub patterns: BTreeSet<PatternKind>,
}

/// A focal transfer plus its bounded neighborhood. Collections are kept in
/// canonical order: accounts and banks lexicographic, transfers by
/// (timestamp, source, dest, amount, …, id).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub focal: TransferEdge,
    pub accounts: Vec<AccountNode>,
    pub banks: Vec<BankId>,
    pub transfers: Vec<TransferEdge>,
    #[serde(default)]
    pub truth: Option<GroundTruth>,
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("invalid extraction config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid subgraph: {0}")]
    InvalidSubgraph(String),
}

/// Total canonical order on transfers used everywhere a deterministic
/// sequence is needed.
pub(crate) fn transfer_sort_key(e: &TransferEdge) -> impl Ord {
    (
        e.timestamp,
        e.source.clone(),
        e.dest.clone(),
        e.paid.minor_units(),
        e.paid.currency().to_string(),
        e.payment_format.clone(),
        e.received.minor_units(),
        e.received.currency().to_string(),
        e.id,
    )
}

impl Subgraph {
    /// Normalizes collections into canonical order and checks the structural
    /// invariants (endpoint closure, bank closure, focal membership).
    pub fn new(
        focal: TransferEdge,
        mut accounts: Vec<AccountNode>,
        mut banks: Vec<BankId>,
        mut transfers: Vec<TransferEdge>,
        truth: Option<GroundTruth>,
    ) -> Result<Self, ExtractError> {
        accounts.sort_by(|a, b| a.id.cmp(&b.id));
        accounts.dedup_by(|a, b| a.id == b.id);
        banks.sort();
        banks.dedup();
        transfers.sort_by_key(transfer_sort_key);

        let account_ids: HashSet<&AccountId> = accounts.iter().map(|a| &a.id).collect();
        let bank_ids: HashSet<&BankId> = banks.iter().collect();
        for t in &transfers {
            for end in [&t.source, &t.dest] {
                if !account_ids.contains(end) {
                    return Err(ExtractError::InvalidSubgraph(format!(
                        "transfer endpoint {end} is not an included account"
                    )));
                }
            }
        }
        for a in &accounts {
            if let Some(bank) = &a.bank {
                if !bank_ids.contains(bank) {
                    return Err(ExtractError::InvalidSubgraph(format!(
                        "account {} belongs to {} which is not an included bank",
                        a.id, bank
                    )));
                }
            }
        }
        if !transfers.iter().any(|t| t.id == focal.id && *t == focal) {
            return Err(ExtractError::InvalidSubgraph(
                "focal transfer is not among the included transfers".to_string(),
            ));
        }
        Ok(Subgraph { focal, accounts, banks, transfers, truth })
    }

    pub fn account_ids(&self) -> Vec<&AccountId> {
        self.accounts.iter().map(|a| &a.id).collect()
    }

    /// Field-by-field equality on the content the canonical text form carries:
    /// node sets, memberships, and transfer attributes. Edge ids, ground truth
    /// and focal identity are intentionally excluded.
    pub fn content_eq(&self, other: &Subgraph) -> bool {
        let nodes = |s: &Subgraph| {
            s.accounts
                .iter()
                .map(|a| (a.id.clone(), a.bank.clone()))
                .collect::<Vec<_>>()
        };
        let edges = |s: &Subgraph| {
            s.transfers
                .iter()
                .map(|t| {
                    (
                        t.timestamp,
                        t.source.clone(),
                        t.dest.clone(),
                        t.paid.clone(),
                        t.payment_format.clone(),
                    )
                })
                .collect::<Vec<_>>()
        };
        nodes(self) == nodes(other) && self.banks == other.banks && edges(self) == edges(other)
    }
}

/// FNV-1a, the documented 64-bit fingerprint primitive.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Stable 64-bit identity of a subgraph: FNV-1a over its canonical text form
/// (no focal marker).
pub fn subgraph_fingerprint(sub: &Subgraph) -> u64 {
    let serialized = crate::serialize::serialize(sub);
    fnv1a64(serialized.text.as_bytes())
}

struct Neighborhood {
    /// Edge ids nearest the focal timestamp first (|dt|, then id), out- and
    /// in-direction capped separately, then merged.
    edges: Vec<EdgeId>,
}

/// Selects up to `cap` ids from a (timestamp, id)-sorted adjacency list,
/// nearest to `pivot` first, ties broken by smaller |dt| then smaller id.
fn nearest_by_time(
    graph: &TransactionGraph,
    ids: &[EdgeId],
    pivot: &Timestamp,
    window: Option<&TimeInterval>,
    cap: usize,
) -> Vec<EdgeId> {
    let in_window: Vec<EdgeId> = match window {
        Some(w) => ids
            .iter()
            .copied()
            .filter(|&id| w.contains(&graph.edges()[id as usize].timestamp))
            .collect(),
        None => ids.to_vec(),
    };
    if in_window.len() <= cap {
        return in_window;
    }
    // Two cursors walking outward from the pivot position. The list is
    // (timestamp, id)-sorted, so each side is visited in increasing |dt|.
    let split = in_window
        .partition_point(|&id| graph.edges()[id as usize].timestamp < *pivot);
    let mut left = split as isize - 1;
    let mut right = split;
    let mut picked: Vec<EdgeId> = Vec::with_capacity(cap);
    let dt = |id: EdgeId| {
        let e = &graph.edges()[id as usize];
        e.timestamp.abs_minutes_between(pivot)
    };
    while picked.len() < cap {
        let l = (left >= 0).then(|| in_window[left as usize]);
        let r = (right < in_window.len()).then(|| in_window[right]);
        match (l, r) {
            (Some(a), Some(b)) => {
                if (dt(a), a) <= (dt(b), b) {
                    picked.push(a);
                    left -= 1;
                } else {
                    picked.push(b);
                    right += 1;
                }
            }
            (Some(a), None) => {
                picked.push(a);
                left -= 1;
            }
            (None, Some(b)) => {
                picked.push(b);
                right += 1;
            }
            (None, None) => break,
        }
    }
    picked
}

/// Extracts the k-hop neighborhood of a focal transfer. Deterministic for a
/// given (graph, focal, config); without caps or window the account set is
/// exactly the k-hop undirected ball around the focal endpoints and the
/// transfer set is the induced edge set.
pub fn extract_khop(
    graph: &TransactionGraph,
    focal_id: EdgeId,
    cfg: &ExtractionConfig,
) -> Result<Subgraph, ExtractError> {
    cfg.validate()?;
    let focal = graph.edge(focal_id)?.clone();
    let window = cfg.time_window.map(|w| TimeInterval {
        start: focal.timestamp.plus_minutes(-w.before_minutes),
        end: focal.timestamp.plus_minutes(w.after_minutes),
    });

    let mut neighborhoods: HashMap<u32, Neighborhood> = HashMap::new();
    let mut neighborhood = |slot: u32| -> Vec<EdgeId> {
        neighborhoods
            .entry(slot)
            .or_insert_with(|| {
                let mut out = nearest_by_time(
                    graph,
                    graph.out_ids(slot),
                    &focal.timestamp,
                    window.as_ref(),
                    cfg.max_edges_per_account,
                );
                let inn = nearest_by_time(
                    graph,
                    graph.in_ids(slot),
                    &focal.timestamp,
                    window.as_ref(),
                    cfg.max_edges_per_account,
                );
                out.extend(inn);
                let dt = |id: EdgeId| {
                    graph.edges()[id as usize]
                        .timestamp
                        .abs_minutes_between(&focal.timestamp)
                };
                out.sort_by_key(|&id| (dt(id), id));
                out.dedup();
                Neighborhood { edges: out }
            })
            .edges
            .clone()
    };

    // First-touch BFS over accounts; the focal endpoints seed the frontier
    // and are kept regardless of max_nodes.
    let source_slot = graph
        .account_slot(&focal.source)
        .expect("focal source is interned");
    let dest_slot = graph.account_slot(&focal.dest).expect("focal dest is interned");
    let mut included: Vec<u32> = Vec::new();
    let mut seen: HashSet<u32> = HashSet::new();
    for slot in [source_slot, dest_slot] {
        if seen.insert(slot) {
            included.push(slot);
        }
    }
    let mut frontier: Vec<u32> = included.clone();
    for _depth in 0..cfg.k {
        let mut next: Vec<u32> = Vec::new();
        for &slot in &frontier {
            for id in neighborhood(slot) {
                let e = &graph.edges()[id as usize];
                let s = graph.account_slot(&e.source).unwrap();
                let d = graph.account_slot(&e.dest).unwrap();
                let other = if s == slot { d } else { s };
                if other == slot || seen.contains(&other) {
                    continue;
                }
                if included.len() >= cfg.max_nodes {
                    continue;
                }
                seen.insert(other);
                included.push(other);
                next.push(other);
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    // Induced transfer set over the kept accounts, restricted to each
    // account's capped neighborhood. The focal transfer always survives.
    let mut edge_ids: BTreeSet<EdgeId> = BTreeSet::new();
    edge_ids.insert(focal.id);
    for &slot in &included {
        for id in neighborhood(slot) {
            let e = &graph.edges()[id as usize];
            let s = graph.account_slot(&e.source).unwrap();
            let d = graph.account_slot(&e.dest).unwrap();
            if seen.contains(&s) && seen.contains(&d) {
                edge_ids.insert(id);
            }
        }
    }

    let accounts: Vec<AccountNode> = included
        .iter()
        .map(|&slot| graph.accounts()[slot as usize].clone())
        .collect();
    let banks: Vec<BankId> = accounts
        .iter()
        .filter_map(|a| a.bank.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let transfers: Vec<TransferEdge> = edge_ids
        .iter()
        .map(|&id| graph.edges()[id as usize].clone())
        .collect();

    let truth = focal.is_laundering.map(|flag| GroundTruth {
        is_laundering: flag,
        patterns: match (flag, focal.pattern_label) {
            (true, Some(kind)) => BTreeSet::from([kind]),
            (true, None) => BTreeSet::new(),
            (false, _) => BTreeSet::from([PatternKind::None]),
        },
    });

    Subgraph::new(focal, accounts, banks, transfers, truth)
}
