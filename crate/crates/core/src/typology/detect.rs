//! Rule-based detectors. One formalization per kind:
//!
//! - fan-out: an account pays `min_fan`+ distinct counterparties inside one
//!   burst window; fan-in is the mirror image. One maximal match per hub.
//! - gather-scatter: a middle collects from `min_fan`+ distinct sources, then
//!   pays `min_fan`+ distinct destinations, every counted inflow strictly
//!   before every counted outflow, and the phase sums balance within
//!   `conservation_tol` (skipped, score 0.5, when currencies mix).
//! - scatter-gather: a source reaches `min_fan`+ intermediaries that each
//!   forward to one common sink, inflow before outflow per intermediary.
//! - simple cycle: a directed cycle of 3..=`max_cycle_len` distinct accounts
//!   with strictly increasing timestamps; every such cycle is reported.
//! - bipartite: disjoint sides A, B with `bipartite_min_side`+ accounts each,
//!   all transfers A->B, distinct-pair density over |A|x|B| at least
//!   `bipartite_min_density`, and no transfers inside a side or from B to A.
//! - stack: two bipartite layers chained middle-to-middle (layer one's B side
//!   is layer two's A side) with layer-one activity strictly before layer two.
//!
//! `random` is a generator-only label; no rule reports it. Self-transfers
//! count for no rule, but an intra-side self-transfer still disqualifies a
//! bipartite side.

use std::collections::{BTreeMap, BTreeSet};

use crate::extract::Subgraph;
use crate::graph_store::{AccountId, EdgeId, Timestamp, TransferEdge};

use super::{DetectorConfig, PatternKind, PatternMatch};

/// Every match under the rules above, canonically ordered by
/// (kind, smallest participant, participants, evidence).
pub fn detect(sub: &Subgraph, cfg: &DetectorConfig) -> Vec<PatternMatch> {
    let view = View::build(sub);
    let mut matches: Vec<PatternMatch> = Vec::new();
    matches.extend(fan_matches(&view, cfg, Direction::Out));
    matches.extend(fan_matches(&view, cfg, Direction::In));
    matches.extend(gather_scatter(&view, cfg));
    matches.extend(scatter_gather(&view, cfg));
    matches.extend(cycles(&view, cfg));
    let layers = bipartite_layers(&view, cfg);
    matches.extend(layers.iter().map(|l| l.to_match()));
    matches.extend(stacks(&layers));
    matches.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    matches
}

struct View<'a> {
    /// All transfers including self-loops, sorted by (timestamp, id).
    transfers: Vec<&'a TransferEdge>,
    /// Adjacency without self-loops, each list sorted by (timestamp, id).
    out: BTreeMap<&'a AccountId, Vec<&'a TransferEdge>>,
    inn: BTreeMap<&'a AccountId, Vec<&'a TransferEdge>>,
}

impl<'a> View<'a> {
    fn build(sub: &'a Subgraph) -> Self {
        let mut transfers: Vec<&TransferEdge> = sub.transfers.iter().collect();
        transfers.sort_by_key(|e| (e.timestamp, e.id));
        let mut out: BTreeMap<&AccountId, Vec<&TransferEdge>> = BTreeMap::new();
        let mut inn: BTreeMap<&AccountId, Vec<&TransferEdge>> = BTreeMap::new();
        for &e in &transfers {
            if e.source == e.dest {
                continue;
            }
            out.entry(&e.source).or_default().push(e);
            inn.entry(&e.dest).or_default().push(e);
        }
        View { transfers, out, inn }
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Out,
    In,
}

fn fan_matches(view: &View, cfg: &DetectorConfig, dir: Direction) -> Vec<PatternMatch> {
    let (adjacency, kind) = match dir {
        Direction::Out => (&view.out, PatternKind::FanOut),
        Direction::In => (&view.inn, PatternKind::FanIn),
    };
    fn counterparty<'a>(e: &'a TransferEdge, dir: Direction) -> &'a AccountId {
        match dir {
            Direction::Out => &e.dest,
            Direction::In => &e.source,
        }
    }

    let mut matches = Vec::new();
    for (&hub, edges) in adjacency {
        // Best burst window: maximal distinct counterparties, earliest anchor
        // on ties. Anchoring at each edge covers every candidate window.
        let mut best: Option<(usize, usize)> = None;
        for (i, anchor) in edges.iter().enumerate() {
            let end = anchor.timestamp.plus_minutes(cfg.window_minutes);
            let count = edges[i..]
                .iter()
                .take_while(|e| e.timestamp <= end)
                .map(|e| counterparty(e, dir))
                .collect::<BTreeSet<_>>()
                .len();
            if best.map_or(true, |(c, _)| count > c) {
                best = Some((count, i));
            }
        }
        let Some((count, i)) = best else { continue };
        if count < cfg.min_fan {
            continue;
        }
        let end = edges[i].timestamp.plus_minutes(cfg.window_minutes);
        let mut evidence: BTreeSet<EdgeId> = BTreeSet::new();
        let mut parties: BTreeSet<AccountId> = BTreeSet::new();
        let mut seen: BTreeSet<&AccountId> = BTreeSet::new();
        for e in edges[i..].iter().take_while(|e| e.timestamp <= end) {
            // Lists are (timestamp, id)-sorted, so the first sighting of a
            // counterparty is its canonical witness edge.
            if seen.insert(counterparty(e, dir)) {
                evidence.insert(e.id);
                parties.insert(counterparty(e, dir).clone());
            }
        }
        parties.insert(hub.clone());
        matches.push(PatternMatch { kind, participants: parties, evidence, score: 1.0 });
    }
    matches
}

fn gather_scatter(view: &View, cfg: &DetectorConfig) -> Vec<PatternMatch> {
    let mut matches = Vec::new();
    for (&mid, outs) in &view.out {
        let Some(ins) = view.inn.get(mid) else { continue };

        // Candidate phase boundary at each outflow; inflows strictly before
        // the boundary, outflows from it onward.
        let mut best: Option<(usize, usize)> = None; // (distinct total, split index)
        for j in 0..outs.len() {
            let split = outs[j].timestamp;
            let phase1: Vec<&TransferEdge> =
                ins.iter().copied().take_while(|e| e.timestamp < split).collect();
            let phase2 = &outs[j..];
            let srcs: BTreeSet<&AccountId> = phase1.iter().map(|e| &e.source).collect();
            let dsts: BTreeSet<&AccountId> = phase2.iter().map(|e| &e.dest).collect();
            if srcs.len() < cfg.min_fan || dsts.len() < cfg.min_fan {
                continue;
            }
            if !conservation_holds(&phase1, phase2, cfg).0 {
                continue;
            }
            let total = srcs.len() + dsts.len();
            if best.map_or(true, |(t, _)| total > t) {
                best = Some((total, j));
            }
        }
        let Some((_, j)) = best else { continue };

        let split = outs[j].timestamp;
        let phase1: Vec<&TransferEdge> =
            ins.iter().copied().take_while(|e| e.timestamp < split).collect();
        let phase2 = &outs[j..];
        let (_, score) = conservation_holds(&phase1, phase2, cfg);

        let mut participants: BTreeSet<AccountId> = BTreeSet::new();
        let mut evidence: BTreeSet<EdgeId> = BTreeSet::new();
        let mut seen: BTreeSet<&AccountId> = BTreeSet::new();
        for e in &phase1 {
            if seen.insert(&e.source) {
                evidence.insert(e.id);
                participants.insert(e.source.clone());
            }
        }
        seen.clear();
        for e in phase2 {
            if seen.insert(&e.dest) {
                evidence.insert(e.id);
                participants.insert(e.dest.clone());
            }
        }
        participants.insert(mid.clone());
        matches.push(PatternMatch {
            kind: PatternKind::GatherScatter,
            participants,
            evidence,
            score,
        });
    }
    matches
}

/// Returns (rule satisfied, score). Mixed currencies skip the check and mark
/// the match 0.5; a zero inflow sum cannot balance anything and fails.
fn conservation_holds(
    phase1: &[&TransferEdge],
    phase2: &[&TransferEdge],
    cfg: &DetectorConfig,
) -> (bool, f64) {
    let currencies: BTreeSet<&str> = phase1
        .iter()
        .chain(phase2.iter())
        .map(|e| e.paid.currency())
        .collect();
    if currencies.len() > 1 {
        return (true, 0.5);
    }
    let sum_in: i64 = phase1.iter().map(|e| e.paid.minor_units()).sum();
    let sum_out: i64 = phase2.iter().map(|e| e.paid.minor_units()).sum();
    if sum_in == 0 {
        return (false, 1.0);
    }
    let rel = (sum_in - sum_out).abs() as f64 / sum_in as f64;
    (rel <= cfg.conservation_tol, 1.0)
}

fn scatter_gather(view: &View, cfg: &DetectorConfig) -> Vec<PatternMatch> {
    // (source, sink) -> per-intermediary witness pairs.
    type Witness<'a> = (&'a AccountId, EdgeId, EdgeId);
    let mut candidates: BTreeMap<(&AccountId, &AccountId), Vec<Witness>> = BTreeMap::new();

    for (&mid, ins) in &view.inn {
        let Some(outs) = view.out.get(mid) else { continue };
        let mut first_in: BTreeMap<&AccountId, &TransferEdge> = BTreeMap::new();
        for e in ins {
            first_in.entry(&e.source).or_insert(e);
        }
        let mut last_out: BTreeMap<&AccountId, Timestamp> = BTreeMap::new();
        for e in outs {
            last_out.insert(&e.dest, e.timestamp); // sorted, last write wins
        }
        for (&s, &e_in) in &first_in {
            for (&k, last_ts) in &last_out {
                if s == k || *last_ts <= e_in.timestamp {
                    continue;
                }
                let forward = outs
                    .iter()
                    .find(|e| e.dest == *k && e.timestamp > e_in.timestamp)
                    .expect("an outflow later than the inflow exists");
                candidates.entry((s, k)).or_default().push((mid, e_in.id, forward.id));
            }
        }
    }

    let mut matches = Vec::new();
    for ((s, k), mids) in candidates {
        if mids.len() < cfg.min_fan {
            continue;
        }
        let mut participants: BTreeSet<AccountId> = BTreeSet::new();
        let mut evidence: BTreeSet<EdgeId> = BTreeSet::new();
        participants.insert(s.clone());
        participants.insert(k.clone());
        for (mid, e_in, e_out) in mids {
            participants.insert(mid.clone());
            evidence.insert(e_in);
            evidence.insert(e_out);
        }
        matches.push(PatternMatch {
            kind: PatternKind::ScatterGather,
            participants,
            evidence,
            score: 1.0,
        });
    }
    matches
}

fn cycles(view: &View, cfg: &DetectorConfig) -> Vec<PatternMatch> {
    let mut matches = Vec::new();
    if cfg.max_cycle_len < 3 {
        return matches;
    }
    // Each temporally increasing cycle is discovered exactly once, from its
    // minimum-timestamp edge: later edges must strictly increase, so no other
    // rotation can close.
    for &e0 in &view.transfers {
        if e0.source == e0.dest {
            continue;
        }
        let start = &e0.source;
        let mut path: Vec<&TransferEdge> = vec![e0];
        let mut visited: BTreeSet<&AccountId> = BTreeSet::from([&e0.source, &e0.dest]);
        walk(view, cfg, start, &e0.dest, e0.timestamp, &mut path, &mut visited, &mut matches);
    }
    return matches;

    #[allow(clippy::too_many_arguments)]
    fn walk<'a>(
        view: &View<'a>,
        cfg: &DetectorConfig,
        start: &'a AccountId,
        current: &'a AccountId,
        last_ts: Timestamp,
        path: &mut Vec<&'a TransferEdge>,
        visited: &mut BTreeSet<&'a AccountId>,
        matches: &mut Vec<PatternMatch>,
    ) {
        let Some(edges) = view.out.get(current) else { return };
        for &f in edges {
            if f.timestamp <= last_ts {
                continue;
            }
            if &f.dest == start {
                let len = path.len() + 1;
                if (3..=cfg.max_cycle_len).contains(&len) {
                    let mut participants: BTreeSet<AccountId> = BTreeSet::new();
                    let mut evidence: BTreeSet<EdgeId> = BTreeSet::new();
                    for e in path.iter().chain([&f]) {
                        participants.insert(e.source.clone());
                        evidence.insert(e.id);
                    }
                    matches.push(PatternMatch {
                        kind: PatternKind::SimpleCycle,
                        participants,
                        evidence,
                        score: 1.0,
                    });
                }
                continue;
            }
            if visited.contains(&f.dest) || path.len() + 1 >= cfg.max_cycle_len {
                continue;
            }
            visited.insert(&f.dest);
            path.push(f);
            walk(view, cfg, start, &f.dest, f.timestamp, path, visited, matches);
            path.pop();
            visited.remove(&f.dest);
        }
    }
}

pub(super) struct Layer {
    a_side: BTreeSet<AccountId>,
    b_side: BTreeSet<AccountId>,
    evidence: BTreeSet<EdgeId>,
    first_activity: Timestamp,
    last_activity: Timestamp,
}

impl Layer {
    fn to_match(&self) -> PatternMatch {
        PatternMatch {
            kind: PatternKind::Bipartite,
            participants: self.a_side.union(&self.b_side).cloned().collect(),
            evidence: self.evidence.clone(),
            score: 1.0,
        }
    }
}

/// Groups senders that share a destination into candidate A sides; the B side
/// is the union of their destinations. Sides must be disjoint, big enough,
/// dense enough, and free of intra-side or reverse transfers.
fn bipartite_layers(view: &View, cfg: &DetectorConfig) -> Vec<Layer> {
    let senders: Vec<&AccountId> = view.out.keys().copied().collect();
    let index: BTreeMap<&AccountId, usize> =
        senders.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    let mut dsu: Vec<usize> = (0..senders.len()).collect();
    fn root(dsu: &mut Vec<usize>, mut x: usize) -> usize {
        while dsu[x] != x {
            dsu[x] = dsu[dsu[x]];
            x = dsu[x];
        }
        x
    }
    let mut by_dest: BTreeMap<&AccountId, Vec<usize>> = BTreeMap::new();
    for (&sender, edges) in &view.out {
        for e in edges {
            by_dest.entry(&e.dest).or_default().push(index[&sender]);
        }
    }
    for members in by_dest.values() {
        for w in members.windows(2) {
            let (a, b) = (root(&mut dsu, w[0]), root(&mut dsu, w[1]));
            if a != b {
                dsu[a.max(b)] = a.min(b);
            }
        }
    }
    let mut components: BTreeMap<usize, BTreeSet<&AccountId>> = BTreeMap::new();
    for i in 0..senders.len() {
        let r = root(&mut dsu, i);
        components.entry(r).or_default().insert(senders[i]);
    }

    let mut layers = Vec::new();
    'component: for a_side in components.values() {
        if a_side.len() < cfg.bipartite_min_side {
            continue;
        }
        let mut b_side: BTreeSet<&AccountId> = BTreeSet::new();
        for &a in a_side {
            for e in &view.out[a] {
                b_side.insert(&e.dest);
            }
        }
        if b_side.len() < cfg.bipartite_min_side {
            continue;
        }
        if a_side.intersection(&b_side).next().is_some() {
            continue;
        }
        for e in &view.transfers {
            let src_in_b = b_side.contains(&e.source);
            let dst_in_b = b_side.contains(&e.dest);
            let dst_in_a = a_side.contains(&e.dest);
            // Intra-B, B->A, and self-transfers inside B all disqualify;
            // intra-A cannot happen (an A->A edge would put the dest in B).
            if src_in_b && (dst_in_b || dst_in_a) {
                continue 'component;
            }
        }

        // Distinct-pair representatives, earliest edge per pair.
        let mut pair_repr: BTreeMap<(&AccountId, &AccountId), &TransferEdge> = BTreeMap::new();
        let mut first_activity: Option<Timestamp> = None;
        let mut last_activity: Option<Timestamp> = None;
        for &a in a_side {
            for &e in &view.out[a] {
                pair_repr.entry((&e.source, &e.dest)).or_insert(e);
                if first_activity.map_or(true, |t| e.timestamp < t) {
                    first_activity = Some(e.timestamp);
                }
                if last_activity.map_or(true, |t| e.timestamp > t) {
                    last_activity = Some(e.timestamp);
                }
            }
        }
        let product = a_side.len() * b_side.len();
        let density = pair_repr.len() as f64 / product as f64;
        if density < cfg.bipartite_min_density {
            continue;
        }

        // Minimal witness: cover every account on both sides, then pad with
        // the earliest remaining pairs up to the density threshold count.
        let need = ((cfg.bipartite_min_density * product as f64).ceil() as usize).max(1);
        let mut selected: BTreeSet<(&AccountId, &AccountId)> = BTreeSet::new();
        for &a in a_side {
            if let Some(k) = earliest_pair(&pair_repr, |k| k.0 == a) {
                selected.insert(k);
            }
        }
        for &b in &b_side {
            if !selected.iter().any(|k| k.1 == b) {
                if let Some(k) = earliest_pair(&pair_repr, |k| k.1 == b) {
                    selected.insert(k);
                }
            }
        }
        if selected.len() < need {
            let mut rest: Vec<(&AccountId, &AccountId)> = pair_repr
                .keys()
                .filter(|k| !selected.contains(*k))
                .copied()
                .collect();
            rest.sort_by_key(|k| (pair_repr[k].timestamp, pair_repr[k].id));
            for k in rest {
                if selected.len() >= need {
                    break;
                }
                selected.insert(k);
            }
        }
        let evidence: BTreeSet<EdgeId> = selected.iter().map(|k| pair_repr[k].id).collect();

        layers.push(Layer {
            a_side: a_side.iter().map(|&a| a.clone()).collect(),
            b_side: b_side.iter().map(|&b| b.clone()).collect(),
            evidence,
            first_activity: first_activity.expect("layer has edges"),
            last_activity: last_activity.expect("layer has edges"),
        });
    }
    layers
}

fn earliest_pair<'a>(
    pairs: &BTreeMap<(&'a AccountId, &'a AccountId), &'a TransferEdge>,
    filter: impl Fn(&(&'a AccountId, &'a AccountId)) -> bool,
) -> Option<(&'a AccountId, &'a AccountId)> {
    pairs
        .iter()
        .filter(|(k, _)| filter(k))
        .min_by_key(|(_, e)| (e.timestamp, e.id))
        .map(|(k, _)| *k)
}

fn stacks(layers: &[Layer]) -> Vec<PatternMatch> {
    let mut matches = Vec::new();
    for lower in layers {
        for upper in layers {
            if lower.b_side != upper.a_side {
                continue;
            }
            if lower.last_activity >= upper.first_activity {
                continue;
            }
            let mut participants = lower.a_side.clone();
            participants.extend(lower.b_side.iter().cloned());
            participants.extend(upper.b_side.iter().cloned());
            matches.push(PatternMatch {
                kind: PatternKind::Stack,
                participants,
                evidence: lower.evidence.union(&upper.evidence).copied().collect(),
                score: 1.0,
            });
        }
    }
    matches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::GroundTruth;
    use crate::graph_store::{AccountNode, BankId, EntityType, Money};

    pub(crate) fn build_subgraph(edges: Vec<(&str, &str, i64, i64)>) -> Subgraph {
        // (source, dest, amount minor, minute offset)
        build_subgraph_cur(edges.into_iter().map(|(s, d, m, t)| (s, d, m, t, "Euro")).collect())
    }

    pub(crate) fn build_subgraph_cur(edges: Vec<(&str, &str, i64, i64, &str)>) -> Subgraph {
        let base = Timestamp::from_ymd_hm(2022, 9, 1, 0, 0).unwrap();
        let bank = BankId::from_raw("t");
        let mut names: BTreeSet<&str> = BTreeSet::new();
        for (s, d, _, _, _) in &edges {
            names.insert(s);
            names.insert(d);
        }
        let accounts: Vec<AccountNode> = names
            .iter()
            .map(|n| AccountNode {
                id: AccountId::from_raw(n),
                bank: Some(bank.clone()),
                entity_type: EntityType::Unknown,
                creation_date: None,
            })
            .collect();
        let transfers: Vec<TransferEdge> = edges
            .iter()
            .enumerate()
            .map(|(i, (s, d, minor, minute, cur))| TransferEdge {
                id: i as EdgeId,
                source: AccountId::from_raw(s),
                dest: AccountId::from_raw(d),
                paid: Money::new(*minor, cur).unwrap(),
                received: Money::new(*minor, cur).unwrap(),
                payment_format: "Wire".to_string(),
                timestamp: base.plus_minutes(*minute),
                is_laundering: None,
                pattern_label: None,
            })
            .collect();
        Subgraph::new(
            transfers[0].clone(),
            accounts,
            vec![bank],
            transfers,
            Some(GroundTruth { is_laundering: true, patterns: BTreeSet::new() }),
        )
        .unwrap()
    }

    fn kinds(matches: &[PatternMatch]) -> BTreeSet<PatternKind> {
        matches.iter().map(|m| m.kind).collect()
    }

    #[test]
    fn fan_out_needs_min_fan_distinct_destinations() {
        let cfg = DetectorConfig::default();
        let two = build_subgraph(vec![
            ("h", "a", 100, 0),
            ("h", "b", 100, 10),
            ("h", "a", 100, 20),
        ]);
        assert!(detect(&two, &cfg).is_empty());

        let three = build_subgraph(vec![
            ("h", "a", 100, 0),
            ("h", "b", 100, 10),
            ("h", "c", 100, 20),
        ]);
        let found = detect(&three, &cfg);
        assert_eq!(kinds(&found), BTreeSet::from([PatternKind::FanOut]));
        let m = &found[0];
        assert_eq!(m.participants.len(), 4);
        assert_eq!(m.evidence.len(), 3);
    }

    #[test]
    fn fan_out_window_excludes_stale_edges() {
        let cfg = DetectorConfig::default();
        // Third destination appears later than the 72h window.
        let sub = build_subgraph(vec![
            ("h", "a", 100, 0),
            ("h", "b", 100, 10),
            ("h", "c", 100, 72 * 60 + 11),
        ]);
        assert!(detect(&sub, &cfg).is_empty());
    }

    #[test]
    fn fan_out_picks_maximal_window_and_one_match_per_hub() {
        let cfg = DetectorConfig::default();
        let sub = build_subgraph(vec![
            ("h", "a", 100, 0),
            ("h", "b", 100, 10),
            ("h", "c", 100, 20),
            ("h", "d", 100, 30),
            ("h", "e", 100, 40),
        ]);
        let found = detect(&sub, &cfg);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].participants.len(), 6);
        assert_eq!(found[0].evidence.len(), 5);
    }

    #[test]
    fn duplicate_destination_edges_do_not_inflate_evidence() {
        let cfg = DetectorConfig::default();
        let sub = build_subgraph(vec![
            ("h", "a", 100, 0),
            ("h", "a", 100, 5),
            ("h", "b", 100, 10),
            ("h", "c", 100, 20),
        ]);
        let found = detect(&sub, &cfg);
        assert_eq!(found.len(), 1);
        // One witness edge per distinct destination, the earliest.
        assert_eq!(found[0].evidence, BTreeSet::from([0, 2, 3]));
    }

    #[test]
    fn fan_in_mirrors_fan_out() {
        let cfg = DetectorConfig::default();
        let sub = build_subgraph(vec![
            ("a", "h", 100, 0),
            ("b", "h", 100, 10),
            ("c", "h", 100, 20),
        ]);
        let found = detect(&sub, &cfg);
        assert_eq!(kinds(&found), BTreeSet::from([PatternKind::FanIn]));
    }

    #[test]
    fn self_transfers_count_for_nothing() {
        let cfg = DetectorConfig::default();
        let sub = build_subgraph(vec![
            ("h", "h", 100, 0),
            ("h", "a", 100, 10),
            ("h", "b", 100, 20),
        ]);
        assert!(detect(&sub, &cfg).is_empty());
    }

    #[test]
    fn gather_scatter_requires_phase_order_and_conservation() {
        let cfg = DetectorConfig::default();
        let balanced = build_subgraph(vec![
            ("s1", "m", 1000, 0),
            ("s2", "m", 1000, 10),
            ("s3", "m", 1000, 20),
            ("m", "d1", 1000, 100),
            ("m", "d2", 1000, 110),
            ("m", "d3", 1000, 120),
        ]);
        let found = detect(&balanced, &cfg);
        assert!(kinds(&found).contains(&PatternKind::GatherScatter));
        let gs = found.iter().find(|m| m.kind == PatternKind::GatherScatter).unwrap();
        assert_eq!(gs.participants.len(), 7);
        assert_eq!(gs.evidence.len(), 6);
        assert_eq!(gs.score, 1.0);

        // Outflow sum 40% above inflow breaks conservation.
        let leaky = build_subgraph(vec![
            ("s1", "m", 1000, 0),
            ("s2", "m", 1000, 10),
            ("s3", "m", 1000, 20),
            ("m", "d1", 1400, 100),
            ("m", "d2", 1400, 110),
            ("m", "d3", 1400, 120),
        ]);
        assert!(!kinds(&detect(&leaky, &cfg)).contains(&PatternKind::GatherScatter));

        // Outflows before inflows break the phase order.
        let reversed = build_subgraph(vec![
            ("m", "d1", 1000, 0),
            ("m", "d2", 1000, 10),
            ("m", "d3", 1000, 20),
            ("s1", "m", 1000, 100),
            ("s2", "m", 1000, 110),
            ("s3", "m", 1000, 120),
        ]);
        assert!(!kinds(&detect(&reversed, &cfg)).contains(&PatternKind::GatherScatter));
    }

    #[test]
    fn gather_scatter_mixed_currency_skips_conservation_with_half_score() {
        let cfg = DetectorConfig::default();
        let sub = build_subgraph_cur(vec![
            ("s1", "m", 1000, 0, "Euro"),
            ("s2", "m", 1000, 10, "Euro"),
            ("s3", "m", 1000, 20, "Yen"),
            ("m", "d1", 9000, 100, "Euro"),
            ("m", "d2", 9000, 110, "Euro"),
            ("m", "d3", 9000, 120, "Euro"),
        ]);
        let found = detect(&sub, &cfg);
        let gs = found.iter().find(|m| m.kind == PatternKind::GatherScatter).unwrap();
        assert_eq!(gs.score, 0.5);
    }

    #[test]
    fn scatter_gather_needs_common_sink_and_per_mid_order() {
        let cfg = DetectorConfig::default();
        let sub = build_subgraph(vec![
            ("s", "m1", 500, 0),
            ("s", "m2", 500, 10),
            ("s", "m3", 500, 20),
            ("m1", "k", 500, 30),
            ("m2", "k", 500, 40),
            ("m3", "k", 500, 50),
        ]);
        let found = detect(&sub, &cfg);
        assert!(kinds(&found).contains(&PatternKind::ScatterGather));
        let sg = found.iter().find(|m| m.kind == PatternKind::ScatterGather).unwrap();
        assert_eq!(sg.participants.len(), 5);
        assert_eq!(sg.evidence.len(), 6);

        // One intermediary forwards before receiving: only two remain valid.
        let out_of_order = build_subgraph(vec![
            ("s", "m1", 500, 10),
            ("s", "m2", 500, 10),
            ("s", "m3", 500, 40),
            ("m1", "k", 500, 30),
            ("m2", "k", 500, 40),
            ("m3", "k", 500, 35),
        ]);
        assert!(!kinds(&detect(&out_of_order, &cfg)).contains(&PatternKind::ScatterGather));
    }

    #[test]
    fn cycle_detection_length_and_temporal_rules() {
        let cfg = DetectorConfig::default();
        let triangle = build_subgraph(vec![
            ("a", "b", 500, 0),
            ("b", "c", 500, 10),
            ("c", "a", 500, 20),
        ]);
        let found = detect(&triangle, &cfg);
        assert_eq!(kinds(&found), BTreeSet::from([PatternKind::SimpleCycle]));
        assert_eq!(found[0].evidence, BTreeSet::from([0, 1, 2]));

        // Back-and-forth is length two: not a cycle.
        let pair = build_subgraph(vec![("a", "b", 500, 0), ("b", "a", 500, 10)]);
        assert!(detect(&pair, &cfg).is_empty());

        // Non-increasing timestamps around the loop: not a cycle.
        let stale = build_subgraph(vec![
            ("a", "b", 500, 20),
            ("b", "c", 500, 10),
            ("c", "a", 500, 0),
        ]);
        assert!(detect(&stale, &cfg).is_empty());

        // Equal timestamps are not strictly increasing.
        let flat = build_subgraph(vec![
            ("a", "b", 500, 0),
            ("b", "c", 500, 0),
            ("c", "a", 500, 10),
        ]);
        assert!(detect(&flat, &cfg).is_empty());
    }

    #[test]
    fn parallel_edges_make_distinct_cycles() {
        let cfg = DetectorConfig::default();
        let sub = build_subgraph(vec![
            ("a", "b", 500, 0),
            ("a", "b", 600, 5),
            ("b", "c", 500, 10),
            ("c", "a", 500, 20),
        ]);
        let found = detect(&sub, &cfg);
        let cycles: Vec<_> =
            found.iter().filter(|m| m.kind == PatternKind::SimpleCycle).collect();
        assert_eq!(cycles.len(), 2);
    }

    #[test]
    fn cycle_longer_than_cap_is_ignored() {
        let mut cfg = DetectorConfig::default();
        cfg.max_cycle_len = 3;
        let square = build_subgraph(vec![
            ("a", "b", 500, 0),
            ("b", "c", 500, 10),
            ("c", "d", 500, 20),
            ("d", "a", 500, 30),
        ]);
        assert!(detect(&square, &cfg).is_empty());
    }

    #[test]
    fn bipartite_layer_shape() {
        let cfg = DetectorConfig::default();
        let mut edges = Vec::new();
        let a_side = ["a1", "a2", "a3"];
        let b_side = ["b1", "b2", "b3"];
        let mut t = 0;
        for a in a_side {
            for b in b_side {
                edges.push((a, b, 700, t));
                t += 7;
            }
        }
        let sub = build_subgraph(edges);
        let found = detect(&sub, &cfg);
        assert!(kinds(&found).contains(&PatternKind::Bipartite));
        let bip = found.iter().find(|m| m.kind == PatternKind::Bipartite).unwrap();
        assert_eq!(bip.participants.len(), 6);
        // Witness: ceil(0.6 * 9) = 6 pair edges.
        assert_eq!(bip.evidence.len(), 6);
        // Fan matches coexist: each a pays three accounts, each b receives
        // from three.
        assert!(kinds(&found).contains(&PatternKind::FanOut));
        assert!(kinds(&found).contains(&PatternKind::FanIn));
    }

    #[test]
    fn bipartite_rejects_sparse_or_polluted_sides() {
        let cfg = DetectorConfig::default();
        // Only four of nine pairs: density 0.44 < 0.6.
        let sparse = build_subgraph(vec![
            ("a1", "b1", 700, 0),
            ("a1", "b2", 700, 10),
            ("a2", "b2", 700, 20),
            ("a3", "b2", 700, 30),
            ("a3", "b3", 700, 40),
        ]);
        assert!(!kinds(&detect(&sparse, &cfg)).contains(&PatternKind::Bipartite));

        // Full grid plus one intra-B transfer disqualifies the layer.
        let mut edges = Vec::new();
        let mut t = 0;
        for a in ["a1", "a2", "a3"] {
            for b in ["b1", "b2", "b3"] {
                edges.push((a, b, 700, t));
                t += 7;
            }
        }
        edges.push(("b1", "b2", 700, 200));
        let polluted = build_subgraph(edges);
        assert!(!kinds(&detect(&polluted, &cfg)).contains(&PatternKind::Bipartite));
    }

    #[test]
    fn stack_is_two_chained_layers_in_time_order() {
        let cfg = DetectorConfig::default();
        let mut edges = Vec::new();
        let mut t = 0;
        for a in ["a1", "a2", "a3"] {
            for b in ["m1", "m2", "m3"] {
                edges.push((a, b, 700, t));
                t += 3;
            }
        }
        t = 500;
        for b in ["m1", "m2", "m3"] {
            for c in ["z1", "z2", "z3"] {
                edges.push((b, c, 700, t));
                t += 3;
            }
        }
        let sub = build_subgraph(edges.clone());
        let found = detect(&sub, &cfg);
        assert!(kinds(&found).contains(&PatternKind::Stack));
        let stack = found.iter().find(|m| m.kind == PatternKind::Stack).unwrap();
        assert_eq!(stack.participants.len(), 9);
        assert_eq!(stack.evidence.len(), 12);

        // Interleave the layers in time: chaining breaks.
        let mut interleaved = edges.clone();
        interleaved.push(("m1", "z1", 700, 1)); // layer-2 activity before layer-1 ends
        let sub2 = build_subgraph(interleaved);
        assert!(!kinds(&detect(&sub2, &cfg)).contains(&PatternKind::Stack));
    }

    #[test]
    fn matches_are_canonically_ordered_and_valid() {
        let cfg = DetectorConfig::default();
        let mut edges = Vec::new();
        let mut t = 0;
        for a in ["a1", "a2", "a3"] {
            for b in ["m1", "m2", "m3"] {
                edges.push((a, b, 700, t));
                t += 3;
            }
        }
        t = 500;
        for b in ["m1", "m2", "m3"] {
            for c in ["z1", "z2", "z3"] {
                edges.push((b, c, 700, t));
                t += 3;
            }
        }
        let sub = build_subgraph(edges);
        let found = detect(&sub, &cfg);
        let keys: Vec<_> = found.iter().map(|m| m.sort_key()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let ids: BTreeSet<AccountId> =
            sub.accounts.iter().map(|a| a.id.clone()).collect();
        let by_id: BTreeMap<EdgeId, &TransferEdge> =
            sub.transfers.iter().map(|e| (e.id, e)).collect();
        for m in &found {
            assert!(m.kind != PatternKind::None);
            assert!(!m.participants.is_empty());
            assert!(m.participants.iter().all(|p| ids.contains(p)));
            for e in &m.evidence {
                let edge = by_id[e];
                assert!(m.participants.contains(&edge.source));
                assert!(m.participants.contains(&edge.dest));
            }
        }
    }

    #[test]
    fn detect_is_deterministic() {
        let cfg = DetectorConfig::default();
        let sub = build_subgraph(vec![
            ("s1", "m", 1000, 0),
            ("s2", "m", 1000, 10),
            ("s3", "m", 1000, 20),
            ("m", "d1", 1000, 100),
            ("m", "d2", 1000, 110),
            ("m", "d3", 1000, 120),
        ]);
        assert_eq!(detect(&sub, &cfg), detect(&sub, &cfg));
    }
}
