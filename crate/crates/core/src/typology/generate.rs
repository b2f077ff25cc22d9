//! Seeded synthetic subgraphs, one laundering shape per case, plus benign
//! recurring-payment activity.
//!
//! Construction targets the default detector thresholds: every laundering
//! kind except `random` comes out detectable at `DetectorConfig::default()`
//! as long as `span_minutes` stays within the fan burst window. `random` is
//! the opposite: genuinely flagged activity with no recognizable shape, built
//! by rejection sampling until the default rules find nothing.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::extract::{GroundTruth, Subgraph};
use crate::graph_store::{
    AccountId, AccountNode, BankId, EntityType, Money, Timestamp, TransferEdge,
};

use super::{detect, DetectorConfig, PatternKind};

const PAYMENT_FORMATS: [&str; 4] = ["Wire", "ACH", "Cheque", "Credit Card"];
const REJECTION_ATTEMPTS: u32 = 100;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("no generator for pattern kind '{0}'")]
    UnsupportedKind(PatternKind),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("no undetectable '{kind}' case found in {attempts} attempts")]
    Unsatisfiable { kind: PatternKind, attempts: u32 },
}

/// Shape parameters for one synthetic laundering case.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub kind: PatternKind,
    /// Branching factor: destinations of a fan-out, intermediaries of a
    /// scatter-gather, accounts in a cycle, side size of a bipartite layer.
    pub fan: usize,
    /// Bipartite layers chained by a stack. Ignored by other kinds.
    pub layers: usize,
    /// Center of the jittered per-transfer amount.
    pub amount_base: Money,
    /// Relative amount jitter in [0, 1).
    pub jitter: f64,
    /// All activity lands inside this many minutes.
    pub span_minutes: i64,
    pub seed: u64,
}

impl GenConfig {
    /// Defaults that keep each kind comfortably above the default detector
    /// thresholds and inside its burst window.
    pub fn for_kind(kind: PatternKind, seed: u64) -> GenConfig {
        let fan = match kind {
            PatternKind::FanOut
            | PatternKind::FanIn
            | PatternKind::SimpleCycle
            | PatternKind::Random => 4,
            _ => 3,
        };
        GenConfig {
            kind,
            fan,
            layers: 2,
            amount_base: Money::new(860_000, "US Dollar").expect("valid base amount"),
            jitter: 0.1,
            span_minutes: 48 * 60,
            seed,
        }
    }

    fn validate(&self) -> Result<(), GenerateError> {
        let fail = |m: &str| Err(GenerateError::InvalidConfig(m.to_string()));
        if self.kind == PatternKind::None {
            return Err(GenerateError::UnsupportedKind(self.kind));
        }
        if self.fan < 3 {
            return fail("fan must be at least 3");
        }
        if self.kind == PatternKind::Stack && self.layers < 2 {
            return fail("a stack needs at least 2 layers");
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return fail("jitter must lie in [0, 1)");
        }
        if self.span_minutes < 2 * self.fan as i64 || self.span_minutes < 2 * self.layers as i64 {
            return fail("span_minutes too small for the requested shape");
        }
        if self.amount_base.minor_units() < 1 {
            return fail("amount_base must be positive");
        }
        Ok(())
    }
}

/// Shape parameters for one benign case: a few unrelated account pairs on
/// regular payment schedules with stable amounts.
#[derive(Debug, Clone, PartialEq)]
pub struct BenignConfig {
    pub pairs: usize,
    pub edges_per_pair: usize,
    pub amount_base: Money,
    pub span_minutes: i64,
    pub seed: u64,
}

impl BenignConfig {
    pub fn new(seed: u64) -> BenignConfig {
        BenignConfig {
            pairs: 2,
            edges_per_pair: 4,
            amount_base: Money::new(185_000, "US Dollar").expect("valid base amount"),
            span_minutes: 48 * 60,
            seed,
        }
    }

    fn validate(&self) -> Result<(), GenerateError> {
        let fail = |m: &str| Err(GenerateError::InvalidConfig(m.to_string()));
        if self.pairs < 1 || self.edges_per_pair < 1 {
            return fail("pairs and edges_per_pair must be at least 1");
        }
        if self.span_minutes < self.edges_per_pair as i64 {
            return fail("span_minutes too small for the schedule");
        }
        if self.amount_base.minor_units() < 1 {
            return fail("amount_base must be positive");
        }
        Ok(())
    }
}

/// Builds one synthetic laundering subgraph for `cfg.kind`.
pub fn generate(cfg: &GenConfig) -> Result<Subgraph, GenerateError> {
    cfg.validate()?;
    match cfg.kind {
        PatternKind::FanOut => Ok(fan_case(cfg, true)),
        PatternKind::FanIn => Ok(fan_case(cfg, false)),
        PatternKind::GatherScatter => Ok(gather_scatter_case(cfg)),
        PatternKind::ScatterGather => Ok(scatter_gather_case(cfg)),
        PatternKind::SimpleCycle => Ok(cycle_case(cfg)),
        PatternKind::Bipartite => Ok(bipartite_case(cfg)),
        PatternKind::Stack => Ok(stack_case(cfg)),
        PatternKind::Random => random_case(cfg),
        PatternKind::None => Err(GenerateError::UnsupportedKind(cfg.kind)),
    }
}

/// Builds one benign subgraph: disjoint pairs, even schedules, stable
/// amounts. Rejection-sampled like `random` so no rule fires on it.
pub fn generate_benign(cfg: &BenignConfig) -> Result<Subgraph, GenerateError> {
    cfg.validate()?;
    for attempt in 0..REJECTION_ATTEMPTS {
        let mut b = CaseBuilder::new(attempt_seed(cfg.seed, attempt));
        let interval = cfg.span_minutes / cfg.edges_per_pair as i64;
        for p in 0..cfg.pairs {
            let payer = b.account('P', p);
            let payee = b.account('Q', p);
            // One stable amount per pair: the schedule looks like rent or
            // salary, not structuring.
            let amount = b.jittered(&cfg.amount_base, 0.25);
            let format = b.format();
            for e in 0..cfg.edges_per_pair {
                let minute = e as i64 * interval + p as i64;
                b.transfer(&payer, &payee, amount.clone(), format, minute);
            }
        }
        let sub = b.finish(None);
        if detect(&sub, &DetectorConfig::default()).is_empty() {
            return Ok(sub);
        }
    }
    Err(GenerateError::Unsatisfiable { kind: PatternKind::None, attempts: REJECTION_ATTEMPTS })
}

fn attempt_seed(seed: u64, attempt: u32) -> u64 {
    seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct CaseBuilder {
    rng: ChaCha8Rng,
    tag: String,
    banks: Vec<BankId>,
    accounts: Vec<AccountNode>,
    transfers: Vec<TransferEdge>,
    base: Timestamp,
}

impl CaseBuilder {
    fn new(seed: u64) -> CaseBuilder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tag = format!("{:06X}", rng.gen_range(0..0x100_0000u32));
        let banks = vec![
            BankId::from_raw(&format!("{tag}0")),
            BankId::from_raw(&format!("{tag}1")),
        ];
        CaseBuilder {
            rng,
            tag,
            banks,
            accounts: Vec::new(),
            transfers: Vec::new(),
            base: Timestamp::from_ymd_hm(2022, 9, 1, 0, 0).expect("valid base date"),
        }
    }

    fn account(&mut self, role: char, index: usize) -> AccountId {
        let id = AccountId::from_raw(&format!("{}{}{}", self.tag, role, index));
        let bank = self.banks[self.accounts.len() % self.banks.len()].clone();
        self.accounts.push(AccountNode {
            id: id.clone(),
            bank: Some(bank),
            entity_type: EntityType::Unknown,
            creation_date: None,
        });
        id
    }

    fn jittered(&mut self, base: &Money, jitter: f64) -> Money {
        let spread = (base.minor_units() as f64 * jitter) as i64;
        let minor = (base.minor_units() + self.rng.gen_range(-spread..=spread)).max(1);
        Money::new(minor, base.currency()).expect("jittered amount stays valid")
    }

    fn format(&mut self) -> &'static str {
        PAYMENT_FORMATS[self.rng.gen_range(0..PAYMENT_FORMATS.len())]
    }

    /// Slot `i` of `n` over `span` minutes, jittered inside the slot so
    /// cross-slot order is preserved.
    fn slot(&mut self, i: usize, n: usize, span: i64) -> i64 {
        let width = (span / n.max(1) as i64).max(1);
        (i as i64 * width + self.rng.gen_range(0..width)).min(span - 1)
    }

    fn transfer(
        &mut self,
        source: &AccountId,
        dest: &AccountId,
        paid: Money,
        payment_format: &str,
        minute: i64,
    ) {
        self.transfers.push(TransferEdge {
            id: self.transfers.len() as u32,
            source: source.clone(),
            dest: dest.clone(),
            received: paid.clone(),
            paid,
            payment_format: payment_format.to_string(),
            timestamp: self.base.plus_minutes(minute),
            is_laundering: None,
            pattern_label: None,
        });
    }

    /// Canonical order, fresh ids, focal on the first transfer, truth from
    /// `kind` (None means benign).
    fn finish(mut self, kind: Option<PatternKind>) -> Subgraph {
        self.transfers.sort_by_key(crate::extract::transfer_sort_key);
        for (i, t) in self.transfers.iter_mut().enumerate() {
            t.id = i as u32;
            t.is_laundering = Some(kind.is_some());
            t.pattern_label = kind;
        }
        let truth = GroundTruth {
            is_laundering: kind.is_some(),
            patterns: [kind.unwrap_or(PatternKind::None)].into_iter().collect(),
        };
        Subgraph::new(
            self.transfers[0].clone(),
            self.accounts,
            self.banks,
            self.transfers,
            Some(truth),
        )
        .expect("generated subgraph is closed")
    }
}

fn fan_case(cfg: &GenConfig, outward: bool) -> Subgraph {
    let mut b = CaseBuilder::new(cfg.seed);
    let hub = b.account('H', 0);
    for i in 0..cfg.fan {
        let other = b.account(if outward { 'D' } else { 'S' }, i);
        let paid = b.jittered(&cfg.amount_base, cfg.jitter);
        let format = b.format();
        let minute = b.slot(i, cfg.fan, cfg.span_minutes);
        if outward {
            b.transfer(&hub, &other, paid, format, minute);
        } else {
            b.transfer(&other, &hub, paid, format, minute);
        }
    }
    b.finish(Some(if outward { PatternKind::FanOut } else { PatternKind::FanIn }))
}

fn gather_scatter_case(cfg: &GenConfig) -> Subgraph {
    let mut b = CaseBuilder::new(cfg.seed);
    let mid = b.account('M', 0);
    let half = cfg.span_minutes / 2;
    let mut collected: i64 = 0;
    for i in 0..cfg.fan {
        let src = b.account('S', i);
        let paid = b.jittered(&cfg.amount_base, cfg.jitter);
        collected += paid.minor_units();
        let format = b.format();
        let minute = b.slot(i, cfg.fan, half);
        b.transfer(&src, &mid, paid, format, minute);
    }
    // Outflows split the collected total exactly: conservation holds with
    // zero slack.
    let share = collected / cfg.fan as i64;
    let remainder = (collected % cfg.fan as i64) as usize;
    for j in 0..cfg.fan {
        let dst = b.account('D', j);
        let minor = share + i64::from(j < remainder);
        let paid = Money::new(minor, cfg.amount_base.currency()).expect("split amount valid");
        let format = b.format();
        let minute = half + b.slot(j, cfg.fan, cfg.span_minutes - half);
        b.transfer(&mid, &dst, paid, format, minute);
    }
    b.finish(Some(PatternKind::GatherScatter))
}

fn scatter_gather_case(cfg: &GenConfig) -> Subgraph {
    let mut b = CaseBuilder::new(cfg.seed);
    let source = b.account('S', 0);
    let sink = b.account('D', 0);
    let half = cfg.span_minutes / 2;
    for i in 0..cfg.fan {
        let mid = b.account('M', i);
        let paid = b.jittered(&cfg.amount_base, cfg.jitter);
        let format = b.format();
        let minute = b.slot(i, cfg.fan, half);
        b.transfer(&source, &mid, paid.clone(), format, minute);
        // Each intermediary forwards what it received, later.
        b.transfer(&mid, &sink, paid, format, minute + half);
    }
    b.finish(Some(PatternKind::ScatterGather))
}

fn cycle_case(cfg: &GenConfig) -> Subgraph {
    let mut b = CaseBuilder::new(cfg.seed);
    let accounts: Vec<AccountId> = (0..cfg.fan).map(|i| b.account('C', i)).collect();
    for i in 0..cfg.fan {
        let paid = b.jittered(&cfg.amount_base, cfg.jitter);
        let format = b.format();
        let minute = b.slot(i, cfg.fan, cfg.span_minutes);
        b.transfer(&accounts[i], &accounts[(i + 1) % cfg.fan], paid, format, minute);
    }
    b.finish(Some(PatternKind::SimpleCycle))
}

fn bipartite_case(cfg: &GenConfig) -> Subgraph {
    let mut b = CaseBuilder::new(cfg.seed);
    let a_side: Vec<AccountId> = (0..cfg.fan).map(|i| b.account('A', i)).collect();
    let b_side: Vec<AccountId> = (0..cfg.fan).map(|i| b.account('B', i)).collect();
    for (p, (a, bb)) in a_side
        .iter()
        .flat_map(|a| b_side.iter().map(move |bb| (a, bb)))
        .enumerate()
    {
        let paid = b.jittered(&cfg.amount_base, cfg.jitter);
        let format = b.format();
        let minute = b.slot(p, cfg.fan * cfg.fan, cfg.span_minutes);
        b.transfer(a, bb, paid, format, minute);
    }
    b.finish(Some(PatternKind::Bipartite))
}

fn stack_case(cfg: &GenConfig) -> Subgraph {
    let mut b = CaseBuilder::new(cfg.seed);
    let tiers: Vec<Vec<AccountId>> = (0..=cfg.layers)
        .map(|t| (0..cfg.fan).map(|i| b.account('T', t * cfg.fan + i)).collect())
        .collect();
    // Each layer's grid lives in its own time band; a one-minute gap keeps
    // band maxima strictly below the next band's minimum.
    let band = cfg.span_minutes / cfg.layers as i64;
    for layer in 0..cfg.layers {
        let start = layer as i64 * band;
        for (p, (src, dst)) in tiers[layer]
            .iter()
            .flat_map(|s| tiers[layer + 1].iter().map(move |d| (s, d)))
            .enumerate()
        {
            let paid = b.jittered(&cfg.amount_base, cfg.jitter);
            let format = b.format();
            let minute = start + b.slot(p, cfg.fan * cfg.fan, band - 1);
            b.transfer(src, dst, paid, format, minute);
        }
    }
    b.finish(Some(PatternKind::Stack))
}

fn random_case(cfg: &GenConfig) -> Result<Subgraph, GenerateError> {
    for attempt in 0..REJECTION_ATTEMPTS {
        let mut b = CaseBuilder::new(attempt_seed(cfg.seed, attempt));
        let n = cfg.fan + 2;
        let accounts: Vec<AccountId> = (0..n).map(|i| b.account('R', i)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut b.rng);
        for i in 0..n - 1 {
            let paid = b.jittered(&cfg.amount_base, cfg.jitter);
            let format = b.format();
            let minute = b.slot(i, n - 1, cfg.span_minutes);
            b.transfer(&accounts[order[i]], &accounts[order[i + 1]], paid, format, minute);
        }
        for _ in 0..2 {
            let src = b.rng.gen_range(0..n);
            let mut dst = b.rng.gen_range(0..n);
            while dst == src {
                dst = b.rng.gen_range(0..n);
            }
            let paid = b.jittered(&cfg.amount_base, cfg.jitter);
            let format = b.format();
            let minute = b.rng.gen_range(0..cfg.span_minutes);
            b.transfer(&accounts[src], &accounts[dst], paid, format, minute);
        }
        let sub = b.finish(Some(PatternKind::Random));
        if detect(&sub, &DetectorConfig::default()).is_empty() {
            return Ok(sub);
        }
    }
    Err(GenerateError::Unsatisfiable { kind: PatternKind::Random, attempts: REJECTION_ATTEMPTS })
}
