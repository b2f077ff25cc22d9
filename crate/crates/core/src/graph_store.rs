//! Transaction graph storage: typed ids, money and timestamps, CSV ingestion,
//! per-account edge indexes, and a binary snapshot format for fast reloads.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Namespaced account identifier, e.g. `acct_810147BB0`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub String);

/// Namespaced bank identifier, e.g. `bank_217`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BankId(pub String);

impl AccountId {
    /// Prefixes a raw ledger id with the `acct_` namespace.
    pub fn from_raw(raw: &str) -> Self {
        AccountId(format!("acct_{raw}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl BankId {
    /// Prefixes a raw ledger id with the `bank_` namespace.
    pub fn from_raw(raw: &str) -> Self {
        BankId(format!("bank_{raw}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for BankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Dense edge index assigned at ingestion, stable for the life of a graph.
pub type EdgeId = u32;

// ---------------------------------------------------------------------------
// Money
// ---------------------------------------------------------------------------

/// Non-negative fixed-point amount with exactly two fractional digits,
/// stored in minor units to keep arithmetic exact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Money {
    minor: i64,
    currency: String,
}

impl Money {
    pub fn new(minor: i64, currency: &str) -> Result<Self, MoneyError> {
        if minor < 0 {
            return Err(MoneyError::Negative);
        }
        Ok(Money { minor, currency: currency.to_string() })
    }

    /// Parses a decimal string with at most two fractional digits.
    /// No thousands separators, no exponents, no sign.
    pub fn parse(text: &str, currency: &str) -> Result<Self, MoneyError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(MoneyError::Malformed(text.to_string()));
        }
        let (units_str, frac_str) = match text.split_once('.') {
            Some((u, f)) => (u, f),
            None => (text, ""),
        };
        if units_str.is_empty()
            || !units_str.bytes().all(|b| b.is_ascii_digit())
            || !frac_str.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(MoneyError::Malformed(text.to_string()));
        }
        if frac_str.len() > 2 {
            return Err(MoneyError::TooManyDecimals(text.to_string()));
        }
        let units: i64 = units_str
            .parse()
            .map_err(|_| MoneyError::Overflow(text.to_string()))?;
        let cents = match frac_str.len() {
            0 => 0,
            1 => frac_str.parse::<i64>().unwrap() * 10,
            _ => frac_str.parse::<i64>().unwrap(),
        };
        let minor = units
            .checked_mul(100)
            .and_then(|v| v.checked_add(cents))
            .ok_or_else(|| MoneyError::Overflow(text.to_string()))?;
        Ok(Money { minor, currency: currency.to_string() })
    }

    pub fn minor_units(&self) -> i64 {
        self.minor
    }

    pub fn currency(&self) -> &str {
        &self.currency
    }

    /// Decimal rendering with exactly two fractional digits and no separators.
    pub fn amount_string(&self) -> String {
        format!("{}.{:02}", self.minor / 100, self.minor % 100)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.amount_string(), self.currency)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MoneyError {
    #[error("amount is negative")]
    Negative,
    #[error("malformed amount {0:?}")]
    Malformed(String),
    #[error("amount {0:?} has more than two fractional digits")]
    TooManyDecimals(String),
    #[error("amount {0:?} overflows")]
    Overflow(String),
}

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

pub const TIMESTAMP_FORMAT: &str = "%Y/%m/%d %H:%M";

/// Timezone-naive timestamp with minute precision. Total order; the textual
/// form is `YYYY/MM/DD HH:MM` everywhere (CSV, serialization, JSON).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(NaiveDateTime);

impl Timestamp {
    pub fn parse(text: &str) -> Result<Self, TimestampError> {
        let dt = NaiveDateTime::parse_from_str(text.trim(), TIMESTAMP_FORMAT)
            .map_err(|_| TimestampError::Malformed(text.to_string()))?;
        Ok(Timestamp(dt))
    }

    pub fn from_ymd_hm(y: i32, mo: u32, d: u32, h: u32, mi: u32) -> Result<Self, TimestampError> {
        NaiveDate::from_ymd_opt(y, mo, d)
            .and_then(|date| date.and_hms_opt(h, mi, 0))
            .map(Timestamp)
            .ok_or(TimestampError::OutOfRange)
    }

    pub fn plus_minutes(&self, minutes: i64) -> Self {
        Timestamp(self.0 + Duration::minutes(minutes))
    }

    /// Signed distance in whole minutes (`self - other`).
    pub fn minutes_since(&self, other: &Timestamp) -> i64 {
        (self.0 - other.0).num_minutes()
    }

    pub fn abs_minutes_between(&self, other: &Timestamp) -> i64 {
        self.minutes_since(other).abs()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(TIMESTAMP_FORMAT))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Timestamp::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimestampError {
    #[error("malformed timestamp {0:?}, expected YYYY/MM/DD HH:MM")]
    Malformed(String),
    #[error("timestamp out of range")]
    OutOfRange,
}

/// Inclusive timestamp interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeInterval {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self, GraphError> {
        if start > end {
            return Err(GraphError::InvalidInterval);
        }
        Ok(TimeInterval { start, end })
    }

    pub fn contains(&self, t: &Timestamp) -> bool {
        self.start <= *t && *t <= self.end
    }
}

// ---------------------------------------------------------------------------
// Nodes and edges
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    Individual,
    Corporate,
    Unknown,
}

impl Default for EntityType {
    fn default() -> Self {
        EntityType::Unknown
    }
}

/// Account attributes. `bank` is absent only for subgraphs recovered from
/// partial serialized text that omits the membership line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountNode {
    pub id: AccountId,
    pub bank: Option<BankId>,
    #[serde(default)]
    pub entity_type: EntityType,
    #[serde(default)]
    pub creation_date: Option<Timestamp>,
}

/// One directed transfer. `received` can differ from `paid` on cross-currency
/// rows; the canonical text form prints only the paid pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEdge {
    pub id: EdgeId,
    pub source: AccountId,
    pub dest: AccountId,
    pub paid: Money,
    pub received: Money,
    pub payment_format: String,
    pub timestamp: Timestamp,
    #[serde(default)]
    pub is_laundering: Option<bool>,
    #[serde(default)]
    pub pattern_label: Option<crate::typology::PatternKind>,
}

// ---------------------------------------------------------------------------
// CSV schema
// ---------------------------------------------------------------------------

/// Column layout for transaction CSVs. Headers are matched positionally
/// because the stock layout repeats the `Account` header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub name: String,
    pub headers: Vec<String>,
    /// Index of the laundering flag column, if the file carries labels.
    pub laundering_column: Option<usize>,
}

impl CsvSchema {
    /// Stock layout: Timestamp, From Bank, Account, To Bank, Account,
    /// Amount Received, Receiving Currency, Amount Paid, Payment Currency,
    /// Payment Format, Is Laundering.
    pub fn standard() -> Self {
        CsvSchema {
            name: "standard".to_string(),
            headers: [
                "Timestamp",
                "From Bank",
                "Account",
                "To Bank",
                "Account",
                "Amount Received",
                "Receiving Currency",
                "Amount Paid",
                "Payment Currency",
                "Payment Format",
                "Is Laundering",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            laundering_column: Some(10),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "standard" | "ibm" => Some(Self::standard()),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

/// Immutable in-memory transaction graph. Accounts and banks are dense-indexed
/// in first-sighting order; per-account edge indexes are sorted by
/// (timestamp, edge id).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransactionGraph {
    accounts: Vec<AccountNode>,
    banks: Vec<BankId>,
    edges: Vec<TransferEdge>,
    account_index: HashMap<AccountId, u32>,
    out_index: Vec<Vec<EdgeId>>,
    in_index: Vec<Vec<EdgeId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub account_count: usize,
    pub bank_count: usize,
    pub edge_count: usize,
    pub first_timestamp: Option<Timestamp>,
    pub last_timestamp: Option<Timestamp>,
    pub laundering_edge_count: usize,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header mismatch for schema {schema:?}: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        schema: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row}: {reason}")]
    Row { row: u64, reason: String },
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("unknown edge id {0}")]
    UnknownEdge(EdgeId),
    #[error("interval start is after end")]
    InvalidInterval,
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

/// Incremental constructor used by CSV ingestion and by synthetic fixtures.
/// Accounts and banks are registered on first sighting, in call order.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    accounts: Vec<AccountNode>,
    banks: Vec<BankId>,
    edges: Vec<TransferEdge>,
    account_index: HashMap<AccountId, u32>,
    bank_index: HashMap<BankId, u32>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern_bank(&mut self, bank: &BankId) {
        if !self.bank_index.contains_key(bank) {
            self.bank_index.insert(bank.clone(), self.banks.len() as u32);
            self.banks.push(bank.clone());
        }
    }

    /// Registers an account on first sighting; later sightings keep the
    /// original bank assignment.
    pub fn touch_account(&mut self, id: &AccountId, bank: &BankId) {
        self.intern_bank(bank);
        if !self.account_index.contains_key(id) {
            self.account_index.insert(id.clone(), self.accounts.len() as u32);
            self.accounts.push(AccountNode {
                id: id.clone(),
                bank: Some(bank.clone()),
                entity_type: EntityType::Unknown,
                creation_date: None,
            });
        }
    }

    /// Appends a transfer; the edge id is the running dense index.
    #[allow(clippy::too_many_arguments)]
    pub fn add_transfer(
        &mut self,
        source: &AccountId,
        source_bank: &BankId,
        dest: &AccountId,
        dest_bank: &BankId,
        paid: Money,
        received: Money,
        payment_format: &str,
        timestamp: Timestamp,
        is_laundering: Option<bool>,
    ) -> EdgeId {
        self.touch_account(source, source_bank);
        self.touch_account(dest, dest_bank);
        let id = self.edges.len() as EdgeId;
        self.edges.push(TransferEdge {
            id,
            source: source.clone(),
            dest: dest.clone(),
            paid,
            received,
            payment_format: payment_format.to_string(),
            timestamp,
            is_laundering,
            pattern_label: None,
        });
        id
    }

    pub fn set_pattern_label(&mut self, edge: EdgeId, label: crate::typology::PatternKind) {
        self.edges[edge as usize].pattern_label = Some(label);
    }

    pub fn finish(self) -> TransactionGraph {
        let n = self.accounts.len();
        let mut out_index: Vec<Vec<EdgeId>> = vec![Vec::new(); n];
        let mut in_index: Vec<Vec<EdgeId>> = vec![Vec::new(); n];
        for edge in &self.edges {
            let s = self.account_index[&edge.source] as usize;
            let d = self.account_index[&edge.dest] as usize;
            out_index[s].push(edge.id);
            in_index[d].push(edge.id);
        }
        let by_time = |ids: &mut Vec<EdgeId>, edges: &Vec<TransferEdge>| {
            ids.sort_by_key(|&id| (edges[id as usize].timestamp, id));
        };
        for ids in out_index.iter_mut() {
            by_time(ids, &self.edges);
        }
        for ids in in_index.iter_mut() {
            by_time(ids, &self.edges);
        }
        TransactionGraph {
            accounts: self.accounts,
            banks: self.banks,
            edges: self.edges,
            account_index: self.account_index,
            out_index,
            in_index,
        }
    }
}

impl TransactionGraph {
    /// Loads a transaction CSV. Rows become edges in file order; malformed
    /// rows or a header mismatch reject the whole file.
    pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Self, GraphError> {
        let file = std::fs::File::open(path)?;
        Self::load_csv_reader(file, schema)
    }

    pub fn load_csv_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<Self, GraphError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(reader);

        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers != schema.headers {
            return Err(GraphError::HeaderMismatch {
                schema: schema.name.clone(),
                expected: schema.headers.clone(),
                found: headers,
            });
        }

        let mut builder = GraphBuilder::new();
        let mut record = csv::StringRecord::new();
        let mut row: u64 = 1;
        while rdr
            .read_record(&mut record)
            .map_err(GraphError::Csv)?
        {
            row += 1;
            let fail = |reason: String| GraphError::Row { row, reason };
            let field = |i: usize| record.get(i).unwrap_or("");

            let timestamp = Timestamp::parse(field(0)).map_err(|e| fail(e.to_string()))?;
            let source_bank = BankId::from_raw(field(1));
            let source = AccountId::from_raw(field(2));
            let dest_bank = BankId::from_raw(field(3));
            let dest = AccountId::from_raw(field(4));
            let received =
                Money::parse(field(5), field(6)).map_err(|e| fail(e.to_string()))?;
            let paid = Money::parse(field(7), field(8)).map_err(|e| fail(e.to_string()))?;
            let payment_format = field(9);
            let is_laundering = match schema.laundering_column {
                Some(col) => match field(col) {
                    "0" => Some(false),
                    "1" => Some(true),
                    other => {
                        return Err(fail(format!(
                            "laundering flag must be 0 or 1, found {other:?}"
                        )))
                    }
                },
                None => None,
            };
            builder.add_transfer(
                &source,
                &source_bank,
                &dest,
                &dest_bank,
                paid,
                received,
                payment_format,
                timestamp,
                is_laundering,
            );
        }
        Ok(builder.finish())
    }

    /// Applies ground-truth pattern labels from a side CSV with header
    /// `edge_id,pattern`. Patterns use the canonical kind names.
    pub fn apply_pattern_labels(&mut self, path: &Path) -> Result<usize, GraphError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut applied = 0usize;
        let mut row: u64 = 1;
        let mut record = csv::StringRecord::new();
        while rdr.read_record(&mut record).map_err(GraphError::Csv)? {
            row += 1;
            let fail = |reason: String| GraphError::Row { row, reason };
            let id: EdgeId = record
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|_| fail("edge_id must be an integer".to_string()))?;
            if id as usize >= self.edges.len() {
                return Err(GraphError::UnknownEdge(id));
            }
            let raw = record.get(1).unwrap_or("");
            match crate::verdict::normalize_pattern_name(raw) {
                crate::verdict::NormalizedPattern::Known(kind) => {
                    self.edges[id as usize].pattern_label = Some(kind);
                    applied += 1;
                }
                crate::verdict::NormalizedPattern::Unrecognized(_) => {
                    return Err(fail(format!("unknown pattern name {raw:?}")));
                }
            }
        }
        Ok(applied)
    }

    pub fn account(&self, id: &AccountId) -> Option<&AccountNode> {
        self.account_index.get(id).map(|&i| &self.accounts[i as usize])
    }

    pub fn accounts(&self) -> &[AccountNode] {
        &self.accounts
    }

    pub fn banks(&self) -> &[BankId] {
        &self.banks
    }

    pub fn edges(&self) -> &[TransferEdge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> Result<&TransferEdge, GraphError> {
        self.edges.get(id as usize).ok_or(GraphError::UnknownEdge(id))
    }

    fn directed_edges(
        &self,
        index: &[Vec<EdgeId>],
        account: &AccountId,
        window: Option<&TimeInterval>,
    ) -> Result<Vec<&TransferEdge>, GraphError> {
        let &slot = self
            .account_index
            .get(account)
            .ok_or_else(|| GraphError::UnknownAccount(account.clone()))?;
        let ids = &index[slot as usize];
        Ok(ids
            .iter()
            .map(|&id| &self.edges[id as usize])
            .filter(|e| window.map_or(true, |w| w.contains(&e.timestamp)))
            .collect())
    }

    /// Outgoing transfers of an account ordered by (timestamp, edge id),
    /// optionally restricted to a time interval.
    pub fn out_edges(
        &self,
        account: &AccountId,
        window: Option<&TimeInterval>,
    ) -> Result<Vec<&TransferEdge>, GraphError> {
        self.directed_edges(&self.out_index, account, window)
    }

    /// Incoming transfers, same ordering contract as `out_edges`.
    pub fn in_edges(
        &self,
        account: &AccountId,
        window: Option<&TimeInterval>,
    ) -> Result<Vec<&TransferEdge>, GraphError> {
        self.directed_edges(&self.in_index, account, window)
    }

    /// Edge ids of the sorted out-adjacency (internal fast path for extraction).
    pub(crate) fn out_ids(&self, slot: u32) -> &[EdgeId] {
        &self.out_index[slot as usize]
    }

    pub(crate) fn in_ids(&self, slot: u32) -> &[EdgeId] {
        &self.in_index[slot as usize]
    }

    pub(crate) fn account_slot(&self, id: &AccountId) -> Option<u32> {
        self.account_index.get(id).copied()
    }

    pub fn stats(&self) -> GraphStats {
        let mut first = None;
        let mut last = None;
        let mut laundering = 0usize;
        for e in &self.edges {
            if first.map_or(true, |f| e.timestamp < f) {
                first = Some(e.timestamp);
            }
            if last.map_or(true, |l| e.timestamp > l) {
                last = Some(e.timestamp);
            }
            if e.is_laundering == Some(true) {
                laundering += 1;
            }
        }
        GraphStats {
            account_count: self.accounts.len(),
            bank_count: self.banks.len(),
            edge_count: self.edges.len(),
            first_timestamp: first,
            last_timestamp: last,
            laundering_edge_count: laundering,
        }
    }

    /// Writes the binary snapshot (bincode-encoded, version-tagged).
    pub fn save_snapshot(&self, path: &Path) -> Result<(), GraphError> {
        let file = std::fs::File::create(path)?;
        let mut writer = std::io::BufWriter::new(file);
        let envelope = SnapshotEnvelope { version: SNAPSHOT_VERSION, graph: self };
        bincode::serialize_into(&mut writer, &envelope)
            .map_err(|e| GraphError::Snapshot(e.to_string()))
    }

    pub fn load_snapshot(path: &Path) -> Result<Self, GraphError> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let envelope: OwnedSnapshotEnvelope =
            bincode::deserialize_from(reader).map_err(|e| GraphError::Snapshot(e.to_string()))?;
        if envelope.version != SNAPSHOT_VERSION {
            return Err(GraphError::Snapshot(format!(
                "unsupported snapshot version {} (expected {})",
                envelope.version, SNAPSHOT_VERSION
            )));
        }
        Ok(envelope.graph)
    }
}

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize)]
struct SnapshotEnvelope<'a> {
    version: u32,
    graph: &'a TransactionGraph,
}

#[derive(Deserialize)]
struct OwnedSnapshotEnvelope {
    version: u32,
    graph: TransactionGraph,
}
