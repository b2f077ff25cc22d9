//! Canonical text form for subgraphs and its inverse parser.
//!
//! The grammar, byte for byte:
//!
//! ```text
//! **Nodes:**
//! - <acct_id> (type: Account)        accounts, lexicographic
//! - <bank_id> (type: Bank)           banks, lexicographic
//!                                    one blank line
//! **Edges:**
//! - <acct_id> belongs_to <bank_id>   memberships, lexicographic by account
//! - <src> transfers_to <dst>         transfers by (timestamp, source, dest, amount)
//!     amount: <d.dd> <Currency>
//!     via: <PaymentFormat>
//!     timestamp: <YYYY/MM/DD HH:MM>
//! **Focal:** <src> transfers_to <dst> @ <timestamp>     optional marker
//! ```
//!
//! Every line ends with `\n`. Amounts print the paid pair only; parsing sets
//! `received = paid`. Entity type, creation date, edge ids and ground truth
//! are not carried by the text.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{transfer_sort_key, ExtractError, Subgraph};
use crate::graph_store::{
    AccountId, AccountNode, BankId, EntityType, Money, Timestamp, TransferEdge,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SerializedSubgraph {
    pub text: String,
}

impl SerializedSubgraph {
    /// FNV-1a over the text bytes.
    pub fn fingerprint(&self) -> u64 {
        crate::extract::fnv1a64(self.text.as_bytes())
    }
}

/// Renders the canonical text form. Collections are re-sorted here, so the
/// output does not depend on the in-memory order of the subgraph's vectors.
pub fn serialize(sub: &Subgraph) -> SerializedSubgraph {
    render(sub, false)
}

/// Same text plus a trailing `**Focal:**` line naming the focal transfer.
pub fn serialize_with_focal_marker(sub: &Subgraph) -> SerializedSubgraph {
    render(sub, true)
}

fn render(sub: &Subgraph, focal_marker: bool) -> SerializedSubgraph {
    let mut accounts: Vec<&AccountNode> = sub.accounts.iter().collect();
    accounts.sort_by(|a, b| a.id.cmp(&b.id));
    let mut banks: Vec<&BankId> = sub.banks.iter().collect();
    banks.sort();
    let mut transfers: Vec<&TransferEdge> = sub.transfers.iter().collect();
    transfers.sort_by_key(|t| transfer_sort_key(t));

    let mut text = String::new();
    text.push_str("**Nodes:**\n");
    for a in &accounts {
        text.push_str(&format!("- {} (type: Account)\n", a.id));
    }
    for b in &banks {
        text.push_str(&format!("- {} (type: Bank)\n", b));
    }
    text.push('\n');
    text.push_str("**Edges:**\n");
    for a in &accounts {
        if let Some(bank) = &a.bank {
            text.push_str(&format!("- {} belongs_to {}\n", a.id, bank));
        }
    }
    for t in &transfers {
        text.push_str(&format!("- {} transfers_to {}\n", t.source, t.dest));
        text.push_str(&format!("    amount: {}\n", t.paid));
        text.push_str(&format!("    via: {}\n", t.payment_format));
        text.push_str(&format!("    timestamp: {}\n", t.timestamp));
    }
    if focal_marker {
        text.push_str(&format!(
            "**Focal:** {} transfers_to {} @ {}\n",
            sub.focal.source, sub.focal.dest, sub.focal.timestamp
        ));
    }
    SerializedSubgraph { text }
}

#[derive(Debug, Error)]
pub enum TextParseError {
    #[error("line {line}: {message}")]
    Grammar { line: usize, message: String },
    #[error("line {line}: unknown node {id:?}")]
    UnknownNode { line: usize, id: String },
    #[error("line {line}: unparseable amount: {source}")]
    Amount {
        line: usize,
        source: crate::graph_store::MoneyError,
    },
    #[error("line {line}: unparseable timestamp: {source}")]
    Timestamp {
        line: usize,
        source: crate::graph_store::TimestampError,
    },
    #[error("line {line}: account {account} already belongs to {existing}, cannot also belong to {conflicting}")]
    MembershipConflict {
        line: usize,
        account: String,
        existing: String,
        conflicting: String,
    },
    #[error("text contains no transfers, so no focal edge exists")]
    NoTransfers,
    #[error("line {line}: focal marker names a transfer that is not in the text")]
    FocalNotFound { line: usize },
    #[error("parsed content is not a valid subgraph: {0}")]
    Invalid(#[from] ExtractError),
}

struct ParsedTransfer {
    source: AccountId,
    dest: AccountId,
    amount: Money,
    via: String,
    timestamp: Timestamp,
}

/// Inverse of `serialize`. Accepts any grammar-conforming text (the line
/// order within sections need not be canonical). The focal transfer is the
/// one named by the `**Focal:**` marker, else the first transfer in the text.
pub fn parse_serialized(text: &str) -> Result<Subgraph, TextParseError> {
    let lines: Vec<&str> = text.split('\n').collect();
    let grammar = |line: usize, message: String| TextParseError::Grammar { line, message };

    // Line numbers are 1-based; `lines` may carry a final "" after the
    // trailing newline, which the cursor treats as end of input.
    let mut pos = 0usize;
    let at_end = |pos: usize| pos >= lines.len() || (pos == lines.len() - 1 && lines[pos].is_empty());

    if at_end(pos) || lines[pos] != "**Nodes:**" {
        return Err(grammar(1, "expected **Nodes:** header".to_string()));
    }
    pos += 1;

    let mut account_order: Vec<AccountId> = Vec::new();
    let mut accounts_seen: HashSet<AccountId> = HashSet::new();
    let mut banks_order: Vec<BankId> = Vec::new();
    let mut banks_seen: HashSet<BankId> = HashSet::new();

    while !at_end(pos) && !lines[pos].is_empty() {
        let line_no = pos + 1;
        let line = lines[pos];
        let body = line.strip_prefix("- ").ok_or_else(|| {
            grammar(line_no, format!("expected node line or blank line, found {line:?}"))
        })?;
        if let Some(id) = body.strip_suffix(" (type: Account)") {
            let id = AccountId(id.to_string());
            if accounts_seen.insert(id.clone()) {
                account_order.push(id);
            }
        } else if let Some(id) = body.strip_suffix(" (type: Bank)") {
            let id = BankId(id.to_string());
            if banks_seen.insert(id.clone()) {
                banks_order.push(id);
            }
        } else {
            return Err(grammar(
                line_no,
                format!("node line must end with (type: Account) or (type: Bank): {line:?}"),
            ));
        }
        pos += 1;
    }

    if at_end(pos) {
        return Err(grammar(pos + 1, "expected blank line before **Edges:**".to_string()));
    }
    pos += 1; // the blank line
    if at_end(pos) || lines[pos] != "**Edges:**" {
        return Err(grammar(pos + 1, "expected **Edges:** header".to_string()));
    }
    pos += 1;

    let mut memberships: BTreeMap<AccountId, (BankId, usize)> = BTreeMap::new();
    let mut transfers: Vec<ParsedTransfer> = Vec::new();
    let mut focal_request: Option<(usize, AccountId, AccountId, Timestamp)> = None;

    while !at_end(pos) {
        let line_no = pos + 1;
        let line = lines[pos];
        if let Some(rest) = line.strip_prefix("**Focal:** ") {
            let (pair, ts_text) = rest.rsplit_once(" @ ").ok_or_else(|| {
                grammar(line_no, "focal marker must contain ' @ <timestamp>'".to_string())
            })?;
            let (src, dst) = pair.split_once(" transfers_to ").ok_or_else(|| {
                grammar(line_no, "focal marker must contain ' transfers_to '".to_string())
            })?;
            let ts = Timestamp::parse(ts_text)
                .map_err(|source| TextParseError::Timestamp { line: line_no, source })?;
            focal_request = Some((
                line_no,
                AccountId(src.to_string()),
                AccountId(dst.to_string()),
                ts,
            ));
            pos += 1;
            if !at_end(pos) {
                return Err(grammar(pos + 1, "focal marker must be the last line".to_string()));
            }
            break;
        }

        let body = line
            .strip_prefix("- ")
            .ok_or_else(|| grammar(line_no, format!("expected edge line, found {line:?}")))?;

        if let Some((acct, bank)) = body.split_once(" belongs_to ") {
            let acct = AccountId(acct.to_string());
            let bank = BankId(bank.to_string());
            if !accounts_seen.contains(&acct) {
                return Err(TextParseError::UnknownNode { line: line_no, id: acct.0 });
            }
            if !banks_seen.contains(&bank) {
                return Err(TextParseError::UnknownNode { line: line_no, id: bank.0 });
            }
            if let Some((existing, _)) = memberships.get(&acct) {
                if *existing != bank {
                    return Err(TextParseError::MembershipConflict {
                        line: line_no,
                        account: acct.0,
                        existing: existing.0.clone(),
                        conflicting: bank.0,
                    });
                }
            } else {
                memberships.insert(acct, (bank, line_no));
            }
            pos += 1;
        } else if let Some((src, dst)) = body.split_once(" transfers_to ") {
            let source = AccountId(src.to_string());
            let dest = AccountId(dst.to_string());
            for id in [&source, &dest] {
                if !accounts_seen.contains(id) {
                    return Err(TextParseError::UnknownNode {
                        line: line_no,
                        id: id.0.clone(),
                    });
                }
            }
            let attr = |prefix: &str, pos: usize| -> Result<(&str, usize), TextParseError> {
                if at_end(pos) {
                    return Err(grammar(
                        pos + 1,
                        format!("transfer block ends early, expected {prefix:?} line"),
                    ));
                }
                lines[pos]
                    .strip_prefix(prefix)
                    .map(|v| (v, pos + 1))
                    .ok_or_else(|| {
                        grammar(
                            pos + 1,
                            format!("expected {prefix:?} line, found {:?}", lines[pos]),
                        )
                    })
            };
            let (amount_text, next) = attr("    amount: ", pos + 1)?;
            let amount_line = next;
            let (via, next) = attr("    via: ", next)?;
            let (ts_text, next) = attr("    timestamp: ", next)?;
            let ts_line = next;

            let (num, currency) = amount_text.split_once(' ').ok_or_else(|| {
                grammar(amount_line, "amount must be '<decimal> <currency>'".to_string())
            })?;
            let amount = Money::parse(num, currency)
                .map_err(|source| TextParseError::Amount { line: amount_line, source })?;
            let timestamp = Timestamp::parse(ts_text)
                .map_err(|source| TextParseError::Timestamp { line: ts_line, source })?;

            transfers.push(ParsedTransfer {
                source,
                dest,
                amount,
                via: via.to_string(),
                timestamp,
            });
            pos = next;
        } else {
            return Err(grammar(
                line_no,
                format!("edge line must contain belongs_to or transfers_to: {line:?}"),
            ));
        }
    }

    if transfers.is_empty() {
        return Err(TextParseError::NoTransfers);
    }

    let edges: Vec<TransferEdge> = transfers
        .iter()
        .enumerate()
        .map(|(i, t)| TransferEdge {
            id: i as u32,
            source: t.source.clone(),
            dest: t.dest.clone(),
            paid: t.amount.clone(),
            received: t.amount.clone(),
            payment_format: t.via.clone(),
            timestamp: t.timestamp,
            is_laundering: None,
            pattern_label: None,
        })
        .collect();

    let focal = match focal_request {
        Some((line, src, dst, ts)) => edges
            .iter()
            .find(|e| e.source == src && e.dest == dst && e.timestamp == ts)
            .cloned()
            .ok_or(TextParseError::FocalNotFound { line })?,
        None => edges[0].clone(),
    };

    let accounts: Vec<AccountNode> = account_order
        .iter()
        .map(|id| AccountNode {
            id: id.clone(),
            bank: memberships.get(id).map(|(b, _)| b.clone()),
            entity_type: EntityType::Unknown,
            creation_date: None,
        })
        .collect();

    Ok(Subgraph::new(focal, accounts, banks_order, edges, None)?)
}

// ===========================================================================
