//! Small bundled fixtures used by tests, docs, and quick CLI experiments.

use crate::extract::Subgraph;
use crate::graph_store::{
    AccountId, AccountNode, BankId, EntityType, GraphBuilder, Money, Timestamp,
    TransactionGraph, TransferEdge,
};

fn shekel(text: &str) -> Money {
    Money::parse(text, "Shekel").unwrap()
}

fn ts(text: &str) -> Timestamp {
    Timestamp::parse(text).unwrap()
}

/// Five accounts across two banks with three same-day transfers between one
/// account pair. The focal transfer is the earliest one.
pub fn subgraph() -> Subgraph {
    let raw_accounts = [
        ("80FF89190", Some("4049")),
        ("810147BB0", Some("217")),
        ("8101A5D70", Some("217")),
        ("81141610D", Some("4049")),
        ("8117F9960", Some("217")),
    ];
    let accounts: Vec<AccountNode> = raw_accounts
        .iter()
        .map(|(raw, bank)| AccountNode {
            id: AccountId::from_raw(raw),
            bank: bank.map(BankId::from_raw),
            entity_type: EntityType::Unknown,
            creation_date: None,
        })
        .collect();
    let banks = vec![BankId::from_raw("217"), BankId::from_raw("4049")];
    let src = AccountId::from_raw("810147BB0");
    let dst = AccountId::from_raw("8101A5D70");
    let rows = [
        ("225756.22", "Reinvestment", "2022/09/01 00:02"),
        ("2364.39", "Cheque", "2022/09/01 05:26"),
        ("4091.91", "Cheque", "2022/09/01 07:50"),
    ];
    let transfers: Vec<TransferEdge> = rows
        .iter()
        .enumerate()
        .map(|(i, (amount, via, when))| TransferEdge {
            id: i as u32,
            source: src.clone(),
            dest: dst.clone(),
            paid: shekel(amount),
            received: shekel(amount),
            payment_format: via.to_string(),
            timestamp: ts(when),
            is_laundering: None,
            pattern_label: None,
        })
        .collect();
    Subgraph::new(transfers[0].clone(), accounts, banks, transfers, None).unwrap()
}

/// A small ledger containing the accounts above plus enough surrounding
/// transfers that a k=2 extraction from the focal edge reaches all five
/// accounts and both banks. The focal edge is id 0.
pub fn graph() -> TransactionGraph {
    let mut b = GraphBuilder::new();
    let b217 = BankId::from_raw("217");
    let b4049 = BankId::from_raw("4049");
    let a_ff = AccountId::from_raw("80FF89190");
    let a_47 = AccountId::from_raw("810147BB0");
    let a_a5 = AccountId::from_raw("8101A5D70");
    let a_14 = AccountId::from_raw("81141610D");
    let a_f9 = AccountId::from_raw("8117F9960");

    // Focal candidate: 80FF89190 -> 810147BB0.
    b.add_transfer(
        &a_ff, &b4049, &a_47, &b217,
        shekel("18.17"), shekel("18.17"), "Credit Card", ts("2022/09/01 00:01"),
        Some(false),
    );
    for (amount, via, when) in [
        ("225756.22", "Reinvestment", "2022/09/01 00:02"),
        ("2364.39", "Cheque", "2022/09/01 05:26"),
        ("4091.91", "Cheque", "2022/09/01 07:50"),
    ] {
        b.add_transfer(
            &a_47, &b217, &a_a5, &b217,
            shekel(amount), shekel(amount), via, ts(when),
            Some(false),
        );
    }
    b.add_transfer(
        &a_14, &b4049, &a_ff, &b4049,
        shekel("302.97"), shekel("302.97"), "ACH", ts("2022/09/01 02:45"),
        Some(false),
    );
    b.add_transfer(
        &a_f9, &b217, &a_47, &b217,
        shekel("51.90"), shekel("51.90"), "Cheque", ts("2022/09/01 06:10"),
        Some(false),
    );
    b.finish()
}
