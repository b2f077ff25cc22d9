//! Transaction-graph toolkit for laundering triage: load transfer ledgers
//! into an in-memory multigraph, cut bounded subgraphs around a focal
//! transfer, render them as deterministic text for an LLM prompt, detect the
//! classic laundering shapes with explicit rules, and score model verdicts
//! against ground truth.
//!
//! The text representation in `serialize` is the contract everything else
//! leans on: identical subgraphs always produce byte-identical text, and the
//! parser accepts exactly what the renderer emits.

pub mod eval;
pub mod extract;
pub mod graph_store;
pub mod llm;
pub mod prompt;
pub mod sample;
pub mod serialize;
pub mod typology;
pub mod verdict;
