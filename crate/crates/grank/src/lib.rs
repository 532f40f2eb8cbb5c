//! Gossip-driven unsupervised learn-to-rank for decentralized p2p search.
//!
//! Every peer keeps an append-only clicklog of (query, displayed results,
//! clicked item) records and trades deltas with other peers over solicited
//! pull gossip. Ranking weights the click counts of other peers by a
//! modified Jaccard similarity over their query/click behavior, so that
//! nodes cluster themselves around peers that click like they do, with no
//! training data and no central coordinator.
//!
//! The crate is organized around a deterministic discrete-tick simulator:
//!
//! - [`catalog`] — the item corpus and metadata matching
//! - [`clicklog`] — per-node clicklog store, merge/dedup, wire encoding
//! - [`similarity`] — pairwise node similarity and per-node score caching
//! - [`ranker`] — candidate generation, similarity-weighted scoring,
//!   metadata-priority ordering, noise injection
//! - [`gossip`] — pull/push gossip, progress tracking, bootstrap
//! - [`simulator`] — network initialization, the tick loop, adversary
//!   behaviors, experiment orchestration
//! - [`metrics`] — global-optimum oracle, positional distance, and the
//!   per-evaluation-round snapshot suite
//!
//! All randomness flows from a single `u64` seed; two runs with the same
//! configuration produce byte-identical metric series.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod catalog;
pub mod clicklog;
pub mod gossip;
pub mod metrics;
pub mod ranker;
pub mod similarity;
pub mod simulator;

/// Identifier of an item in the catalog. Dense, assigned in file order from 0.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ItemId(pub u32);

/// Identifier of a network node.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
