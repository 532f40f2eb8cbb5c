//! Evaluation suite: the global-optimum oracle, positional distance,
//! top-song inclusion, and per-evaluation-round snapshots.
//!
//! The global optimum for a term ranks items by their total click count
//! over the deduplicated union of every clicklog in the network (ties
//! toward the lower item id) — something only the simulation's omniscient
//! observer can see. A node's quality for a term is the positional
//! distance between its noise-free displayed list and that optimum: the
//! sum over displayed items of |local index - global index|, where an item
//! the optimum has never seen counts as sitting at index |optimum|. The
//! missing-item penalty makes the metric total; the distance is defined
//! only over displayed elements otherwise.
//!
//! Because adversarial clicks poison the optimum itself, every snapshot
//! also carries distances against a benign-only optimum computed
//! side-by-side.

use std::collections::{HashMap, HashSet};
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::clicklog::QueryKey;
use crate::ranker::{self, RankParams};
use crate::simulator::NodeState;
use crate::{ItemId, NodeId};

/// Per-term ranked item lists, highest click count first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalOptimum {
    per_term: Vec<Vec<ItemId>>,
}

impl GlobalOptimum {
    pub fn new(per_term: Vec<Vec<ItemId>>) -> Self {
        GlobalOptimum { per_term }
    }

    pub fn n_terms(&self) -> usize {
        self.per_term.len()
    }

    /// Ranked items for the term at this corpus index.
    pub fn for_term(&self, term_idx: usize) -> &[ItemId] {
        &self.per_term[term_idx]
    }

    /// The most-clicked item for the term, if any clicks exist.
    pub fn top_song(&self, term_idx: usize) -> Option<ItemId> {
        self.per_term[term_idx].first().copied()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("duplicate item {0} in ranking list")]
    DuplicateItem(ItemId),
}

/// Sum of index distances between each displayed item's local position
/// and its position in the global optimum; items unknown to the optimum
/// take index `global.len()`.
pub fn positional_distance(local: &[ItemId], global: &[ItemId]) -> Result<u64, MetricsError> {
    let mut global_index: HashMap<ItemId, usize> = HashMap::with_capacity(global.len());
    for (idx, &item) in global.iter().enumerate() {
        if global_index.insert(item, idx).is_some() {
            return Err(MetricsError::DuplicateItem(item));
        }
    }
    let mut seen: HashSet<ItemId> = HashSet::with_capacity(local.len());
    let mut total = 0u64;
    for (local_idx, &item) in local.iter().enumerate() {
        if !seen.insert(item) {
            return Err(MetricsError::DuplicateItem(item));
        }
        let global_idx = global_index.get(&item).copied().unwrap_or(global.len());
        total += local_idx.abs_diff(global_idx) as u64;
    }
    Ok(total)
}

/// Recompute the global optimum from the deduplicated union of all
/// clicklogs: per term, items ranked by distinct-query-key click count
/// descending, item id ascending on ties. With `benign_only`, entries
/// originated by non-benign nodes are excluded.
pub fn compute_global_optimum(
    nodes: &[NodeState],
    catalog: &Catalog,
    benign_only: bool,
) -> GlobalOptimum {
    let behaviors: HashMap<NodeId, bool> =
        nodes.iter().map(|n| (n.node_id, n.is_benign())).collect();
    let n_terms = catalog.term_corpus().len();
    let mut counts: Vec<HashMap<ItemId, u32>> = vec![HashMap::new(); n_terms];
    let mut seen: HashSet<QueryKey> = HashSet::new();
    for node in nodes {
        for entry in node.clicklog.entries() {
            if !seen.insert(entry.query_key) {
                continue;
            }
            if benign_only && !behaviors.get(&entry.origin_node).copied().unwrap_or(false) {
                continue;
            }
            if let Some(term_idx) = catalog.term_index(&entry.query_term) {
                *counts[term_idx].entry(entry.clicked).or_default() += 1;
            }
        }
    }
    let per_term = counts
        .into_iter()
        .map(|map| {
            let mut ranked: Vec<(ItemId, u32)> = map.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.into_iter().map(|(item, _)| item).collect()
        })
        .collect();
    GlobalOptimum::new(per_term)
}

/// Whether the node's noise-free ranking for the term includes the
/// globally most popular item.
pub fn top_song_inclusion(
    node: &mut NodeState,
    catalog: &Catalog,
    term: &str,
    optimum: &GlobalOptimum,
    params: &RankParams,
) -> bool {
    let Some(term_idx) = catalog.term_index(term) else {
        return false;
    };
    let Some(top) = optimum.top_song(term_idx) else {
        return false;
    };
    ranker::rank_noise_free(node, catalog, term, params).contains(top)
}

/// One evaluation round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSnapshot {
    pub tick: u64,
    /// Mean over benign nodes of the per-node mean distance across terms.
    pub mean_distance: f64,
    pub median_distance: f64,
    /// Same distances measured against the benign-only optimum.
    pub mean_distance_benign_opt: f64,
    pub median_distance_benign_opt: f64,
    /// Mean/median over terms of the percentage of benign nodes whose
    /// results include the term's top song.
    pub mean_top_song_pct: f64,
    pub median_top_song_pct: f64,
    /// Mean clicklog length over all nodes, adversaries included.
    pub mean_clicklog_entries: f64,
    /// Mean encoded message size over the window since the last snapshot.
    pub mean_gossip_message_bytes: f64,
    /// Mean encoded size of every entry created so far.
    pub mean_entry_bytes: f64,
    pub messages_in_window: u64,
    /// Distinct entries ever created network-wide.
    pub total_entries: u64,
}

/// Per-node mean distance at one snapshot (scatter-plot detail).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDistanceRow {
    pub tick: u64,
    pub node: NodeId,
    pub mean_distance: f64,
}

/// Per-term top-song inclusion at one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermTopSongRow {
    pub tick: u64,
    pub term: String,
    pub pct: f64,
}

/// Gossip accounting since the previous snapshot.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalWindow {
    pub messages: u64,
    pub bytes: u64,
    pub entries_sent: u64,
}

/// Whole-run accounting.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunTotals {
    pub created_entries: u64,
    pub created_bytes: u64,
}

pub struct SnapshotBundle {
    pub snapshot: MetricsSnapshot,
    pub node_rows: Vec<NodeDistanceRow>,
    pub term_rows: Vec<TermTopSongRow>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Evaluate every benign node against both optima. Rankings are noise-free
/// so the metric never measures injected randomness.
#[allow(clippy::too_many_arguments)]
pub fn compute_snapshot(
    tick: u64,
    nodes: &mut [NodeState],
    benign_count: usize,
    catalog: &Catalog,
    params: &RankParams,
    optimum: &GlobalOptimum,
    benign_optimum: &GlobalOptimum,
    window: &EvalWindow,
    totals: &RunTotals,
) -> SnapshotBundle {
    let n_terms = catalog.term_corpus().len();
    let mut node_means: Vec<f64> = Vec::with_capacity(benign_count);
    let mut node_means_benign: Vec<f64> = Vec::with_capacity(benign_count);
    let mut inclusion: Vec<u32> = vec![0; n_terms];
    let mut node_rows = Vec::with_capacity(benign_count);
    for node in nodes[..benign_count].iter_mut() {
        let mut dist_sum = 0u64;
        let mut dist_sum_benign = 0u64;
        for term_idx in 0..n_terms {
            let term = &catalog.term_corpus()[term_idx];
            let displayed = ranker::rank_noise_free(node, catalog, term, params);
            let local: Vec<ItemId> = displayed.item_ids().collect();
            dist_sum += positional_distance(&local, optimum.for_term(term_idx))
                .expect("displayed lists are duplicate-free");
            dist_sum_benign += positional_distance(&local, benign_optimum.for_term(term_idx))
                .expect("displayed lists are duplicate-free");
            if let Some(top) = optimum.top_song(term_idx) {
                if local.contains(&top) {
                    inclusion[term_idx] += 1;
                }
            }
        }
        let mean = dist_sum as f64 / n_terms as f64;
        node_means.push(mean);
        node_means_benign.push(dist_sum_benign as f64 / n_terms as f64);
        node_rows.push(NodeDistanceRow {
            tick,
            node: node.node_id,
            mean_distance: mean,
        });
    }

    let mut term_pcts: Vec<f64> = inclusion
        .iter()
        .map(|&c| 100.0 * c as f64 / benign_count as f64)
        .collect();
    let term_rows: Vec<TermTopSongRow> = term_pcts
        .iter()
        .enumerate()
        .map(|(i, &pct)| TermTopSongRow {
            tick,
            term: catalog.term_corpus()[i].clone(),
            pct,
        })
        .collect();

    let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let mean_clicklog_entries =
        nodes.iter().map(|n| n.clicklog.len() as f64).sum::<f64>() / nodes.len() as f64;
    let snapshot = MetricsSnapshot {
        tick,
        mean_distance: mean_of(&node_means),
        median_distance: median(&mut node_means),
        mean_distance_benign_opt: mean_of(&node_means_benign),
        median_distance_benign_opt: median(&mut node_means_benign),
        mean_top_song_pct: mean_of(&term_pcts),
        median_top_song_pct: median(&mut term_pcts),
        mean_clicklog_entries,
        mean_gossip_message_bytes: if window.messages > 0 {
            window.bytes as f64 / window.messages as f64
        } else {
            0.0
        },
        mean_entry_bytes: if totals.created_entries > 0 {
            totals.created_bytes as f64 / totals.created_entries as f64
        } else {
            0.0
        },
        messages_in_window: window.messages,
        total_entries: totals.created_entries,
    };
    SnapshotBundle {
        snapshot,
        node_rows,
        term_rows,
    }
}

pub const SNAPSHOT_CSV_HEADER: &str = "tick,mean_distance,median_distance,mean_distance_benign_opt,median_distance_benign_opt,mean_top_song_pct,median_top_song_pct,mean_clicklog_entries,mean_gossip_message_bytes,mean_entry_bytes,messages_in_window,total_entries";

/// Render the snapshot series as the run's CSV; byte-identical for
/// identical runs.
pub fn snapshots_to_csv(snapshots: &[MetricsSnapshot]) -> String {
    let mut out = String::from(SNAPSHOT_CSV_HEADER);
    out.push('\n');
    for s in snapshots {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
            s.tick,
            s.mean_distance,
            s.median_distance,
            s.mean_distance_benign_opt,
            s.median_distance_benign_opt,
            s.mean_top_song_pct,
            s.median_top_song_pct,
            s.mean_clicklog_entries,
            s.mean_gossip_message_bytes,
            s.mean_entry_bytes,
            s.messages_in_window,
            s.total_entries
        ));
    }
    out
}

pub fn write_snapshots_csv<W: Write>(snapshots: &[MetricsSnapshot], mut w: W) -> io::Result<()> {
    w.write_all(snapshots_to_csv(snapshots).as_bytes())
}

/// JSON-lines detail stream: one row per (tick, node) mean distance and
/// one per (tick, term) top-song percentage.
pub fn write_detail_jsonl<W: Write>(
    node_rows: &[NodeDistanceRow],
    term_rows: &[TermTopSongRow],
    mut w: W,
) -> io::Result<()> {
    #[derive(Serialize)]
    struct Tagged<'a, T: Serialize> {
        kind: &'a str,
        #[serde(flatten)]
        row: &'a T,
    }
    for row in node_rows {
        serde_json::to_writer(
            &mut w,
            &Tagged {
                kind: "node_distance",
                row,
            },
        )?;
        w.write_all(b"\n")?;
    }
    for row in term_rows {
        serde_json::to_writer(
            &mut w,
            &Tagged {
                kind: "term_top_song",
                row,
            },
        )?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
