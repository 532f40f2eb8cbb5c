//! The ranking pipeline.
//!
//! A query first collects candidates: items clicked for the term anywhere
//! in the local clicklog, plus local library items whose metadata matches
//! the term. Each candidate is scored by summing, over every node whose
//! entries the querier holds, that node's click count for (term, item)
//! weighted by `S + F` — the normalized similarity score plus the
//! isolation constant (self-clicks weigh `1 + F`). With `F = 0`,
//! zero-similarity peers contribute nothing; with `F = 1`, every known
//! peer counts at least fully.
//!
//! Candidates with a metadata match always display above candidates known
//! only from the clicklog, whatever their scores; inside each partition
//! the order is score-descending with ascending item id on ties. The
//! displayed list is truncated, then half of all queries get two uniformly
//! chosen positions swapped to keep the rankings from plateauing.
//!
//! A term never seen and matching nothing falls back to the most-clicked
//! items over the recent clicklog window.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;

use crate::catalog::Catalog;
use crate::simulator::NodeState;
use crate::ItemId;

/// Knobs of the ranking pipeline; one instance is shared per experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RankParams {
    /// Isolation constant F added to every similarity weight.
    pub isolation_f: f64,
    /// Displayed list length.
    pub result_len: usize,
    /// Probability that a displayed list gets one random swap.
    pub swap_prob: f64,
    /// K for the similarity top-term overlap.
    pub k_t: usize,
    /// Recent-entry window for the unseen-term fallback.
    pub fallback_window: usize,
}

impl Default for RankParams {
    fn default() -> Self {
        RankParams {
            isolation_f: 0.0,
            result_len: 10,
            swap_prob: 0.5,
            k_t: crate::similarity::DEFAULT_TOP_TERMS,
            fallback_window: 100,
        }
    }
}

/// Output of candidate generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    /// Ascending item ids.
    pub candidates: Vec<ItemId>,
    /// Candidates with a metadata match for the term, either in the local
    /// library or via the clicked-item tags carried on clicklog entries.
    pub metadata_matched: BTreeSet<ItemId>,
    pub fallback_used: bool,
}

/// A displayed ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResults {
    pub query_term: String,
    /// (item, score) in display order.
    pub items: Vec<(ItemId, f64)>,
    pub metadata_matched: BTreeSet<ItemId>,
    pub truncation: usize,
    pub fallback_used: bool,
}

impl RankedResults {
    pub fn item_ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.items.iter().map(|(id, _)| *id)
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.items.iter().any(|(id, _)| *id == item)
    }
}

/// Collect candidates and their metadata-match partition for `term`.
pub fn candidate_set(
    node: &NodeState,
    catalog: &Catalog,
    term: &str,
    params: &RankParams,
) -> CandidateSet {
    let mut candidates: BTreeSet<ItemId> = node
        .clicklog
        .entries_for_term(term)
        .map(|e| e.clicked)
        .collect();
    let library_matches = catalog.items_matching_metadata(term, &node.library);
    candidates.extend(library_matches.iter().copied());

    let mut metadata_matched: BTreeSet<ItemId> = library_matches.into_iter().collect();
    if let Some(tagged) = node.clicklog.clicked_items_with_tag(term) {
        metadata_matched.extend(tagged.iter().copied());
    }
    metadata_matched.retain(|id| candidates.contains(id));

    if candidates.is_empty() {
        return CandidateSet {
            candidates: fallback_candidates(node, params),
            metadata_matched: BTreeSet::new(),
            fallback_used: true,
        };
    }
    CandidateSet {
        candidates: candidates.into_iter().collect(),
        metadata_matched,
        fallback_used: false,
    }
}

/// Most-clicked items over the most recent window of the local clicklog,
/// ties by ascending item id, at most `result_len` of them.
fn fallback_candidates(node: &NodeState, params: &RankParams) -> Vec<ItemId> {
    let entries = node.clicklog.entries();
    let window = &entries[entries.len().saturating_sub(params.fallback_window)..];
    let mut counts: HashMap<ItemId, u32> = HashMap::new();
    for e in window {
        *counts.entry(e.clicked).or_default() += 1;
    }
    let mut ranked: Vec<(ItemId, u32)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut out: Vec<ItemId> = ranked
        .into_iter()
        .take(params.result_len)
        .map(|(id, _)| id)
        .collect();
    out.sort_unstable();
    out
}

/// Score each candidate: sum over held entries for `term` of the
/// originator's weight `S + F` (self weight `1 + F`). Requires the node's
/// similarity scores to be fresh. Returns (item, score) in ascending item
/// order.
pub fn score_candidates(
    node: &NodeState,
    term: &str,
    candidates: &[ItemId],
    isolation_f: f64,
) -> Vec<(ItemId, f64)> {
    debug_assert!(candidates.windows(2).all(|w| w[0] < w[1]));
    let mut scores: Vec<f64> = vec![0.0; candidates.len()];
    for e in node.clicklog.entries_for_term(term) {
        let Ok(slot) = candidates.binary_search(&e.clicked) else {
            continue;
        };
        let weight = if e.origin_node == node.node_id {
            1.0 + isolation_f
        } else {
            node.similarity.normalized(e.origin_node) + isolation_f
        };
        scores[slot] += weight;
    }
    candidates.iter().copied().zip(scores).collect()
}

fn rank_frozen(
    node: &NodeState,
    catalog: &Catalog,
    term: &str,
    params: &RankParams,
) -> RankedResults {
    let cs = candidate_set(node, catalog, term, params);
    let scored = score_candidates(node, term, &cs.candidates, params.isolation_f);
    let (mut first, second): (Vec<_>, Vec<_>) = scored
        .into_iter()
        .partition(|(id, _)| cs.metadata_matched.contains(id));
    let order = |a: &(ItemId, f64), b: &(ItemId, f64)| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    };
    first.sort_by(order);
    let mut second = second;
    second.sort_by(order);
    first.extend(second);
    first.truncate(params.result_len);
    RankedResults {
        query_term: term.to_string(),
        items: first,
        metadata_matched: cs.metadata_matched,
        truncation: params.result_len,
        fallback_used: cs.fallback_used,
    }
}

/// Produce the displayed ranking for `term`, including the noise swap.
pub fn rank<R: Rng>(
    node: &mut NodeState,
    catalog: &Catalog,
    term: &str,
    params: &RankParams,
    rng: &mut R,
) -> RankedResults {
    node.refresh_similarity(params.k_t);
    let mut results = rank_frozen(node, catalog, term, params);
    if results.items.len() >= 2 && params.swap_prob > 0.0 && rng.gen_bool(params.swap_prob) {
        let a = rng.gen_range(0..results.items.len());
        let b = loop {
            let b = rng.gen_range(0..results.items.len());
            if b != a {
                break b;
            }
        };
        results.items.swap(a, b);
    }
    results
}

/// The ranking with the noise swap disabled; consumes no randomness.
/// Metrics evaluate this form so they never measure injected noise.
pub fn rank_noise_free(
    node: &mut NodeState,
    catalog: &Catalog,
    term: &str,
    params: &RankParams,
) -> RankedResults {
    node.refresh_similarity(params.k_t);
    rank_frozen(node, catalog, term, params)
}
