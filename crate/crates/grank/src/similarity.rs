//! Pairwise node similarity and the self-clustering weights used by the
//! ranker.
//!
//! The similarity score between node `i` and a peer `j`, computed from the
//! entries `i` holds that were originated by `j`, is
//!
//! ```text
//! S_i(j) = (kappa_t + kappa_m^2) / kappa_u
//! ```
//!
//! where `kappa_t` is the overlap between both nodes' top-K query terms
//! (frequency-ranked, ties lexicographic), `kappa_m` the number of shared
//! (term, clicked item) pairs across all terms, and `kappa_u` the size of
//! the union of those pairs. Squaring `kappa_m` makes the score fall off
//! sharply once click behavior diverges. A node's scores over all known
//! peers are normalized by their maximum into [0, 1]; a node with no
//! behavioral overlap anywhere keeps an all-zero table.
//!
//! Scores are cached per peer and recomputed lazily: a peer's score goes
//! stale when the owner holds more of that peer's entries than at the last
//! computation, and every score goes stale when the owner's own behavior
//! changes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use crate::clicklog::{Clicklog, StoredEntry};
use crate::{ItemId, NodeId};

/// Default K for the top-term overlap component.
pub const DEFAULT_TOP_TERMS: usize = 10;

/// The raw similarity formula.
pub fn similarity_formula(kappa_t: usize, kappa_m: usize, kappa_u: usize) -> f64 {
    if kappa_u == 0 {
        return 0.0;
    }
    (kappa_t as f64 + (kappa_m as f64) * (kappa_m as f64)) / kappa_u as f64
}

/// Query/click aggregates of one node's originated entries.
#[derive(Debug, Clone, Default)]
pub struct BehaviorProfile {
    pairs: HashSet<(String, ItemId)>,
    term_freq: HashMap<String, u32>,
}

impl BehaviorProfile {
    pub fn from_entries<'a, I>(entries: I) -> Self
    where
        I: IntoIterator<Item = &'a StoredEntry>,
    {
        let mut profile = BehaviorProfile::default();
        for e in entries {
            profile
                .pairs
                .insert((e.query_term.clone(), e.clicked));
            *profile.term_freq.entry(e.query_term.clone()).or_default() += 1;
        }
        profile
    }

    /// The node's top `k` query terms by frequency, ties broken
    /// lexicographically.
    pub fn top_terms(&self, k: usize) -> BTreeSet<String> {
        let mut terms: Vec<(&String, u32)> =
            self.term_freq.iter().map(|(t, &n)| (t, n)).collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        terms.into_iter().take(k).map(|(t, _)| t.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Raw score of a peer profile against the owner's profile.
pub fn raw_similarity(
    own: &BehaviorProfile,
    own_top: &BTreeSet<String>,
    peer: &BehaviorProfile,
    k_t: usize,
) -> f64 {
    let peer_top = peer.top_terms(k_t);
    let kappa_t = own_top.intersection(&peer_top).count();
    let (small, large) = if own.pairs.len() <= peer.pairs.len() {
        (&own.pairs, &peer.pairs)
    } else {
        (&peer.pairs, &own.pairs)
    };
    let kappa_m = small.iter().filter(|p| large.contains(*p)).count();
    let kappa_u = own.pairs.len() + peer.pairs.len() - kappa_m;
    similarity_formula(kappa_t, kappa_m, kappa_u)
}

/// Raw similarity from the two origin-restricted entry views: the owner's
/// own entries and the entries the owner holds from one peer.
pub fn pairwise_similarity<'a, I, J>(own_entries: I, peer_entries: J, k_t: usize) -> f64
where
    I: IntoIterator<Item = &'a StoredEntry>,
    J: IntoIterator<Item = &'a StoredEntry>,
{
    let own = BehaviorProfile::from_entries(own_entries);
    let own_top = own.top_terms(k_t);
    let peer = BehaviorProfile::from_entries(peer_entries);
    raw_similarity(&own, &own_top, &peer, k_t)
}

/// A snapshot of one node's scores against every known peer.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTable {
    pub owner: NodeId,
    pub k_t: usize,
    pub raw: BTreeMap<NodeId, f64>,
    pub normalized: BTreeMap<NodeId, f64>,
    /// Peers in descending normalized order, ascending id on ties.
    pub ranked: Vec<NodeId>,
}

/// Normalize raw scores by their maximum (all-zero stays all-zero) and
/// rank peers.
pub fn table_from_raw_scores(
    owner: NodeId,
    raw: BTreeMap<NodeId, f64>,
    k_t: usize,
) -> SimilarityTable {
    let max = raw.values().fold(0.0_f64, |m, &v| m.max(v));
    let normalized: BTreeMap<NodeId, f64> = raw
        .iter()
        .map(|(&id, &v)| (id, if max > 0.0 { v / max } else { 0.0 }))
        .collect();
    let mut ranked: Vec<NodeId> = normalized.keys().copied().collect();
    ranked.sort_by(|a, b| {
        normalized[b]
            .partial_cmp(&normalized[a])
            .expect("scores are finite")
            .then_with(|| a.cmp(b))
    });
    SimilarityTable {
        owner,
        k_t,
        raw,
        normalized,
        ranked,
    }
}

/// Recompute the full table from scratch against every known peer.
pub fn rebuild_similarity_table(
    owner: NodeId,
    log: &Clicklog,
    known_peers: &[NodeId],
    k_t: usize,
) -> SimilarityTable {
    let own = BehaviorProfile::from_entries(log.entries_from_origin(owner).map(Arc::as_ref));
    let own_top = own.top_terms(k_t);
    let raw: BTreeMap<NodeId, f64> = known_peers
        .iter()
        .map(|&peer| {
            let profile =
                BehaviorProfile::from_entries(log.entries_from_origin(peer).map(Arc::as_ref));
            (peer, raw_similarity(&own, &own_top, &profile, k_t))
        })
        .collect();
    table_from_raw_scores(owner, raw, k_t)
}

#[derive(Debug, Clone, Copy)]
struct CachedScore {
    raw: f64,
    held_len: u32,
    own_version: u64,
}

/// Lazily maintained similarity scores for one node.
#[derive(Debug, Clone, Default)]
pub struct SimilarityState {
    own_version: u64,
    own_agg_version: Option<u64>,
    own_profile: BehaviorProfile,
    own_top: BTreeSet<String>,
    cached: HashMap<NodeId, CachedScore>,
    max_raw: f64,
}

impl SimilarityState {
    /// Mark every cached score stale; call when the owner originates a new
    /// entry (its own profile feeds every pairwise score).
    pub fn note_own_append(&mut self) {
        self.own_version += 1;
    }

    /// Bring all scores for `known_peers` up to date against `log`.
    pub fn refresh(&mut self, owner: NodeId, log: &Clicklog, known_peers: &[NodeId], k_t: usize) {
        if self.own_agg_version != Some(self.own_version) {
            self.own_profile =
                BehaviorProfile::from_entries(log.entries_from_origin(owner).map(Arc::as_ref));
            self.own_top = self.own_profile.top_terms(k_t);
            self.own_agg_version = Some(self.own_version);
        }
        for &peer in known_peers {
            let held = log.origin_len(peer) as u32;
            let fresh = self
                .cached
                .get(&peer)
                .is_some_and(|c| c.held_len == held && c.own_version == self.own_version);
            if fresh {
                continue;
            }
            let profile =
                BehaviorProfile::from_entries(log.entries_from_origin(peer).map(Arc::as_ref));
            let raw = raw_similarity(&self.own_profile, &self.own_top, &profile, k_t);
            self.cached.insert(
                peer,
                CachedScore {
                    raw,
                    held_len: held,
                    own_version: self.own_version,
                },
            );
        }
        self.max_raw = known_peers
            .iter()
            .filter_map(|p| self.cached.get(p))
            .fold(0.0_f64, |m, c| m.max(c.raw));
    }

    pub fn raw(&self, peer: NodeId) -> f64 {
        self.cached.get(&peer).map_or(0.0, |c| c.raw)
    }

    /// Normalized score in [0, 1]; zero when no peer has any overlap.
    pub fn normalized(&self, peer: NodeId) -> f64 {
        if self.max_raw > 0.0 {
            self.raw(peer) / self.max_raw
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clicklog::{ClicklogEntry, DisplayedResult, QueryKey};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn entry(origin: u32, seq: u32, term: &str, clicked: u32) -> Arc<StoredEntry> {
        StoredEntry::new(ClicklogEntry {
            origin_node: NodeId(origin),
            query_term: term.to_string(),
            results: vec![DisplayedResult {
                id: ItemId(clicked),
                title: format!("item {clicked}"),
            }],
            clicked: ItemId(clicked),
            clicked_title: format!("item {clicked}"),
            clicked_tags: [term.to_string()].into(),
            query_key: QueryKey {
                origin: NodeId(origin),
                seq,
            },
        })
    }

    fn views(entries: &[Arc<StoredEntry>]) -> impl Iterator<Item = &StoredEntry> {
        entries.iter().map(Arc::as_ref)
    }

    /// Independent oracle: recompute the three cardinalities with plain
    /// set arithmetic over (term, clicked) tuples and term lists.
    fn oracle_raw(own: &[Arc<StoredEntry>], peer: &[Arc<StoredEntry>], k_t: usize) -> f64 {
        use std::collections::BTreeMap;
        let pair_set = |es: &[Arc<StoredEntry>]| -> BTreeSet<(String, u32)> {
            es.iter()
                .map(|e| (e.query_term.clone(), e.clicked.0))
                .collect()
        };
        let tops = |es: &[Arc<StoredEntry>]| -> BTreeSet<String> {
            let mut freq: BTreeMap<String, usize> = BTreeMap::new();
            for e in es {
                *freq.entry(e.query_term.clone()).or_default() += 1;
            }
            let mut v: Vec<(String, usize)> = freq.into_iter().collect();
            v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            v.into_iter().take(k_t).map(|(t, _)| t).collect()
        };
        let (po, pp) = (pair_set(own), pair_set(peer));
        let kt = tops(own).intersection(&tops(peer)).count();
        let km = po.intersection(&pp).count();
        let ku = po.union(&pp).count();
        if ku == 0 {
            0.0
        } else {
            (kt as f64 + (km * km) as f64) / ku as f64
        }
    }

    #[test]
    fn identical_behavior_normalizes_to_one() {
        let own: Vec<_> = (0..5).map(|i| entry(1, i, &format!("t{i}"), i)).collect();
        let twin: Vec<_> = (0..5).map(|i| entry(2, i, &format!("t{i}"), i)).collect();
        let stranger: Vec<_> = (0..5).map(|i| entry(3, i, &format!("x{i}"), 50 + i)).collect();
        let s_twin = pairwise_similarity(views(&own), views(&twin), 10);
        let s_stranger = pairwise_similarity(views(&own), views(&stranger), 10);
        assert!(s_twin > 0.0);
        assert!(s_twin > s_stranger);
        // kappa_m = kappa_u = 5, kappa_t = 5 -> (5 + 25) / 5
        assert_eq!(s_twin, 6.0);
        let raw: BTreeMap<NodeId, f64> =
            [(NodeId(2), s_twin), (NodeId(3), s_stranger)].into();
        let table = table_from_raw_scores(NodeId(1), raw, 10);
        assert_eq!(table.normalized[&NodeId(2)], 1.0);
    }

    #[test]
    fn zero_overlap_scores_zero() {
        let own: Vec<_> = (0..4).map(|i| entry(1, i, &format!("a{i}"), i)).collect();
        let peer: Vec<_> = (0..4).map(|i| entry(2, i, &format!("b{i}"), 40 + i)).collect();
        assert_eq!(pairwise_similarity(views(&own), views(&peer), 10), 0.0);
    }

    #[test]
    fn worked_formula_example() {
        // own pairs {(a,1),(b,2),(c,5)}, peer pairs {(a,1),(b,9)}:
        // kappa_t = 2, kappa_m = 1, kappa_u = 4 -> 0.75.
        let own = vec![entry(1, 0, "a", 1), entry(1, 1, "b", 2), entry(1, 2, "c", 5)];
        let peer = vec![entry(2, 0, "a", 1), entry(2, 1, "b", 9)];
        let got = pairwise_similarity(views(&own), views(&peer), 2);
        assert_eq!(got, oracle_raw(&own, &peer, 2));
        assert_eq!(got, 0.75);
    }

    #[test]
    fn empty_union_guard() {
        let none: Vec<Arc<StoredEntry>> = Vec::new();
        assert_eq!(pairwise_similarity(views(&none), views(&none), 10), 0.0);
    }

    #[test]
    fn raw_scores_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for round in 0..30 {
            let a: Vec<_> = (0..rng.gen_range(1..12))
                .map(|i| entry(1, i, &format!("t{}", rng.gen_range(0..6)), rng.gen_range(0..8)))
                .collect();
            let b: Vec<_> = (0..rng.gen_range(1..12))
                .map(|i| entry(2, i, &format!("t{}", rng.gen_range(0..6)), rng.gen_range(0..8)))
                .collect();
            let ab = pairwise_similarity(views(&a), views(&b), 4);
            let ba = pairwise_similarity(views(&b), views(&a), 4);
            assert_eq!(ab, ba, "asymmetric at round {round}");
            assert_eq!(ab, oracle_raw(&a, &b, 4), "oracle mismatch at round {round}");
        }
    }

    #[test]
    fn squared_match_term_is_superlinear() {
        let ku = 40;
        let kt = 3;
        let mut prev = -1.0;
        let mut prev_gap = 0.0;
        for km in 0..=10 {
            let s = similarity_formula(kt, km, ku);
            assert!(s > prev, "not strictly increasing at kappa_m={km}");
            if km > 1 {
                let gap = s - prev;
                assert!(gap > prev_gap, "not superlinear at kappa_m={km}");
                prev_gap = gap;
            } else if km == 1 {
                prev_gap = s - prev;
            }
            prev = s;
        }
    }

    #[test]
    fn divergence_accelerates_with_union_growth() {
        // Formula level: raising kappa_u with kappa_t, kappa_m fixed lowers the score.
        for ku in 5..30 {
            assert!(similarity_formula(2, 2, ku + 1) < similarity_formula(2, 2, ku));
        }
        // Entry level: a peer adding non-matching clicks loses score.
        let own = vec![entry(1, 0, "a", 1), entry(1, 1, "b", 2)];
        let peer = vec![entry(2, 0, "a", 1)];
        let mut diverged = peer.clone();
        diverged.push(entry(2, 1, "z", 99));
        let before = pairwise_similarity(views(&own), views(&peer), 1);
        let after = pairwise_similarity(views(&own), views(&diverged), 1);
        assert!(after < before);
    }

    #[test]
    fn table_with_no_peers_is_empty() {
        let log = Clicklog::new();
        let table = rebuild_similarity_table(NodeId(0), &log, &[], 10);
        assert!(table.raw.is_empty());
        assert!(table.ranked.is_empty());
    }

    #[test]
    fn single_positive_peer_normalizes_to_one() {
        let mut log = Clicklog::new();
        log.append_local(entry(0, 0, "a", 1)).unwrap();
        log.merge_remote(&[entry(5, 0, "a", 1)]);
        let table = rebuild_similarity_table(NodeId(0), &log, &[NodeId(5)], 10);
        assert!(table.raw[&NodeId(5)] > 0.0);
        assert_eq!(table.normalized[&NodeId(5)], 1.0);
    }

    #[test]
    fn divide_by_max_normalization() {
        let raw: BTreeMap<NodeId, f64> = [
            (NodeId(3), 4.0),
            (NodeId(1), 2.0),
            (NodeId(2), 1.0),
        ]
        .into();
        let table = table_from_raw_scores(NodeId(0), raw, 10);
        assert_eq!(table.normalized[&NodeId(3)], 1.0);
        assert_eq!(table.normalized[&NodeId(1)], 0.5);
        assert_eq!(table.normalized[&NodeId(2)], 0.25);
        assert_eq!(table.ranked, vec![NodeId(3), NodeId(1), NodeId(2)]);
    }

    #[test]
    fn all_zero_raws_stay_zero() {
        let raw: BTreeMap<NodeId, f64> = [(NodeId(1), 0.0), (NodeId(2), 0.0)].into();
        let table = table_from_raw_scores(NodeId(0), raw, 10);
        assert!(table.normalized.values().all(|&v| v == 0.0));
        // Ties rank by ascending id.
        assert_eq!(table.ranked, vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn normalized_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let raw: BTreeMap<NodeId, f64> = (0..rng.gen_range(1..8))
                .map(|i| (NodeId(i), rng.gen_range(0.0..5.0)))
                .collect();
            let any_positive = raw.values().any(|&v| v > 0.0);
            let table = table_from_raw_scores(NodeId(99), raw, 10);
            for &v in table.normalized.values() {
                assert!((0.0..=1.0).contains(&v));
            }
            if any_positive {
                assert!(table.normalized.values().any(|&v| v == 1.0));
            }
        }
    }

    #[test]
    fn cache_agrees_with_full_rebuild() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut log = Clicklog::new();
        let owner = NodeId(0);
        let mut own_seq = 0;
        let mut state = SimilarityState::default();
        let peers: Vec<NodeId> = (1..6).map(NodeId).collect();
        let mut peer_seq = [0u32; 6];
        for _ in 0..40 {
            // Interleave own appends and merged peer batches.
            if rng.gen_bool(0.4) {
                log.append_local(entry(0, own_seq, &format!("t{}", rng.gen_range(0..5)), rng.gen_range(0..9)))
                    .unwrap();
                own_seq += 1;
                state.note_own_append();
            } else {
                let p = rng.gen_range(1..6);
                let batch: Vec<_> = (0..rng.gen_range(1..4))
                    .map(|_| {
                        let e = entry(
                            p,
                            peer_seq[p as usize],
                            &format!("t{}", rng.gen_range(0..5)),
                            rng.gen_range(0..9),
                        );
                        peer_seq[p as usize] += 1;
                        e
                    })
                    .collect();
                log.merge_remote(&batch);
            }
            state.refresh(owner, &log, &peers, 3);
            let table = rebuild_similarity_table(owner, &log, &peers, 3);
            for &p in &peers {
                assert_eq!(state.raw(p), table.raw[&p]);
                assert_eq!(state.normalized(p), table.normalized[&p]);
            }
        }
    }
}
