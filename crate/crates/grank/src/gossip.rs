//! Clicklog dissemination: solicited pull gossip, the push variant,
//! per-peer progress tracking, and newcomer bootstrap.
//!
//! A node answering a pull (or initiating a push) sends the entries it has
//! not yet sent to that particular peer, own and third-party alike. The
//! clicklog is append-only, so per-peer progress is just a high-water
//! index into the sender's entry stream; successive sends to one peer
//! partition the stream and never repeat an entry. Responses stop at a
//! byte budget (a peer may send some or all of what it owes), leaving the
//! remainder for the next exchange.
//!
//! Nodes discover peers from the data itself: any unseen origin id in a
//! merged batch becomes a known peer. Refusal is not modeled; recipients
//! always accept.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::clicklog::{encoded_size, StoredEntry};
use crate::simulator::NodeState;
use crate::NodeId;

/// Default cap on the encoded size of one gossip message.
pub const DEFAULT_RESPONSE_BUDGET_BYTES: usize = 512_000;

/// A pull request. Carries no payload; the tick is for transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GossipRequest {
    pub from: NodeId,
    pub to: NodeId,
    pub tick: u64,
}

/// A payload message: pull response or unsolicited push.
#[derive(Debug, Clone)]
pub struct GossipResponse {
    pub from: NodeId,
    pub to: NodeId,
    pub entries: Vec<Arc<StoredEntry>>,
    /// Exact wire size of `entries` under the line encoding.
    pub byte_size: usize,
}

/// Per-recipient send progress: how far into the owner's entry stream
/// each peer has been served.
#[derive(Debug, Clone, Default)]
pub struct ProgressTable {
    sent_through: HashMap<NodeId, usize>,
}

impl ProgressTable {
    /// Index one past the last entry already sent to `peer`.
    pub fn sent_to(&self, peer: NodeId) -> usize {
        self.sent_through.get(&peer).copied().unwrap_or(0)
    }

    fn record(&mut self, peer: NodeId, through: usize) {
        self.sent_through.insert(peer, through);
    }
}

/// Slice the sender's not-yet-sent entries for `peer`, stopping at the
/// byte budget, and advance progress. Shared by pull and push.
fn take_unsent(sender: &mut NodeState, peer: NodeId, budget_bytes: usize) -> Vec<Arc<StoredEntry>> {
    let start = sender.progress.sent_to(peer);
    let log = sender.clicklog.entries();
    let mut end = start;
    let mut bytes = 0usize;
    while end < log.len() {
        let len = log[end].wire_len();
        if end > start && bytes + len > budget_bytes {
            break;
        }
        bytes += len;
        end += 1;
    }
    let batch = log[start..end].to_vec();
    sender.progress.record(peer, end);
    batch
}

/// Answer a pull request with everything not yet sent to the requester
/// (up to the byte budget). Refusal is not modeled.
pub fn handle_pull(
    request: &GossipRequest,
    responder: &mut NodeState,
    budget_bytes: usize,
) -> GossipResponse {
    debug_assert_eq!(request.to, responder.node_id, "pull routed to wrong node");
    let entries = take_unsent(responder, request.from, budget_bytes);
    GossipResponse {
        from: responder.node_id,
        to: request.from,
        byte_size: encoded_size(&entries),
        entries,
    }
}

/// Send unsolicited deltas to up to `fanout` distinct known peers, chosen
/// uniformly. A sender that knows nobody sends nothing.
pub fn push_gossip<R: Rng>(
    sender: &mut NodeState,
    fanout: usize,
    budget_bytes: usize,
    rng: &mut R,
) -> Vec<GossipResponse> {
    debug_assert!(fanout >= 1);
    if sender.known_peers.is_empty() {
        return Vec::new();
    }
    let count = fanout.min(sender.known_peers.len());
    let mut recipients: Vec<NodeId> = sample(rng, sender.known_peers.len(), count)
        .iter()
        .map(|i| sender.known_peers[i])
        .collect();
    recipients.sort_unstable();
    recipients
        .into_iter()
        .map(|peer| {
            let entries = take_unsent(sender, peer, budget_bytes);
            GossipResponse {
                from: sender.node_id,
                to: peer,
                byte_size: encoded_size(&entries),
                entries,
            }
        })
        .collect()
}

/// What a bootstrap transferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapReceipt {
    pub entries_sent: usize,
    pub new_entries: usize,
    pub byte_size: usize,
}

/// Join a newcomer through a sponsor: the newcomer merges a uniform
/// sample of ceil(fraction * |sponsor log|) sponsor-held entries, learns
/// every node id appearing in them plus the sponsor itself, and the
/// sponsor learns the newcomer.
pub fn bootstrap<R: Rng>(
    newcomer: &mut NodeState,
    sponsor: &mut NodeState,
    sample_fraction: f64,
    rng: &mut R,
) -> BootstrapReceipt {
    debug_assert!(sample_fraction > 0.0 && sample_fraction <= 1.0);
    let n = sponsor.clicklog.len();
    let k = ((sample_fraction * n as f64).ceil() as usize).min(n);
    let mut picked: Vec<usize> = sample(rng, n.max(1), k.min(n)).into_vec();
    picked.sort_unstable();
    let batch: Vec<Arc<StoredEntry>> = picked
        .iter()
        .map(|&i| Arc::clone(&sponsor.clicklog.entries()[i]))
        .collect();
    let (new_entries, _) = newcomer.merge_batch(&batch);
    newcomer.add_known_peer(sponsor.node_id);
    sponsor.add_known_peer(newcomer.node_id);
    BootstrapReceipt {
        entries_sent: batch.len(),
        new_entries,
        byte_size: encoded_size(&batch),
    }
}

/// Record origins in `batch` that the node had not seen before; extends
/// the known-peer set and returns the newly discovered ids.
pub fn discover_peers(node: &mut NodeState, batch: &[Arc<StoredEntry>]) -> BTreeSet<NodeId> {
    let mut discovered = BTreeSet::new();
    for entry in batch {
        let origin = entry.origin_node;
        if origin != node.node_id && node.add_known_peer(origin) {
            discovered.insert(origin);
        }
    }
    discovered
}
