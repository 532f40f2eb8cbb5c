//! The per-node clicklog: an append-only store of query/click records.
//!
//! Every entry is identified by its `query_key` (origin id + that origin's
//! local query number), which is the only stable identity gossip can rely
//! on once entries are forwarded third-hand. Merging is dedup-by-key and
//! idempotent; entries are never evicted.
//!
//! The wire encoding is one JSON object per line with fields in record
//! order (origin, term, results, clicked item, clicked title, clicked
//! tags, key). Gossip byte accounting is defined by this encoding, so each
//! stored entry caches its encoded line once at construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::{ItemId, NodeId};

/// Unique entry identity: the origin node plus its local query number.
/// Encodes as the string `"<origin>:<seq>"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryKey {
    pub origin: NodeId,
    pub seq: u32,
}

impl fmt::Display for QueryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin, self.seq)
    }
}

impl Serialize for QueryKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QueryKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        let (origin, seq) = text
            .split_once(':')
            .ok_or_else(|| D::Error::custom("query key must be `origin:seq`"))?;
        Ok(QueryKey {
            origin: NodeId(origin.parse().map_err(D::Error::custom)?),
            seq: seq.parse().map_err(D::Error::custom)?,
        })
    }
}

/// One displayed result: the item and the title it was shown under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayedResult {
    pub id: ItemId,
    pub title: String,
}

/// One clicklog record. Field order here is the wire field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClicklogEntry {
    pub origin_node: NodeId,
    pub query_term: String,
    /// Displayed results in descending rank order.
    pub results: Vec<DisplayedResult>,
    pub clicked: ItemId,
    pub clicked_title: String,
    pub clicked_tags: BTreeSet<String>,
    pub query_key: QueryKey,
}

impl ClicklogEntry {
    pub fn result_ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.results.iter().map(|r| r.id)
    }
}

/// An entry plus its cached wire line. Immutable once built; shared by
/// `Arc` between every clicklog that holds it.
#[derive(Debug)]
pub struct StoredEntry {
    entry: ClicklogEntry,
    wire: String,
}

impl StoredEntry {
    pub fn new(entry: ClicklogEntry) -> Arc<Self> {
        debug_assert!(
            entry.results.is_empty() || entry.results.iter().any(|r| r.id == entry.clicked),
            "clicked item must be among non-empty results"
        );
        let wire = serde_json::to_string(&entry).expect("clicklog entries serialize");
        Arc::new(StoredEntry { entry, wire })
    }

    /// The encoded line, without the trailing newline.
    pub fn wire_line(&self) -> &str {
        &self.wire
    }

    /// Bytes this entry contributes to a message (line + newline).
    pub fn wire_len(&self) -> usize {
        self.wire.len() + 1
    }
}

impl Deref for StoredEntry {
    type Target = ClicklogEntry;

    fn deref(&self) -> &ClicklogEntry {
        &self.entry
    }
}

impl PartialEq for StoredEntry {
    fn eq(&self, other: &Self) -> bool {
        self.entry == other.entry
    }
}

impl From<ClicklogEntry> for Arc<StoredEntry> {
    fn from(entry: ClicklogEntry) -> Self {
        StoredEntry::new(entry)
    }
}

/// Encode a batch as newline-terminated wire lines.
pub fn encode_entries(entries: &[Arc<StoredEntry>]) -> String {
    let mut out = String::with_capacity(entries.iter().map(|e| e.wire_len()).sum());
    for e in entries {
        out.push_str(e.wire_line());
        out.push('\n');
    }
    out
}

/// Total wire size of a batch, matching `encode_entries(..).len()`.
pub fn encoded_size(entries: &[Arc<StoredEntry>]) -> usize {
    entries.iter().map(|e| e.wire_len()).sum()
}

/// Decode newline-separated wire lines back into entries.
pub fn decode_entries(text: &str) -> Result<Vec<ClicklogEntry>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClicklogError {
    #[error("duplicate query key {0} appended locally")]
    DuplicateKey(QueryKey),
}

/// Membership set for query keys. Per-origin sequence numbers are dense
/// and mostly arrive in order, so each origin is stored as a contiguous
/// prefix plus a small out-of-order overflow.
#[derive(Debug, Clone, Default)]
struct KeySet {
    per_origin: HashMap<NodeId, OriginSeen>,
}

#[derive(Debug, Clone, Default)]
struct OriginSeen {
    /// All seqs below this are present.
    prefix: u32,
    /// Seqs at or above `prefix` that arrived early.
    sparse: BTreeSet<u32>,
}

impl KeySet {
    fn contains(&self, key: QueryKey) -> bool {
        self.per_origin
            .get(&key.origin)
            .is_some_and(|o| key.seq < o.prefix || o.sparse.contains(&key.seq))
    }

    /// Insert; returns false if already present.
    fn insert(&mut self, key: QueryKey) -> bool {
        let o = self.per_origin.entry(key.origin).or_default();
        if key.seq < o.prefix || o.sparse.contains(&key.seq) {
            return false;
        }
        if key.seq == o.prefix {
            o.prefix += 1;
            while o.sparse.remove(&o.prefix) {
                o.prefix += 1;
            }
        } else {
            o.sparse.insert(key.seq);
        }
        true
    }
}

/// A node's clicklog: insertion-ordered entries plus lookup indexes kept
/// consistent on every mutation.
#[derive(Debug, Clone, Default)]
pub struct Clicklog {
    entries: Vec<Arc<StoredEntry>>,
    seen: KeySet,
    by_term: HashMap<String, Vec<u32>>,
    by_origin: BTreeMap<NodeId, Vec<u32>>,
    /// tag (lowercased) -> items clicked under entries carrying that tag.
    tag_to_clicked: HashMap<String, BTreeSet<ItemId>>,
    /// First title seen for each item, from displayed results and clicks.
    titles: HashMap<ItemId, String>,
}

impl Clicklog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Arc<StoredEntry>] {
        &self.entries
    }

    pub fn contains_key(&self, key: QueryKey) -> bool {
        self.seen.contains(key)
    }

    fn index(&mut self, idx: u32) {
        let e = &self.entries[idx as usize];
        self.by_term
            .entry(e.query_term.clone())
            .or_default()
            .push(idx);
        self.by_origin.entry(e.origin_node).or_default().push(idx);
        for tag in &e.clicked_tags {
            self.tag_to_clicked
                .entry(tag.to_lowercase())
                .or_default()
                .insert(e.clicked);
        }
        self.titles
            .entry(e.clicked)
            .or_insert_with(|| e.clicked_title.clone());
        for r in &e.results {
            self.titles
                .entry(r.id)
                .or_insert_with(|| r.title.clone());
        }
    }

    /// Append an entry this node just created. A duplicate key signals a
    /// local bookkeeping bug, so it is an error rather than a skip.
    pub fn append_local(&mut self, entry: Arc<StoredEntry>) -> Result<(), ClicklogError> {
        if !self.seen.insert(entry.query_key) {
            return Err(ClicklogError::DuplicateKey(entry.query_key));
        }
        self.entries.push(entry);
        self.index(self.entries.len() as u32 - 1);
        Ok(())
    }

    /// Merge a gossiped batch: unseen entries append in batch order,
    /// duplicates are silently skipped. Returns how many were new.
    pub fn merge_remote(&mut self, batch: &[Arc<StoredEntry>]) -> usize {
        let mut added = 0;
        for entry in batch {
            if self.seen.insert(entry.query_key) {
                self.entries.push(Arc::clone(entry));
                self.index(self.entries.len() as u32 - 1);
                added += 1;
            }
        }
        added
    }

    /// All entries with the given query term, in insertion order.
    pub fn entries_for_term<'a>(&'a self, term: &str) -> impl Iterator<Item = &'a StoredEntry> {
        self.by_term
            .get(term)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|&i| self.entries[i as usize].as_ref())
    }

    /// All entries originated by `origin`, in insertion order.
    pub fn entries_from_origin<'a>(
        &'a self,
        origin: NodeId,
    ) -> impl Iterator<Item = &'a Arc<StoredEntry>> {
        self.by_origin
            .get(&origin)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|&i| &self.entries[i as usize])
    }

    /// Count of held entries originated by `origin`.
    pub fn origin_len(&self, origin: NodeId) -> usize {
        self.by_origin.get(&origin).map_or(0, Vec::len)
    }

    /// Origins of all held entries.
    pub fn origins(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.by_origin.keys().copied()
    }

    /// Items clicked under any held entry whose clicked item carries `tag`.
    pub fn clicked_items_with_tag(&self, tag: &str) -> Option<&BTreeSet<ItemId>> {
        self.tag_to_clicked.get(&tag.to_lowercase())
    }

    /// Title of an item as learned from held entries, if any entry has
    /// displayed or clicked it.
    pub fn known_title(&self, item: ItemId) -> Option<&str> {
        self.titles.get(&item).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn entry(origin: u32, seq: u32, term: &str, clicked: u32) -> Arc<StoredEntry> {
        StoredEntry::new(ClicklogEntry {
            origin_node: NodeId(origin),
            query_term: term.to_string(),
            results: vec![DisplayedResult {
                id: ItemId(clicked),
                title: format!("title {clicked}"),
            }],
            clicked: ItemId(clicked),
            clicked_title: format!("title {clicked}"),
            clicked_tags: [term.to_string()].into(),
            query_key: QueryKey {
                origin: NodeId(origin),
                seq,
            },
        })
    }

    #[test]
    fn append_then_len() {
        let mut log = Clicklog::new();
        log.append_local(entry(1, 0, "ambient", 3)).unwrap();
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn duplicate_key_rejected() {
        let mut log = Clicklog::new();
        log.append_local(entry(7, 3, "ambient", 1)).unwrap();
        let err = log.append_local(entry(7, 3, "techno", 2)).unwrap_err();
        assert_eq!(
            err,
            ClicklogError::DuplicateKey(QueryKey {
                origin: NodeId(7),
                seq: 3
            })
        );
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn thirty_nine_seed_entries() {
        let mut log = Clicklog::new();
        for seq in 0..39 {
            log.append_local(entry(0, seq, &format!("t{seq}"), seq)).unwrap();
        }
        assert_eq!(log.len(), 39);
    }

    #[test]
    fn merge_is_idempotent() {
        let batch: Vec<_> = (0..5).map(|s| entry(2, s, "dub", s)).collect();
        let mut log = Clicklog::new();
        assert_eq!(log.merge_remote(&batch), 5);
        assert_eq!(log.merge_remote(&batch), 0);
        assert_eq!(log.len(), 5);
    }

    #[test]
    fn merge_counts_only_new() {
        let mut log = Clicklog::new();
        let first: Vec<_> = (0..2).map(|s| entry(4, s, "funk", s)).collect();
        log.merge_remote(&first);
        // 3 new + 2 duplicates; the oracle is the key set difference.
        let batch: Vec<_> = (0..5).map(|s| entry(4, s, "funk", s)).collect();
        let expected = batch
            .iter()
            .filter(|e| !log.contains_key(e.query_key))
            .count();
        assert_eq!(expected, 3);
        assert_eq!(log.merge_remote(&batch), 3);
    }

    #[test]
    fn merge_commutes_on_entry_sets() {
        let a: Vec<_> = (0..6).map(|s| entry(1, s, "idm", s)).collect();
        let b: Vec<_> = (3..9).map(|s| entry(1, s, "idm", s)).collect();
        let c: Vec<_> = (0..4).map(|s| entry(2, s, "idm", s + 10)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut reference: Option<BTreeSet<QueryKey>> = None;
        for _ in 0..6 {
            let mut batches = vec![a.clone(), b.clone(), c.clone()];
            batches.shuffle(&mut rng);
            let mut log = Clicklog::new();
            for batch in &batches {
                log.merge_remote(batch);
            }
            let keys: BTreeSet<QueryKey> = log.entries().iter().map(|e| e.query_key).collect();
            assert_eq!(keys.len(), log.len(), "every entry counted once");
            match &reference {
                None => reference = Some(keys),
                Some(r) => assert_eq!(&keys, r),
            }
        }
    }

    #[test]
    fn entries_for_term_filters() {
        let mut log = Clicklog::new();
        assert_eq!(log.entries_for_term("unseen").count(), 0);
        log.append_local(entry(1, 0, "dub", 4)).unwrap();
        assert_eq!(log.entries_for_term("dub").count(), 1);
        let local = log.entries_for_term("dub").count();
        let batch: Vec<_> = (0..4).map(|s| entry(9, s, "dub", s)).collect();
        log.merge_remote(&batch);
        assert_eq!(log.entries_for_term("dub").count(), local + 4);
    }

    #[test]
    fn wire_roundtrip_and_size() {
        let batch: Vec<_> = (0..7).map(|s| entry(3, s, "glitch", s)).collect();
        let encoded = encode_entries(&batch);
        assert_eq!(encoded.len(), encoded_size(&batch));
        let decoded = decode_entries(&encoded).unwrap();
        assert_eq!(decoded.len(), 7);
        for (orig, dec) in batch.iter().zip(&decoded) {
            assert_eq!(&orig.entry, dec);
        }
    }

    #[test]
    fn wire_field_order_is_record_order() {
        let e = entry(5, 17, "ambient", 2);
        let line = e.wire_line();
        let positions: Vec<usize> = [
            "origin_node",
            "query_term",
            "results",
            "clicked",
            "clicked_title",
            "clicked_tags",
            "query_key",
        ]
        .iter()
        .map(|f| line.find(f).expect("field present"))
        .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(line.contains("\"query_key\":\"5:17\""));
    }

    #[test]
    fn out_of_order_keys_dedup() {
        let mut log = Clicklog::new();
        for seq in [5u32, 1, 3, 0, 2, 4] {
            log.merge_remote(&[entry(8, seq, "soul", seq)]);
        }
        for seq in 0..6 {
            assert!(log.contains_key(QueryKey {
                origin: NodeId(8),
                seq
            }));
        }
        assert_eq!(log.merge_remote(&[entry(8, 3, "soul", 3)]), 0);
        assert_eq!(log.merge_remote(&[entry(8, 6, "soul", 6)]), 1);
    }

    #[test]
    fn tag_index_tracks_clicked_items() {
        let mut log = Clicklog::new();
        log.append_local(entry(1, 0, "dub", 4)).unwrap();
        log.merge_remote(&[entry(2, 0, "dub", 9)]);
        let items = log.clicked_items_with_tag("dub").unwrap();
        assert_eq!(items.iter().copied().collect::<Vec<_>>(), vec![ItemId(4), ItemId(9)]);
        assert!(log.clicked_items_with_tag("techno").is_none());
    }
}
