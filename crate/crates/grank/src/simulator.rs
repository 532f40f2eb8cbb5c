//! Deterministic discrete-tick simulation harness.
//!
//! Each tick, one uniformly chosen benign node queries one uniformly
//! chosen corpus term, clicks the top displayed result (ties already
//! resolved toward the lowest item id by the ranker), appends the record
//! to its clicklog, and runs one gossip round — a pull from a random known
//! peer, or a fanout-1 push in the push-vs-pull scenario. Per-node query
//! timing is therefore geometric with p = 1/|N|.
//!
//! Adversaries join at `bootstrap_tick` (sampled into the network by a
//! random sponsor), lie in wait, fire their query burst at `attack_tick`,
//! and then wait passively for pulls — except push adversaries, which
//! immediately push their poisoned log to up to two peers.
//!
//! Everything is driven by a single seeded RNG; a (config, seed) pair
//! fully determines every snapshot byte.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::clicklog::{Clicklog, ClicklogEntry, ClicklogError, DisplayedResult, QueryKey, StoredEntry};
use crate::gossip::{self, GossipRequest, GossipResponse, ProgressTable};
use crate::metrics::{
    self, EvalWindow, GlobalOptimum, MetricsSnapshot, NodeDistanceRow, RunTotals, TermTopSongRow,
};
use crate::ranker::{self, RankParams, RankedResults};
use crate::similarity::SimilarityState;
use crate::{ItemId, NodeId};

/// What a node does for a living.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Benign,
    /// 100 queries on one term, always clicking the bottom result.
    TargetedSybil,
    /// 1000 queries on random terms, clicking at random.
    Inflation,
    /// Targeted behavior, deployed as a super-majority.
    EpicSybil,
    /// Targeted behavior plus unsolicited push to up to two peers.
    PushSybil,
}

/// The five experiment scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    TargetedSybil,
    Inflation,
    EpicSybil,
    PushVsPull,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Baseline,
        Scenario::TargetedSybil,
        Scenario::Inflation,
        Scenario::EpicSybil,
        Scenario::PushVsPull,
    ];

    pub fn adversary_behavior(self) -> Option<Behavior> {
        match self {
            Scenario::Baseline => None,
            Scenario::TargetedSybil => Some(Behavior::TargetedSybil),
            Scenario::Inflation => Some(Behavior::Inflation),
            Scenario::EpicSybil => Some(Behavior::EpicSybil),
            Scenario::PushVsPull => Some(Behavior::PushSybil),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::TargetedSybil => "targeted_sybil",
            Scenario::Inflation => "inflation",
            Scenario::EpicSybil => "epic_sybil",
            Scenario::PushVsPull => "push_vs_pull",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Scenario::Baseline),
            "targeted_sybil" => Ok(Scenario::TargetedSybil),
            "inflation" => Ok(Scenario::Inflation),
            "epic_sybil" => Ok(Scenario::EpicSybil),
            "push_vs_pull" => Ok(Scenario::PushVsPull),
            other => Err(format!(
                "unknown scenario `{other}` (expected one of: baseline, targeted_sybil, inflation, epic_sybil, push_vs_pull)"
            )),
        }
    }
}

/// Default adversary headcount for a scenario. Epic sybil reads "attackers
/// equal 75% of all participants" literally: 3 adversaries per benign node.
pub fn default_adversary_count(scenario: Scenario, n_nodes: u32) -> u32 {
    match scenario {
        Scenario::Baseline => 0,
        Scenario::EpicSybil => 3 * n_nodes,
        _ => 10,
    }
}

/// Queries each adversary performs in its burst.
pub fn default_adversary_queries(scenario: Scenario) -> u32 {
    match scenario {
        Scenario::Inflation => 1000,
        _ => 100,
    }
}

/// Full experiment parameterization. Serializes to/from the key-value
/// config file; flag names mirror these fields one-to-one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Isolation constant added to every similarity weight.
    #[serde(rename = "F")]
    pub isolation_f: f64,
    /// Benign node count.
    pub n_nodes: u32,
    pub total_ticks: u64,
    pub adversary_count: u32,
    pub bootstrap_tick: u64,
    pub attack_tick: u64,
    pub eval_interval: u64,
    pub seed: u64,
    pub result_len: usize,
    pub swap_prob: f64,
    /// Fraction of the catalog each node holds as its library.
    pub library_fraction: f64,
    /// K for the similarity top-term overlap.
    pub k_t: usize,
    /// Recent-entry window for the unseen-term fallback.
    pub fallback_window: usize,
    /// Clicklog fraction shared at init and bootstrap.
    pub bootstrap_fraction: f64,
    /// Byte cap on a single gossip message.
    pub response_budget_bytes: usize,
    /// Queries per adversary in the attack burst.
    pub adversary_queries: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::Baseline,
            isolation_f: 0.0,
            n_nodes: 100,
            total_ticks: 10_000,
            adversary_count: 0,
            bootstrap_tick: 2_500,
            attack_tick: 5_000,
            eval_interval: 100,
            seed: 0,
            result_len: 10,
            swap_prob: 0.5,
            library_fraction: 0.1,
            k_t: crate::similarity::DEFAULT_TOP_TERMS,
            fallback_window: 100,
            bootstrap_fraction: 0.1,
            response_budget_bytes: gossip::DEFAULT_RESPONSE_BUDGET_BYTES,
            adversary_queries: 100,
        }
    }
}

impl ExperimentConfig {
    /// Defaults for a scenario, including its adversary sizing.
    pub fn for_scenario(scenario: Scenario) -> Self {
        let base = ExperimentConfig::default();
        ExperimentConfig {
            scenario,
            adversary_count: default_adversary_count(scenario, base.n_nodes),
            adversary_queries: default_adversary_queries(scenario),
            ..base
        }
    }

    pub fn rank_params(&self) -> RankParams {
        RankParams {
            isolation_f: self.isolation_f,
            result_len: self.result_len,
            swap_prob: self.swap_prob,
            k_t: self.k_t,
            fallback_window: self.fallback_window,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_nodes < 2 {
            return Err(ConfigError::Invalid("n_nodes must be at least 2"));
        }
        if self.total_ticks == 0 {
            return Err(ConfigError::Invalid("total_ticks must be positive"));
        }
        if self.eval_interval == 0 {
            return Err(ConfigError::Invalid("eval_interval must be positive"));
        }
        if self.result_len == 0 {
            return Err(ConfigError::Invalid("result_len must be positive"));
        }
        if !(0.0..=1.0).contains(&self.swap_prob) {
            return Err(ConfigError::Invalid("swap_prob must be in [0, 1]"));
        }
        if self.isolation_f < 0.0 {
            return Err(ConfigError::Invalid("F must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.library_fraction) || self.library_fraction == 0.0 {
            return Err(ConfigError::Invalid("library_fraction must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.bootstrap_fraction) || self.bootstrap_fraction == 0.0 {
            return Err(ConfigError::Invalid("bootstrap_fraction must be in (0, 1]"));
        }
        if self.scenario == Scenario::Baseline && self.adversary_count > 0 {
            return Err(ConfigError::ScenarioMismatch(
                "baseline runs cannot have adversaries",
            ));
        }
        if self.adversary_count > 0 {
            if self.bootstrap_tick >= self.attack_tick {
                return Err(ConfigError::Invalid(
                    "bootstrap_tick must precede attack_tick",
                ));
            }
            if self.attack_tick >= self.total_ticks {
                return Err(ConfigError::Invalid(
                    "attack_tick must precede total_ticks",
                ));
            }
            if self.adversary_queries == 0 {
                return Err(ConfigError::Invalid("adversary_queries must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(&'static str),
    #[error("scenario/adversary mismatch: {0}")]
    ScenarioMismatch(&'static str),
}

/// One peer's full state.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub node_id: NodeId,
    pub behavior: Behavior,
    /// Item ids held locally, ascending.
    pub library: Vec<ItemId>,
    pub clicklog: Clicklog,
    /// Discovered peers, ascending, never containing self.
    pub known_peers: Vec<NodeId>,
    pub progress: ProgressTable,
    pub similarity: SimilarityState,
    /// Count of self-originated entries; also the next query sequence.
    pub local_query_counter: u32,
}

impl NodeState {
    pub fn new(node_id: NodeId, behavior: Behavior) -> Self {
        NodeState {
            node_id,
            behavior,
            library: Vec::new(),
            clicklog: Clicklog::new(),
            known_peers: Vec::new(),
            progress: ProgressTable::default(),
            similarity: SimilarityState::default(),
            local_query_counter: 0,
        }
    }

    pub fn is_benign(&self) -> bool {
        self.behavior == Behavior::Benign
    }

    pub fn next_query_key(&self) -> QueryKey {
        QueryKey {
            origin: self.node_id,
            seq: self.local_query_counter,
        }
    }

    /// Append an entry this node just originated.
    pub fn append_own(&mut self, entry: Arc<StoredEntry>) -> Result<(), ClicklogError> {
        debug_assert_eq!(entry.origin_node, self.node_id);
        debug_assert_eq!(entry.query_key.seq, self.local_query_counter);
        self.clicklog.append_local(entry)?;
        self.local_query_counter += 1;
        self.similarity.note_own_append();
        Ok(())
    }

    /// Merge a received batch and discover any new origins in it.
    pub fn merge_batch(&mut self, batch: &[Arc<StoredEntry>]) -> (usize, BTreeSet<NodeId>) {
        let new_entries = self.clicklog.merge_remote(batch);
        let discovered = gossip::discover_peers(self, batch);
        (new_entries, discovered)
    }

    /// Record a peer; returns false if already known (or self).
    pub fn add_known_peer(&mut self, peer: NodeId) -> bool {
        if peer == self.node_id {
            return false;
        }
        match self.known_peers.binary_search(&peer) {
            Ok(_) => false,
            Err(pos) => {
                self.known_peers.insert(pos, peer);
                true
            }
        }
    }

    pub fn knows(&self, peer: NodeId) -> bool {
        self.known_peers.binary_search(&peer).is_ok()
    }

    pub fn refresh_similarity(&mut self, k_t: usize) {
        self.similarity
            .refresh(self.node_id, &self.clicklog, &self.known_peers, k_t);
    }

    /// Full similarity table snapshot against every known peer.
    pub fn similarity_table(&self, k_t: usize) -> crate::similarity::SimilarityTable {
        crate::similarity::rebuild_similarity_table(
            self.node_id,
            &self.clicklog,
            &self.known_peers,
            k_t,
        )
    }

    /// Title for an item this node can display: from its library, or from
    /// any held entry that showed or clicked the item.
    pub fn resolve_title(&self, catalog: &Catalog, item: ItemId) -> String {
        if self.library.binary_search(&item).is_ok() {
            return catalog.item(item).title.clone();
        }
        if let Some(title) = self.clicklog.known_title(item) {
            return title.to_string();
        }
        debug_assert!(false, "displayed an item with no known title");
        catalog.item(item).title.clone()
    }
}

/// Build the clicklog record for a click on `displayed`.
fn build_entry(
    node: &NodeState,
    catalog: &Catalog,
    term: &str,
    displayed: &RankedResults,
    clicked: ItemId,
) -> Arc<StoredEntry> {
    let results: Vec<DisplayedResult> = displayed
        .items
        .iter()
        .map(|&(id, _)| DisplayedResult {
            id,
            title: node.resolve_title(catalog, id),
        })
        .collect();
    let item = catalog.item(clicked);
    StoredEntry::new(ClicklogEntry {
        origin_node: node.node_id,
        query_term: term.to_string(),
        results,
        clicked,
        clicked_title: node.resolve_title(catalog, clicked),
        clicked_tags: item.tags.iter().cloned().collect(),
        query_key: node.next_query_key(),
    })
}

/// Split borrows of two distinct nodes.
fn two_nodes(nodes: &mut [NodeState], a: usize, b: usize) -> (&mut NodeState, &mut NodeState) {
    assert_ne!(a, b);
    if a < b {
        let (left, right) = nodes.split_at_mut(b);
        (&mut left[a], &mut right[0])
    } else {
        let (left, right) = nodes.split_at_mut(a);
        (&mut right[0], &mut left[b])
    }
}

/// Initialize the benign network: every node samples its library, seeds
/// one clicklog entry per corpus term (a random tag-matching library item,
/// or any library item when none match), then gossips a clicklog sample to
/// its lower neighbor (node 0 wraps to node n-1). Post-init clicklogs hold
/// between 39 and 44 entries on the reference corpus.
pub fn initialize_network(
    config: &ExperimentConfig,
    catalog: &Catalog,
    rng: &mut ChaCha8Rng,
) -> Vec<NodeState> {
    let n = config.n_nodes as usize;
    let library_size = ((config.library_fraction * catalog.len() as f64).ceil() as usize)
        .clamp(1, catalog.len());
    let mut nodes: Vec<NodeState> = (0..n)
        .map(|i| {
            let mut node = NodeState::new(NodeId(i as u32), Behavior::Benign);
            let mut library: Vec<ItemId> = sample(rng, catalog.len(), library_size)
                .iter()
                .map(|x| ItemId(x as u32))
                .collect();
            library.sort_unstable();
            node.library = library;
            node
        })
        .collect();

    for node in &mut nodes {
        for term in catalog.term_corpus() {
            let matches: Vec<ItemId> = node
                .library
                .iter()
                .copied()
                .filter(|&id| catalog.item_has_tag(id, term))
                .collect();
            let clicked = if matches.is_empty() {
                node.library[rng.gen_range(0..node.library.len())]
            } else {
                matches[rng.gen_range(0..matches.len())]
            };
            let results: Vec<DisplayedResult> = matches
                .iter()
                .map(|&id| DisplayedResult {
                    id,
                    title: catalog.item(id).title.clone(),
                })
                .collect();
            let item = catalog.item(clicked);
            let entry = StoredEntry::new(ClicklogEntry {
                origin_node: node.node_id,
                query_term: term.clone(),
                results,
                clicked,
                clicked_title: item.title.clone(),
                clicked_tags: item.tags.iter().cloned().collect(),
                query_key: node.next_query_key(),
            });
            node.append_own(entry).expect("fresh init key");
        }
    }

    // Sequential init gossip: node i samples its current log to node i-1.
    for i in 0..n {
        let len = nodes[i].clicklog.len();
        let k = ((config.bootstrap_fraction * len as f64).ceil() as usize).min(len);
        let mut picked: Vec<usize> = sample(rng, len, k).into_vec();
        picked.sort_unstable();
        let batch: Vec<Arc<StoredEntry>> = picked
            .iter()
            .map(|&idx| Arc::clone(&nodes[i].clicklog.entries()[idx]))
            .collect();
        let target = (i + n - 1) % n;
        let (_, receiver) = two_nodes(&mut nodes, i, target);
        receiver.merge_batch(&batch);
    }
    nodes
}

/// Execute one adversary's query burst. Targeted-style attackers pick a
/// single term and click the bottom-most displayed result every time;
/// inflation attackers query random terms and click at random. Returns
/// the created entries.
pub fn run_adversary_attack<R: Rng>(
    node: &mut NodeState,
    catalog: &Catalog,
    params: &RankParams,
    queries: u32,
    rng: &mut R,
) -> Vec<Arc<StoredEntry>> {
    debug_assert!(!node.is_benign());
    let corpus = catalog.term_corpus();
    let mut created = Vec::with_capacity(queries as usize);
    let fixed_term = match node.behavior {
        Behavior::Inflation => None,
        _ => Some(corpus[rng.gen_range(0..corpus.len())].clone()),
    };
    for _ in 0..queries {
        let term = match &fixed_term {
            Some(t) => t.clone(),
            None => corpus[rng.gen_range(0..corpus.len())].clone(),
        };
        let displayed = ranker::rank(node, catalog, &term, params, rng);
        debug_assert!(
            !displayed.items.is_empty(),
            "bootstrapped adversaries always have fallback candidates"
        );
        let clicked = match node.behavior {
            Behavior::Inflation => displayed.items[rng.gen_range(0..displayed.items.len())].0,
            _ => displayed.items.last().expect("non-empty").0,
        };
        let entry = build_entry(node, catalog, &term, &displayed, clicked);
        node.append_own(Arc::clone(&entry)).expect("fresh key");
        created.push(entry);
    }
    created
}

/// Per-(term, item) click tallies over every entry ever created, i.e. the
/// deduplicated union of all clicklogs (every entry lives in its origin's
/// log, so union == created set).
#[derive(Debug, Clone, Default)]
struct GlobalCounts {
    per_term: Vec<HashMap<ItemId, (u32, u32)>>,
}

impl GlobalCounts {
    fn new(n_terms: usize) -> Self {
        GlobalCounts {
            per_term: vec![HashMap::new(); n_terms],
        }
    }

    fn record(&mut self, term_idx: usize, item: ItemId, benign: bool) {
        let slot = self.per_term[term_idx].entry(item).or_insert((0, 0));
        slot.0 += 1;
        if benign {
            slot.1 += 1;
        }
    }

    fn optimum(&self, benign_only: bool) -> GlobalOptimum {
        let per_term = self
            .per_term
            .iter()
            .map(|counts| {
                let mut ranked: Vec<(ItemId, u32)> = counts
                    .iter()
                    .map(|(&item, &(total, benign))| {
                        (item, if benign_only { benign } else { total })
                    })
                    .filter(|&(_, c)| c > 0)
                    .collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                ranked.into_iter().map(|(item, _)| item).collect()
            })
            .collect();
        GlobalOptimum::new(per_term)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct WindowStats {
    messages: u64,
    bytes: u64,
    entries_sent: u64,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub snapshots: Vec<MetricsSnapshot>,
    pub node_detail: Vec<NodeDistanceRow>,
    pub term_detail: Vec<TermTopSongRow>,
    pub total_entries: u64,
}

/// A running experiment.
pub struct Simulation {
    config: ExperimentConfig,
    catalog: Arc<Catalog>,
    params: RankParams,
    rng: ChaCha8Rng,
    nodes: Vec<NodeState>,
    benign_count: usize,
    tick: u64,
    counts: GlobalCounts,
    created_entries: u64,
    created_bytes: u64,
    window: WindowStats,
    last_query_tick: Vec<u64>,
    query_gaps: Vec<u64>,
    snapshots: Vec<MetricsSnapshot>,
    node_detail: Vec<NodeDistanceRow>,
    term_detail: Vec<TermTopSongRow>,
}

impl Simulation {
    pub fn new(config: ExperimentConfig, catalog: Arc<Catalog>) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let nodes = initialize_network(&config, &catalog, &mut rng);
        let benign_count = nodes.len();
        let mut counts = GlobalCounts::new(catalog.term_corpus().len());
        let mut created_entries = 0;
        let mut created_bytes = 0;
        for node in &nodes {
            for entry in node.clicklog.entries_from_origin(node.node_id) {
                let term_idx = catalog
                    .term_index(&entry.query_term)
                    .expect("init terms come from the corpus");
                counts.record(term_idx, entry.clicked, true);
                created_entries += 1;
                created_bytes += entry.wire_len() as u64;
            }
        }
        let params = config.rank_params();
        Ok(Simulation {
            last_query_tick: vec![0; benign_count],
            query_gaps: Vec::new(),
            config,
            catalog,
            params,
            rng,
            nodes,
            benign_count,
            tick: 0,
            counts,
            created_entries,
            created_bytes,
            window: WindowStats::default(),
            snapshots: Vec::new(),
            node_detail: Vec::new(),
            term_detail: Vec::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn params(&self) -> &RankParams {
        &self.params
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [NodeState] {
        &mut self.nodes
    }

    pub fn benign_count(&self) -> usize {
        self.benign_count
    }

    /// Distinct entries ever created across the network.
    pub fn created_entries(&self) -> u64 {
        self.created_entries
    }

    /// Waiting times between successive queries of the same node.
    pub fn query_gaps(&self) -> &[u64] {
        &self.query_gaps
    }

    pub fn snapshots(&self) -> &[MetricsSnapshot] {
        &self.snapshots
    }

    /// Current global optimum from the running tallies.
    pub fn global_optimum(&self, benign_only: bool) -> GlobalOptimum {
        self.counts.optimum(benign_only)
    }

    fn record_created(&mut self, entry: &StoredEntry, benign: bool) {
        let term_idx = self
            .catalog
            .term_index(&entry.query_term)
            .expect("queries come from the corpus");
        self.counts.record(term_idx, entry.clicked, benign);
        self.created_entries += 1;
        self.created_bytes += entry.wire_len() as u64;
    }

    fn note_message(&mut self, response: &GossipResponse) {
        self.window.messages += 1;
        self.window.bytes += response.byte_size as u64;
        self.window.entries_sent += response.entries.len() as u64;
    }

    fn deliver(&mut self, response: GossipResponse) {
        self.note_message(&response);
        let to = response.to.0 as usize;
        self.nodes[to].merge_batch(&response.entries);
    }

    fn bootstrap_adversaries(&mut self) {
        let behavior = self
            .config
            .scenario
            .adversary_behavior()
            .expect("adversarial scenario");
        for k in 0..self.config.adversary_count {
            let id = NodeId((self.benign_count as u32) + k);
            let mut newcomer = NodeState::new(id, behavior);
            let sponsor_idx = self.rng.gen_range(0..self.benign_count);
            let receipt = gossip::bootstrap(
                &mut newcomer,
                &mut self.nodes[sponsor_idx],
                self.config.bootstrap_fraction,
                &mut self.rng,
            );
            self.window.messages += 1;
            self.window.bytes += receipt.byte_size as u64;
            self.window.entries_sent += receipt.entries_sent as u64;
            self.nodes.push(newcomer);
        }
    }

    fn run_attacks(&mut self) {
        for idx in self.benign_count..self.nodes.len() {
            let created = run_adversary_attack(
                &mut self.nodes[idx],
                &self.catalog,
                &self.params,
                self.config.adversary_queries,
                &mut self.rng,
            );
            for entry in &created {
                self.record_created(entry, false);
            }
            if self.nodes[idx].behavior == Behavior::PushSybil {
                let messages = gossip::push_gossip(
                    &mut self.nodes[idx],
                    2,
                    self.config.response_budget_bytes,
                    &mut self.rng,
                );
                for msg in messages {
                    self.deliver(msg);
                }
            }
        }
    }

    /// Advance the simulation by one tick.
    pub fn step(&mut self) {
        self.tick += 1;
        let t = self.tick;
        if self.config.adversary_count > 0 {
            if t == self.config.bootstrap_tick {
                self.bootstrap_adversaries();
            }
            if t == self.config.attack_tick {
                self.run_attacks();
            }
        }

        // One benign query-then-gossip operation.
        let actor = self.rng.gen_range(0..self.benign_count);
        self.query_gaps.push(t - self.last_query_tick[actor]);
        self.last_query_tick[actor] = t;
        let term_idx = self.rng.gen_range(0..self.catalog.term_corpus().len());
        let term = self.catalog.term_corpus()[term_idx].clone();
        let displayed = ranker::rank(
            &mut self.nodes[actor],
            &self.catalog,
            &term,
            &self.params,
            &mut self.rng,
        );
        debug_assert!(
            !displayed.items.is_empty(),
            "initialized nodes always have candidates"
        );
        // Click model: the top displayed result (the ranker already breaks
        // score ties toward the lowest item id).
        let clicked = displayed.items[0].0;
        let entry = build_entry(&self.nodes[actor], &self.catalog, &term, &displayed, clicked);
        self.nodes[actor]
            .append_own(Arc::clone(&entry))
            .expect("locally fresh key");
        self.record_created(&entry, true);

        match self.config.scenario {
            Scenario::PushVsPull => {
                let messages = gossip::push_gossip(
                    &mut self.nodes[actor],
                    1,
                    self.config.response_budget_bytes,
                    &mut self.rng,
                );
                for msg in messages {
                    self.deliver(msg);
                }
            }
            _ => {
                if !self.nodes[actor].known_peers.is_empty() {
                    let peers = &self.nodes[actor].known_peers;
                    let target = peers[self.rng.gen_range(0..peers.len())];
                    let request = GossipRequest {
                        from: NodeId(actor as u32),
                        to: target,
                        tick: t,
                    };
                    let target_idx = target.0 as usize;
                    let response = gossip::handle_pull(
                        &request,
                        &mut self.nodes[target_idx],
                        self.config.response_budget_bytes,
                    );
                    self.note_message(&response);
                    self.nodes[actor].merge_batch(&response.entries);
                }
            }
        }

        if t % self.config.eval_interval == 0 {
            self.take_snapshot();
        }
    }

    fn eval_window(&self) -> EvalWindow {
        EvalWindow {
            messages: self.window.messages,
            bytes: self.window.bytes,
            entries_sent: self.window.entries_sent,
        }
    }

    fn totals(&self) -> RunTotals {
        RunTotals {
            created_entries: self.created_entries,
            created_bytes: self.created_bytes,
        }
    }

    fn take_snapshot(&mut self) {
        let optimum = self.counts.optimum(false);
        let benign_optimum = self.counts.optimum(true);
        let window = self.eval_window();
        let totals = self.totals();
        let bundle = metrics::compute_snapshot(
            self.tick,
            &mut self.nodes,
            self.benign_count,
            &self.catalog,
            &self.params,
            &optimum,
            &benign_optimum,
            &window,
            &totals,
        );
        self.snapshots.push(bundle.snapshot);
        self.node_detail.extend(bundle.node_rows);
        self.term_detail.extend(bundle.term_rows);
        self.window = WindowStats::default();
    }

    /// Compute a snapshot of the current state without recording it or
    /// resetting the evaluation window.
    pub fn snapshot_now(&mut self) -> MetricsSnapshot {
        let optimum = self.counts.optimum(false);
        let benign_optimum = self.counts.optimum(true);
        let window = self.eval_window();
        let totals = self.totals();
        metrics::compute_snapshot(
            self.tick,
            &mut self.nodes,
            self.benign_count,
            &self.catalog,
            &self.params,
            &optimum,
            &benign_optimum,
            &window,
            &totals,
        )
        .snapshot
    }

    /// Run to `total_ticks`.
    pub fn run(&mut self) {
        while self.tick < self.config.total_ticks {
            self.step();
        }
    }

    pub fn into_output(self) -> RunOutput {
        RunOutput {
            config: self.config,
            snapshots: self.snapshots,
            node_detail: self.node_detail,
            term_detail: self.term_detail,
            total_entries: self.created_entries,
        }
    }
}

/// Validate, run, and collect a full experiment.
pub fn run_experiment(
    config: ExperimentConfig,
    catalog: Arc<Catalog>,
) -> Result<RunOutput, ConfigError> {
    let mut sim = Simulation::new(config, catalog)?;
    sim.run();
    Ok(sim.into_output())
}
