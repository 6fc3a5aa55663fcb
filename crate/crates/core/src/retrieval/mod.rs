//! Center-node selection, multi-hop retrieval over per-user subgraphs, and
//! the category-match baseline.
//!
//! Offline, each user's long-term behavior becomes a local item graph. Every
//! node is scored by degree centrality (local importance) and by the
//! reciprocal distance from its embedding to the nearest of the user's
//! interest-cluster centers (global importance). Both scores are min-max
//! normalized over the user's nodes and summed; the top `N` nodes are the
//! centers. The graph is then cut down to nodes within `l_max` hops of a
//! center and stored as a [`UserSubgraph`].
//!
//! Online, the `k` centers nearest the target embedding are expanded up to
//! `hops` edges and the reached nodes become the retrieved behavior.

mod store;

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

pub use store::{decode_subgraph, encode_subgraph, SubgraphStore};

use crate::corpus::{BehaviorEvent, BehaviorSequence, BehaviorType};
use crate::embed::{distinct_count, kmeans, select_cluster_count, ClusterModel, EmbeddingTable};
use crate::error::{Error, Result};
use crate::graph::{build_local_graph, ItemGraph};
use crate::ids::{CategoryId, ItemId, UserId};
use crate::math::distance;

/// Distance floor for reciprocal-distance importance.
pub const DISTANCE_EPSILON: f64 = 1e-8;
/// Default hop depth precomputed into the store.
pub const DEFAULT_L_MAX: usize = 2;
/// Default cap on retrieved nodes per request.
pub const DEFAULT_RESULT_CAP: usize = 200;

/// Reciprocal distance to the nearest cluster center, with the distance
/// floored at `epsilon`.
pub fn global_importance(node_vec: &[f64], clusters: &ClusterModel, epsilon: f64) -> Result<f64> {
    if clusters.centers.is_empty() {
        return Err(Error::Empty("cluster model has no centers"));
    }
    let mut best = 0.0f64;
    for c in &clusters.centers {
        if c.len() != node_vec.len() {
            return Err(Error::DimensionMismatch {
                context: "global importance",
                expected: c.len(),
                got: node_vec.len(),
            });
        }
        best = best.max(1.0 / distance(node_vec, c).max(epsilon));
    }
    Ok(best)
}

fn min_max_normalize(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    xs.iter()
        .map(|&x| if span > 0.0 { (x - lo) / span } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterEntry {
    pub node: ItemId,
    /// Degree centrality in the local graph.
    pub local: f64,
    /// Reciprocal distance to the nearest interest cluster.
    pub global: f64,
    /// Sum of the min-max normalized `local` and `global` scores.
    pub union: f64,
}

/// Centers sorted by `union` descending, ties by ascending node id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CenterNodeSet {
    pub entries: Vec<CenterEntry>,
}

impl CenterNodeSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.entries.iter().map(|e| e.node)
    }
}

/// Scores every node of `local` and keeps the top `n`.
pub fn select_center_nodes(
    local: &ItemGraph,
    table: &EmbeddingTable,
    clusters: &ClusterModel,
    n: usize,
) -> Result<CenterNodeSet> {
    if local.is_empty() {
        return Err(Error::Empty("local graph"));
    }
    if n == 0 {
        return Err(Error::OutOfRange {
            what: "center count",
            value: 0,
            min: 1,
            max: usize::MAX,
        });
    }
    let nodes: Vec<ItemId> = local.nodes().collect();
    let mut local_im = Vec::with_capacity(nodes.len());
    let mut global_im = Vec::with_capacity(nodes.len());
    for &v in &nodes {
        local_im.push(local.degree_centrality(v)?);
        global_im.push(global_importance(table.require(v)?, clusters, DISTANCE_EPSILON)?);
    }
    let ln = min_max_normalize(&local_im);
    let gn = min_max_normalize(&global_im);
    let mut entries: Vec<CenterEntry> = (0..nodes.len())
        .map(|i| CenterEntry {
            node: nodes[i],
            local: local_im[i],
            global: global_im[i],
            union: ln[i] + gn[i],
        })
        .collect();
    entries.sort_by(|a, b| b.union.total_cmp(&a.union).then(a.node.cmp(&b.node)));
    entries.truncate(n);
    Ok(CenterNodeSet { entries })
}

/// How many interest clusters to fit per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClusterCount {
    Fixed(usize),
    /// Pick by silhouette within the range (clamped to what the user's points allow).
    Silhouette(RangeInclusive<usize>),
}

/// Clusters the embeddings of a user's local-graph nodes.
pub fn cluster_user_nodes(
    local: &ItemGraph,
    table: &EmbeddingTable,
    count: &ClusterCount,
    seed: u64,
) -> Result<ClusterModel> {
    let points: Vec<Vec<f64>> = local
        .nodes()
        .map(|v| table.require(v).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    if points.is_empty() {
        return Err(Error::Empty("local graph"));
    }
    let distinct = distinct_count(&points);
    let k = match count {
        ClusterCount::Fixed(k) => (*k).clamp(1, distinct),
        ClusterCount::Silhouette(range) => {
            let lo = (*range.start()).max(2);
            let hi = (*range.end()).min(distinct);
            if lo > hi {
                1
            } else {
                select_cluster_count(&points, lo..=hi, seed)?.0
            }
        }
    };
    kmeans(&points, k, seed)
}

/// Sideinfo of the most recent event on a stored node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRecord {
    pub item: ItemId,
    pub category: CategoryId,
    pub behavior: BehaviorType,
    pub last_timestamp: u64,
}

/// The precomputed retrieval structure of one user: centers with scores and
/// embeddings, plus CSR adjacency of every node within `l_max` hops of a
/// center.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSubgraph {
    pub user: UserId,
    pub l_max: usize,
    pub centers: CenterNodeSet,
    /// Embedding of each center, parallel to `centers.entries`.
    pub center_vectors: Vec<Vec<f64>>,
    /// Sorted by item id.
    pub nodes: Vec<NodeRecord>,
    /// `offsets[i]..offsets[i+1]` indexes `neighbors`/`weights` for node `i`.
    pub offsets: Vec<u32>,
    pub neighbors: Vec<u32>,
    pub weights: Vec<u32>,
}

impl UserSubgraph {
    /// Cuts `local` down to nodes within `l_max` hops of a center.
    pub fn from_parts(
        user: UserId,
        local: &ItemGraph,
        centers: CenterNodeSet,
        table: &EmbeddingTable,
        sideinfo: &BTreeMap<ItemId, NodeRecord>,
        l_max: usize,
    ) -> Result<Self> {
        let mut keep: BTreeSet<ItemId> = BTreeSet::new();
        for c in centers.nodes() {
            keep.insert(c);
            keep.extend(local.neighbors_within(c, l_max)?);
        }
        let order: Vec<ItemId> = keep.into_iter().collect();
        let mut nodes = Vec::with_capacity(order.len());
        let mut offsets = vec![0u32];
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        for &v in &order {
            nodes.push(sideinfo.get(&v).copied().unwrap_or(NodeRecord {
                item: v,
                category: CategoryId(0),
                behavior: BehaviorType::Click,
                last_timestamp: 0,
            }));
            for (u, w) in local.neighbors(v) {
                if let Ok(j) = order.binary_search(&u) {
                    neighbors.push(j as u32);
                    weights.push(w);
                }
            }
            offsets.push(neighbors.len() as u32);
        }
        let center_vectors = centers
            .nodes()
            .map(|c| table.require(c).map(<[f64]>::to_vec))
            .collect::<Result<_>>()?;
        Ok(Self {
            user,
            l_max,
            centers,
            center_vectors,
            nodes,
            offsets,
            neighbors,
            weights,
        })
    }

    pub fn node_index(&self, item: ItemId) -> Option<usize> {
        self.nodes.binary_search_by_key(&item, |n| n.item).ok()
    }

    pub fn node(&self, item: ItemId) -> Option<&NodeRecord> {
        self.node_index(item).map(|i| &self.nodes[i])
    }

    fn adjacent(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    /// Rebuilds the stored adjacency as an [`ItemGraph`].
    pub fn graph(&self) -> ItemGraph {
        let mut g = ItemGraph::new();
        for (i, n) in self.nodes.iter().enumerate() {
            g.add_node(n.item);
            let lo = self.offsets[i] as usize;
            for (k, &j) in self.adjacent(i).iter().enumerate() {
                let other = self.nodes[j as usize].item;
                if n.item < other {
                    g.add_edge(n.item, other, self.weights[lo + k]);
                }
            }
        }
        g
    }

    /// BFS over stored adjacency; returns `(node index, hop)` for nodes at
    /// `1..=hops`, excluding the start.
    fn expand(&self, start: usize, hops: usize) -> Vec<(usize, usize)> {
        let mut seen = vec![false; self.nodes.len()];
        seen[start] = true;
        let mut out = Vec::new();
        let mut queue = VecDeque::from([(start, 0usize)]);
        while let Some((v, h)) = queue.pop_front() {
            if h == hops {
                continue;
            }
            for &u in self.adjacent(v) {
                let u = u as usize;
                if !seen[u] {
                    seen[u] = true;
                    out.push((u, h + 1));
                    queue.push_back((u, h + 1));
                }
            }
        }
        out
    }
}

/// Builds the retrieval structure for one user's long-term behavior.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphConfig {
    pub centers: usize,
    pub clusters: ClusterCount,
    pub l_max: usize,
    pub seed: u64,
}

impl Default for SubgraphConfig {
    fn default() -> Self {
        Self {
            centers: 30,
            clusters: ClusterCount::Silhouette(2..=8),
            l_max: DEFAULT_L_MAX,
            seed: 0,
        }
    }
}

/// Returns `None` when the user has no long-term behavior (or none of its
/// items are embedded).
pub fn build_user_subgraph(
    long: &BehaviorSequence,
    table: &EmbeddingTable,
    cfg: &SubgraphConfig,
) -> Result<Option<UserSubgraph>> {
    let known: Vec<BehaviorEvent> = long
        .events
        .iter()
        .filter(|e| table.get(e.item).is_some())
        .copied()
        .collect();
    if known.is_empty() {
        return Ok(None);
    }
    let seq = BehaviorSequence {
        user: long.user,
        events: known,
    };
    let local = build_local_graph(&seq);
    let clusters = cluster_user_nodes(&local, table, &cfg.clusters, cfg.seed ^ long.user.0)?;
    let centers = select_center_nodes(&local, table, &clusters, cfg.centers)?;
    let mut sideinfo = BTreeMap::new();
    for e in &seq.events {
        sideinfo.insert(
            e.item,
            NodeRecord {
                item: e.item,
                category: e.category,
                behavior: e.behavior,
                last_timestamp: e.timestamp,
            },
        );
    }
    UserSubgraph::from_parts(long.user, &local, centers, table, &sideinfo, cfg.l_max).map(Some)
}

/// Which end of the distance ranking supplies the `k` expanded centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CenterOrder {
    /// Nearest to the target first.
    #[default]
    Nearest,
    /// Farthest first; the literal reading of a descending distance sort.
    Farthest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrieveOptions {
    pub k: usize,
    pub hops: usize,
    pub cap: usize,
    pub order: CenterOrder,
}

impl RetrieveOptions {
    pub fn new(k: usize, hops: usize) -> Self {
        Self {
            k,
            hops,
            cap: DEFAULT_RESULT_CAP,
            order: CenterOrder::Nearest,
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_order(mut self, order: CenterOrder) -> Self {
        self.order = order;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievedNode {
    pub item: ItemId,
    pub hop: usize,
    pub source: ItemId,
    pub source_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalResult {
    pub nodes: Vec<RetrievedNode>,
    /// Centers that were expanded, with their distance to the target, in selection order.
    pub selected: Vec<(ItemId, f64)>,
}

impl RetrievalResult {
    pub fn node_set(&self) -> BTreeSet<ItemId> {
        self.nodes.iter().map(|n| n.item).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Retrieved nodes grouped by source center, in selection order.
    pub fn groups(&self) -> Vec<(ItemId, Vec<ItemId>)> {
        self.selected
            .iter()
            .map(|&(c, _)| {
                (
                    c,
                    self.nodes
                        .iter()
                        .filter(|n| n.source == c)
                        .map(|n| n.item)
                        .collect(),
                )
            })
            .collect()
    }
}

/// Expands the `k` centers closest to `target` through `1..=hops` edges.
/// Each node keeps its smallest hop (then the closer source center); output
/// is ordered by hop, source distance and node id, and truncated to `cap`.
pub fn retrieve(sub: &UserSubgraph, target: &[f64], opts: RetrieveOptions) -> Result<RetrievalResult> {
    if sub.centers.is_empty() {
        return Err(Error::Empty("center set"));
    }
    if opts.k == 0 {
        return Err(Error::OutOfRange {
            what: "k",
            value: 0,
            min: 1,
            max: sub.centers.len(),
        });
    }
    if opts.hops == 0 || opts.hops > sub.l_max {
        return Err(Error::OutOfRange {
            what: "hops",
            value: opts.hops,
            min: 1,
            max: sub.l_max,
        });
    }
    let mut ranked = Vec::with_capacity(sub.centers.len());
    for (e, v) in sub.centers.entries.iter().zip(&sub.center_vectors) {
        if v.len() != target.len() {
            return Err(Error::DimensionMismatch {
                context: "retrieval target",
                expected: v.len(),
                got: target.len(),
            });
        }
        ranked.push((e.node, distance(v, target)));
    }
    match opts.order {
        CenterOrder::Nearest => ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))),
        CenterOrder::Farthest => ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))),
    }
    ranked.truncate(opts.k);

    // node index -> (hop, source distance, source id)
    let mut best: BTreeMap<usize, (usize, f64, ItemId)> = BTreeMap::new();
    for &(c, dist) in &ranked {
        let start = sub.node_index(c).ok_or(Error::UnknownNode(c))?;
        for (u, hop) in sub.expand(start, opts.hops) {
            let cand = (hop, dist, c);
            let cur = best.entry(u).or_insert(cand);
            let better = cand
                .0
                .cmp(&cur.0)
                .then(cand.1.total_cmp(&cur.1))
                .then(cand.2.cmp(&cur.2))
                .is_lt();
            if better {
                *cur = cand;
            }
        }
    }
    let mut nodes: Vec<RetrievedNode> = best
        .into_iter()
        .map(|(u, (hop, d, src))| RetrievedNode {
            item: sub.nodes[u].item,
            hop,
            source: src,
            source_distance: d,
        })
        .collect();
    nodes.sort_by(|a, b| {
        a.hop
            .cmp(&b.hop)
            .then(a.source_distance.total_cmp(&b.source_distance))
            .then(a.item.cmp(&b.item))
    });
    nodes.truncate(opts.cap);
    Ok(RetrievalResult {
        nodes,
        selected: ranked,
    })
}

/// The most recent `k` long-term events in `target_category`, newest first,
/// one per item.
pub fn hard_category_events(
    long: &BehaviorSequence,
    target_category: CategoryId,
    k: usize,
) -> Vec<BehaviorEvent> {
    let mut seen = BTreeSet::new();
    long.events
        .iter()
        .rev()
        .filter(|e| e.category == target_category && seen.insert(e.item))
        .take(k)
        .copied()
        .collect()
}

/// Category-match retrieval baseline: every match counts as one hop from itself.
pub fn hard_category_retrieve(
    long: &BehaviorSequence,
    target_category: CategoryId,
    k: usize,
) -> RetrievalResult {
    let nodes = hard_category_events(long, target_category, k)
        .into_iter()
        .map(|e| RetrievedNode {
            item: e.item,
            hop: 1,
            source: e.item,
            source_distance: 0.0,
        })
        .collect();
    RetrievalResult {
        nodes,
        selected: Vec::new(),
    }
}

#[cfg(test)]
mod tests;
