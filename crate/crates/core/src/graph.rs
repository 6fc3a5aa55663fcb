//! Item co-transition graphs.
//!
//! Two items share an edge when they appear in consecutive events of some
//! user's sequence. The global graph pools every user; a local graph uses a
//! single user's sequence. Edges are undirected and weighted by the number of
//! consecutive occurrences; self-transitions are dropped.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use crate::codec::{crc32, ByteReader, ByteWriter};
use crate::corpus::BehaviorSequence;
use crate::error::{CodecError, Error, Result};
use crate::ids::ItemId;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemGraph {
    adjacency: BTreeMap<ItemId, BTreeMap<ItemId, u32>>,
}

impl ItemGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, v: ItemId) {
        self.adjacency.entry(v).or_default();
    }

    /// Adds `weight` to the undirected edge `a–b`. Self-loops are ignored
    /// (both endpoints still become nodes).
    pub fn add_edge(&mut self, a: ItemId, b: ItemId, weight: u32) {
        self.add_node(a);
        self.add_node(b);
        if a == b || weight == 0 {
            return;
        }
        *self.adjacency.get_mut(&a).unwrap().entry(b).or_insert(0) += weight;
        *self.adjacency.get_mut(&b).unwrap().entry(a).or_insert(0) += weight;
    }

    /// Adds every consecutive-pair transition of `seq`.
    pub fn add_sequence(&mut self, seq: &BehaviorSequence) {
        let mut prev: Option<ItemId> = None;
        for item in seq.items() {
            match prev {
                Some(p) => self.add_edge(p, item, 1),
                None => self.add_node(item),
            }
            prev = Some(item);
        }
    }

    /// Merges `other` into `self`, adding edge weights.
    pub fn merge(&mut self, other: &ItemGraph) {
        for (&v, nbrs) in &other.adjacency {
            self.add_node(v);
            for (&u, &w) in nbrs {
                if v < u {
                    self.add_edge(v, u, w);
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeMap::len).sum::<usize>() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn contains(&self, v: ItemId) -> bool {
        self.adjacency.contains_key(&v)
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.adjacency.keys().copied()
    }

    /// Neighbors of `v` with edge weights, ascending by id. Empty for unknown nodes.
    pub fn neighbors(&self, v: ItemId) -> impl Iterator<Item = (ItemId, u32)> + '_ {
        self.adjacency
            .get(&v)
            .into_iter()
            .flat_map(|m| m.iter().map(|(&u, &w)| (u, w)))
    }

    pub fn degree(&self, v: ItemId) -> Option<usize> {
        self.adjacency.get(&v).map(BTreeMap::len)
    }

    pub fn weight(&self, a: ItemId, b: ItemId) -> Option<u32> {
        self.adjacency.get(&a)?.get(&b).copied()
    }

    /// Edges `(a, b, weight)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (ItemId, ItemId, u32)> + '_ {
        self.adjacency.iter().flat_map(|(&a, nbrs)| {
            nbrs.range((core::ops::Bound::Excluded(a), core::ops::Bound::Unbounded))
                .map(move |(&b, &w)| (a, b, w))
        })
    }

    /// Distinct-neighbor degree divided by `|nodes| - 1`; 0 for a single-node graph.
    pub fn degree_centrality(&self, v: ItemId) -> Result<f64> {
        let d = self.degree(v).ok_or(Error::UnknownNode(v))?;
        let n = self.node_count();
        if n <= 1 {
            return Ok(0.0);
        }
        Ok(d as f64 / (n - 1) as f64)
    }

    /// Hop distance from `start` for every node reachable within `1..=hops`
    /// edges, excluding `start`.
    pub fn hop_distances(&self, start: ItemId, hops: usize) -> Result<BTreeMap<ItemId, usize>> {
        if !self.contains(start) {
            return Err(Error::UnknownNode(start));
        }
        let mut dist = BTreeMap::new();
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([(start, 0usize)]);
        while let Some((v, h)) = queue.pop_front() {
            if h == hops {
                continue;
            }
            for (u, _) in self.neighbors(v) {
                if seen.insert(u) {
                    dist.insert(u, h + 1);
                    queue.push_back((u, h + 1));
                }
            }
        }
        Ok(dist)
    }

    /// All nodes reachable from `start` in `1..=hops` edges, excluding `start`.
    pub fn neighbors_within(&self, start: ItemId, hops: usize) -> Result<BTreeSet<ItemId>> {
        Ok(self.hop_distances(start, hops)?.into_keys().collect())
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency.iter().all(|(&v, nbrs)| {
            nbrs.iter()
                .all(|(&u, &w)| u != v && self.weight(u, v) == Some(w) && w >= 1)
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = ByteWriter::new();
        let index: BTreeMap<ItemId, u32> = self
            .nodes()
            .enumerate()
            .map(|(i, v)| (v, i as u32))
            .collect();
        body.u64(self.node_count() as u64);
        for v in self.nodes() {
            body.u64(v.0);
        }
        body.u64(self.edge_count() as u64);
        for (a, b, w) in self.edges() {
            body.u32(index[&a]);
            body.u32(index[&b]);
            body.u32(w);
        }
        let body = body.into_bytes();
        let mut w = ByteWriter::header(GRAPH_MAGIC, GRAPH_VERSION);
        w.u32(crc32(&body));
        w.bytes(&body);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = ByteReader::header(bytes, GRAPH_MAGIC, "item graph", GRAPH_VERSION)?;
        let stored = r.u32()?;
        let body_start = r.position();
        let n = r.u64()? as usize;
        r.ensure(n.saturating_mul(8))?;
        let nodes: Vec<ItemId> = (0..n).map(|_| r.u64().map(ItemId)).collect::<Result<_, _>>()?;
        let m = r.u64()? as usize;
        r.ensure(m.saturating_mul(12))?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            edges.push((r.u32()? as usize, r.u32()? as usize, r.u32()?));
        }
        if !r.is_at_end() {
            return Err(CodecError::Malformed("trailing bytes after edge list".into()));
        }
        let computed = crc32(&bytes[body_start..]);
        if computed != stored {
            return Err(CodecError::Checksum {
                record: 0,
                stored,
                computed,
            });
        }
        let mut g = ItemGraph::new();
        for &v in &nodes {
            g.add_node(v);
        }
        for (a, b, w) in edges {
            let (Some(&va), Some(&vb)) = (nodes.get(a), nodes.get(b)) else {
                return Err(CodecError::Malformed("edge endpoint out of range".into()));
            };
            if va == vb || w == 0 {
                return Err(CodecError::Malformed("self-loop or zero-weight edge".into()));
            }
            g.add_edge(va, vb, w);
        }
        Ok(g)
    }
}

const GRAPH_MAGIC: &[u8; 8] = b"GLSMGRPH";
const GRAPH_VERSION: u32 = 1;

/// Co-transition graph over all users' sequences.
pub fn build_global_graph<'a>(sequences: impl IntoIterator<Item = &'a BehaviorSequence>) -> ItemGraph {
    let mut g = ItemGraph::new();
    for seq in sequences {
        g.add_sequence(seq);
    }
    g
}

/// Co-transition graph of one user's sequence.
pub fn build_local_graph(seq: &BehaviorSequence) -> ItemGraph {
    let mut g = ItemGraph::new();
    g.add_sequence(seq);
    g
}
