//! Binary subgraph store.
//!
//! ```text
//! file    := magic "GLSMSTOR" | version u32 | count u64 | record*
//! record  := payload_len u32 | crc32(payload) u32 | payload
//! payload := user u64 | l_max u32 | dim u32
//!            | n_centers u32 | (node u64, local f64, global f64, union f64, vec dim×f64)*
//!            | n_nodes u32 | (item u64, category u64, behavior u8, last_ts u64)*
//!            | offsets (n_nodes+1)×u32 | neighbors m×u32 | weights m×u32
//! ```
//!
//! All integers and floats are little-endian; floats keep their exact bits.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::{CenterEntry, CenterNodeSet, NodeRecord, UserSubgraph};
use crate::codec::{crc32, ByteReader, ByteWriter};
use crate::corpus::BehaviorType;
use crate::error::CodecError;
use crate::ids::{CategoryId, ItemId, UserId};

const STORE_MAGIC: &[u8; 8] = b"GLSMSTOR";
pub const STORE_VERSION: u32 = 1;

fn encode_payload(sub: &UserSubgraph) -> Vec<u8> {
    let dim = sub.center_vectors.first().map_or(0, Vec::len);
    let mut w = ByteWriter::new();
    w.u64(sub.user.0);
    w.u32(sub.l_max as u32);
    w.u32(dim as u32);
    w.u32(sub.centers.len() as u32);
    for (e, v) in sub.centers.entries.iter().zip(&sub.center_vectors) {
        w.u64(e.node.0);
        w.f64(e.local);
        w.f64(e.global);
        w.f64(e.union);
        w.f64s(v);
    }
    w.u32(sub.nodes.len() as u32);
    for n in &sub.nodes {
        w.u64(n.item.0);
        w.u64(n.category.0);
        w.u8(n.behavior.index() as u8);
        w.u64(n.last_timestamp);
    }
    for &o in &sub.offsets {
        w.u32(o);
    }
    for &j in &sub.neighbors {
        w.u32(j);
    }
    for &x in &sub.weights {
        w.u32(x);
    }
    w.into_bytes()
}

fn decode_payload(bytes: &[u8]) -> Result<UserSubgraph, CodecError> {
    let mut r = ByteReader::new(bytes);
    let user = UserId(r.u64()?);
    let l_max = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let n_centers = r.u32()? as usize;
    r.ensure(n_centers.saturating_mul(32 + 8 * dim))?;
    let mut entries = Vec::with_capacity(n_centers);
    let mut center_vectors = Vec::with_capacity(n_centers);
    for _ in 0..n_centers {
        entries.push(CenterEntry {
            node: ItemId(r.u64()?),
            local: r.f64()?,
            global: r.f64()?,
            union: r.f64()?,
        });
        center_vectors.push(r.f64s(dim)?);
    }
    let n_nodes = r.u32()? as usize;
    r.ensure(n_nodes.saturating_mul(25))?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let item = ItemId(r.u64()?);
        let category = CategoryId(r.u64()?);
        let b = r.u8()?;
        let behavior = BehaviorType::from_index(b as usize)
            .ok_or_else(|| CodecError::Malformed(format!("behavior code {b}")))?;
        nodes.push(NodeRecord {
            item,
            category,
            behavior,
            last_timestamp: r.u64()?,
        });
    }
    r.ensure((n_nodes + 1) * 4)?;
    let offsets: Vec<u32> = (0..=n_nodes).map(|_| r.u32()).collect::<Result<_, _>>()?;
    let m = *offsets.last().unwrap() as usize;
    if offsets.first() != Some(&0) || offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(CodecError::Malformed("offsets not monotone from zero".into()));
    }
    r.ensure(m.saturating_mul(8))?;
    let neighbors: Vec<u32> = (0..m).map(|_| r.u32()).collect::<Result<_, _>>()?;
    let weights: Vec<u32> = (0..m).map(|_| r.u32()).collect::<Result<_, _>>()?;
    if !r.is_at_end() {
        return Err(CodecError::Malformed("trailing bytes in record".into()));
    }
    if neighbors.iter().any(|&j| j as usize >= n_nodes) {
        return Err(CodecError::Malformed("neighbor index out of range".into()));
    }
    Ok(UserSubgraph {
        user,
        l_max,
        centers: CenterNodeSet { entries },
        center_vectors,
        nodes,
        offsets,
        neighbors,
        weights,
    })
}

/// One length-prefixed, checksummed record.
pub fn encode_subgraph(sub: &UserSubgraph, sink: &mut ByteWriter) {
    let payload = encode_payload(sub);
    sink.u32(payload.len() as u32);
    sink.u32(crc32(&payload));
    sink.bytes(&payload);
}

/// Reads the record at the reader's position; `index` only labels errors.
pub fn decode_subgraph(source: &mut ByteReader<'_>, index: usize) -> Result<UserSubgraph, CodecError> {
    let len = source.u32()? as usize;
    let stored = source.u32()?;
    let payload = source.take(len)?;
    let computed = crc32(payload);
    if computed != stored {
        return Err(CodecError::Checksum {
            record: index,
            stored,
            computed,
        });
    }
    decode_payload(payload)
}

/// All users' subgraphs, keyed by user. Immutable once built; lookups are
/// safe from any number of readers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubgraphStore {
    users: BTreeMap<UserId, UserSubgraph>,
}

impl SubgraphStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sub: UserSubgraph) {
        self.users.insert(sub.user, sub);
    }

    pub fn get(&self, user: UserId) -> Option<&UserSubgraph> {
        self.users.get(&user)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UserSubgraph> {
        self.users.values()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::header(STORE_MAGIC, STORE_VERSION);
        w.u64(self.users.len() as u64);
        for sub in self.users.values() {
            encode_subgraph(sub, &mut w);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = ByteReader::header(bytes, STORE_MAGIC, "subgraph store", STORE_VERSION)?;
        let count = r.u64()? as usize;
        let mut store = Self::new();
        for i in 0..count {
            store.insert(decode_subgraph(&mut r, i)?);
        }
        if !r.is_at_end() {
            return Err(CodecError::Malformed("trailing bytes after last record".into()));
        }
        Ok(store)
    }
}

impl FromIterator<UserSubgraph> for SubgraphStore {
    fn from_iter<T: IntoIterator<Item = UserSubgraph>>(iter: T) -> Self {
        let mut s = Self::new();
        for sub in iter {
            s.insert(sub);
        }
        s
    }
}
