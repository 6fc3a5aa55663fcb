//! Item embeddings learned on the global graph, and the clustering tools
//! used to turn a user's items into interest clusters.

mod kmeans;
mod sage;
mod silhouette;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

pub(crate) use kmeans::distinct_count;
pub use kmeans::{kmeans, ClusterModel, LLOYD_ITERATION_CAP};
pub use sage::{train_graph_embeddings, SageConfig, SageReport};
pub use silhouette::{select_cluster_count, silhouette, silhouette_samples, silhouette_value};

use crate::codec::{crc32, ByteReader, ByteWriter};
use crate::error::{CodecError, Error, Result};
use crate::ids::ItemId;

/// Fixed-dimension vectors keyed by item.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<ItemId, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, id: ItemId, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "embedding table insert",
                expected: self.dim,
                got: v.len(),
            });
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn get(&self, id: ItemId) -> Option<&[f64]> {
        self.vectors.get(&id).map(Vec::as_slice)
    }

    pub fn require(&self, id: ItemId) -> Result<&[f64]> {
        self.get(id).ok_or(Error::MissingEmbedding(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, &[f64])> + '_ {
        self.vectors.iter().map(|(&id, v)| (id, v.as_slice()))
    }

    /// Binary dump: header, `dim`, count, then `(id, dim × f64)` records and
    /// a CRC32 of the body.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = ByteWriter::new();
        body.u32(self.dim as u32);
        body.u64(self.vectors.len() as u64);
        for (id, v) in &self.vectors {
            body.u64(id.0);
            body.f64s(v);
        }
        let body = body.into_bytes();
        let mut w = ByteWriter::header(EMBED_MAGIC, EMBED_VERSION);
        w.u32(crc32(&body));
        w.bytes(&body);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = ByteReader::header(bytes, EMBED_MAGIC, "embedding table", EMBED_VERSION)?;
        let stored = r.u32()?;
        let body_start = r.position();
        let dim = r.u32()? as usize;
        let n = r.u64()? as usize;
        r.ensure(n.saturating_mul(8 + 8 * dim))?;
        let mut table = EmbeddingTable::new(dim);
        for _ in 0..n {
            let id = ItemId(r.u64()?);
            table.vectors.insert(id, r.f64s(dim)?);
        }
        if !r.is_at_end() {
            return Err(CodecError::Malformed("trailing bytes after embeddings".into()));
        }
        let computed = crc32(&bytes[body_start..]);
        if computed != stored {
            return Err(CodecError::Checksum {
                record: 0,
                stored,
                computed,
            });
        }
        Ok(table)
    }
}

const EMBED_MAGIC: &[u8; 8] = b"GLSMEMBD";
const EMBED_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn table_rejects_wrong_dim_and_round_trips() {
        let mut t = EmbeddingTable::new(2);
        t.insert(ItemId(3), vec![0.5, -1.0]).unwrap();
        t.insert(ItemId(1), vec![1e-300, 7.0]).unwrap();
        assert!(t.insert(ItemId(2), vec![1.0]).is_err());
        let bytes = t.to_bytes();
        assert_eq!(EmbeddingTable::from_bytes(&bytes).unwrap(), t);
        assert!(matches!(
            EmbeddingTable::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CodecError::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        let last = bad.len() - 2;
        bad[last] ^= 0x40;
        assert!(matches!(
            EmbeddingTable::from_bytes(&bad),
            Err(CodecError::Checksum { .. })
        ));
    }
}
