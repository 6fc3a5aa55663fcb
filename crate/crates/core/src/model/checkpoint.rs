//! Versioned parameter checkpoints.
//!
//! ```text
//! header   "GLSMCKPT" | version u32
//! dims     6 × u32 | fusion u8
//! vocab    3 × (count u64 | ids u64…)      items, categories, users; row = position + 1
//! tensors  count u32, then per tensor:
//!          name str | rows u32 | cols u32 | data f64… | crc32 of the preceding record bytes
//! ```

use alloc::string::ToString;
use alloc::vec::Vec;

use super::params::{Fusion, ModelDims, ParameterSet, Vocab, TENSOR_COUNT};
use crate::codec::{crc32, ByteReader, ByteWriter};
use crate::error::{CodecError, Result};
use crate::ids::{CategoryId, ItemId, UserId};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GLSMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterSet,
    pub vocab: Vocab,
}

fn write_ids(w: &mut ByteWriter, ids: impl ExactSizeIterator<Item = u64>) {
    w.u64(ids.len() as u64);
    for id in ids {
        w.u64(id);
    }
}

fn read_ids(r: &mut ByteReader<'_>) -> Result<Vec<u64>, CodecError> {
    let n = r.u64()? as usize;
    r.ensure(n.saturating_mul(8))?;
    let ids: Vec<u64> = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CodecError::Malformed("vocabulary ids not strictly increasing".into()));
    }
    Ok(ids)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut w = ByteWriter::header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        let d = p.dims;
        for v in [d.d, d.attention_hidden, d.profile_dim, d.gate_hidden, d.hidden1, d.hidden2] {
            w.u32(v as u32);
        }
        w.u8(p.fusion.index());
        write_ids(&mut w, self.vocab.items.keys().map(|i| i.0));
        write_ids(&mut w, self.vocab.categories.keys().map(|i| i.0));
        write_ids(&mut w, self.vocab.users.keys().map(|i| i.0));
        w.u32(TENSOR_COUNT as u32);
        for (name, m) in p.tensors() {
            let mut rec = ByteWriter::new();
            rec.str(name);
            rec.u32(m.rows as u32);
            rec.u32(m.cols as u32);
            rec.f64s(&m.data);
            let rec = rec.into_bytes();
            w.bytes(&rec);
            w.u32(crc32(&rec));
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::header(bytes, CHECKPOINT_MAGIC, "checkpoint", CHECKPOINT_VERSION)?;
        let mut dims = [0usize; 6];
        for v in &mut dims {
            *v = r.u32()? as usize;
        }
        let dims = ModelDims {
            d: dims[0],
            attention_hidden: dims[1],
            profile_dim: dims[2],
            gate_hidden: dims[3],
            hidden1: dims[4],
            hidden2: dims[5],
        };
        let fusion = Fusion::from_index(r.u8()?)
            .ok_or_else(|| CodecError::Malformed("unknown fusion tag".into()))?;
        let vocab = Vocab::build(
            read_ids(&mut r)?.into_iter().map(ItemId),
            read_ids(&mut r)?.into_iter().map(CategoryId),
            read_ids(&mut r)?.into_iter().map(UserId),
        );
        let mut params = ParameterSet::for_vocab(dims, fusion, &vocab, 0)
            .map_err(|e| CodecError::Malformed(e.to_string()))?;
        let count = r.u32()? as usize;
        if count != TENSOR_COUNT {
            return Err(CodecError::Malformed("unexpected tensor count".into()).into());
        }
        for (i, (name, m)) in params.tensors_mut().into_iter().enumerate() {
            let start = r.position();
            let found = r.str()?;
            let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
            if found != name || rows != m.rows || cols != m.cols {
                return Err(CodecError::Malformed(alloc::format!(
                    "tensor {i}: expected {name} {}x{}, found {found} {rows}x{cols}",
                    m.rows,
                    m.cols
                ))
                .into());
            }
            m.data = r.f64s(rows * cols)?;
            let computed = crc32(&bytes[start..r.position()]);
            let stored = r.u32()?;
            if stored != computed {
                return Err(CodecError::Checksum {
                    record: i,
                    stored,
                    computed,
                }
                .into());
            }
        }
        if !r.is_at_end() {
            return Err(CodecError::Malformed("trailing bytes after tensors".into()).into());
        }
        Ok(Self { params, vocab })
    }
}
