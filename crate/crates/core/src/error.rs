use alloc::string::String;

use crate::ids::ItemId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("{what} = {value} is out of range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },
    #[error("item {0} is not a node of the graph")]
    UnknownNode(ItemId),
    #[error("item {0} has no embedding")]
    MissingEmbedding(ItemId),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in tensor `{tensor}` at epoch {epoch}, batch {batch}")]
    NonFinite {
        tensor: String,
        epoch: usize,
        batch: usize,
    },
    #[error("unknown experiment configuration `{0}`")]
    UnknownExperiment(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Failures decoding one of the binary artifact formats.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("bad magic: not a {expected} file")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated input: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("checksum mismatch in record {record}: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum {
        record: usize,
        stored: u32,
        computed: u32,
    },
    #[error("malformed payload: {0}")]
    Malformed(String),
}
