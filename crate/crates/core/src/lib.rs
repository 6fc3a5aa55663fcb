//! Long- and short-term user interest modeling for CTR prediction.
//!
//! Long-term behavior is compressed offline into per-user item subgraphs
//! anchored on a handful of center nodes; at request time the centers closest
//! to the target item are expanded a few hops to collect relevant history.
//! Recent behavior is split by scene and encoded with one GRU pass per scene.
//! A user-conditioned gate blends both interest vectors before the final
//! network.
//!
//! This crate is `no_std` (it needs `alloc`). File IO, configuration, the CLI
//! and the serving simulator live in the `glsm` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod codec;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod features;
pub mod graph;
pub mod ids;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod retrieval;
pub mod synth;

mod math;

pub use error::{Error, Result};
pub use ids::{CategoryId, ItemId, UserId};
