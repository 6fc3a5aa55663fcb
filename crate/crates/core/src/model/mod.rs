//! The neural CTR model with hand-derived gradients.
//!
//! Long-term path: each retrieved group is pooled under neighbor-level
//! attention into a center vector, and centers are pooled under center-level
//! attention into `E_long`. Short-term path: every nonempty scene runs
//! through a GRU, its states are summed, and scenes are pooled under
//! scene-level attention into `E_short`. The two are fused (gate by default)
//! and fed with the target and profile embeddings to a two-layer ReLU
//! network with a sigmoid head.
//!
//! Attention weights are `σ(·)` per operand and are not normalized across
//! operands. The gate reads the user-profile embedding but never sends
//! gradient back into the profile table; only the direct profile input of
//! the final network trains it.
//!
//! Dimension table (defaults in parentheses): item, sideinfo and interest
//! width `d` (16); attention hidden `a` (8); profile `p` (8); gate hidden
//! `g` (16); network layers `h1` (64), `h2` (32). The network input is
//! `fusion width + d + p`, where the fusion width is `2d` for concat and
//! gate and `d` otherwise.

mod checkpoint;
mod net;
mod params;
mod train;
pub mod units;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use net::{
    backward, backward_from_logit, bce_with_logit, forward, forward_detached, predict, sideinfo_embed,
    target_embed, Example, ForwardTrace, NodeInput,
};
pub use params::{
    behavior_row, time_bucket, Attention, Dnn, Fusion, Gate, Gru, ModelDims, ParameterSet, Vocab,
    BEHAVIOR_ROWS, INIT_BOUND, TENSOR_COUNT, TIME_BUCKETS,
};
pub use train::{batch_gradient, predict_all, train, Optimizer, TrainConfig, TrainReport};

pub use crate::linalg::Matrix;
