use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::BehaviorType;
use crate::error::{Error, Result};
use crate::ids::{CategoryId, ItemId, UserId};
use crate::linalg::Matrix;

pub const TIME_BUCKETS: usize = 25;
pub const BEHAVIOR_ROWS: usize = BehaviorType::ALL.len() + 1;
pub const INIT_BOUND: f64 = 0.05;

/// `floor(ln(max(dt, 1)))` clamped to the last bucket.
pub fn time_bucket(delta_seconds: u64) -> usize {
    let b = libm::floor(libm::log(delta_seconds.max(1) as f64)) as usize;
    b.min(TIME_BUCKETS - 1)
}

pub fn behavior_row(b: BehaviorType) -> usize {
    b.index() + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fusion {
    ShortOnly,
    LongOnly,
    Add,
    Weight,
    Multiply,
    Concat,
    Gate,
}

impl Fusion {
    pub const ALL: [Fusion; 7] = [
        Fusion::ShortOnly,
        Fusion::LongOnly,
        Fusion::Add,
        Fusion::Weight,
        Fusion::Multiply,
        Fusion::Concat,
        Fusion::Gate,
    ];
    /// The variants that combine both horizons.
    pub const COMBINING: [Fusion; 5] = [
        Fusion::Add,
        Fusion::Weight,
        Fusion::Multiply,
        Fusion::Concat,
        Fusion::Gate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::ShortOnly => "short-only",
            Fusion::LongOnly => "long-only",
            Fusion::Add => "add",
            Fusion::Weight => "weight",
            Fusion::Multiply => "multiply",
            Fusion::Concat => "concat",
            Fusion::Gate => "gate",
        }
    }

    pub fn index(self) -> u8 {
        Self::ALL.iter().position(|f| *f == self).unwrap() as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn uses_long(self) -> bool {
        self != Fusion::ShortOnly
    }

    pub fn uses_short(self) -> bool {
        self != Fusion::LongOnly
    }

    /// Width of the fused interest vector for interest dim `d`.
    pub fn output_dim(self, d: usize) -> usize {
        match self {
            Fusion::Concat | Fusion::Gate => 2 * d,
            _ => d,
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown fusion `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    /// Item, sideinfo and interest width.
    pub d: usize,
    pub attention_hidden: usize,
    pub profile_dim: usize,
    pub gate_hidden: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            d: 16,
            attention_hidden: 8,
            profile_dim: 8,
            gate_hidden: 16,
            hidden1: 64,
            hidden2: 32,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.d,
            self.attention_hidden,
            self.profile_dim,
            self.gate_hidden,
            self.hidden1,
            self.hidden2,
        ];
        if all.contains(&0) {
            return Err(Error::InvalidConfig("model dimensions must be nonzero".into()));
        }
        Ok(())
    }

    /// `[E_u, target, profile]`
    pub fn dnn_input(&self, fusion: Fusion) -> usize {
        fusion.output_dim(self.d) + self.d + self.profile_dim
    }
}

/// Dense row indices for ids seen at training time. Row 0 is the shared
/// out-of-vocabulary row of every table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    pub items: BTreeMap<ItemId, u32>,
    pub categories: BTreeMap<CategoryId, u32>,
    pub users: BTreeMap<UserId, u32>,
}

fn index<K: Ord + Copy>(ids: impl IntoIterator<Item = K>) -> BTreeMap<K, u32> {
    let mut set: Vec<K> = ids.into_iter().collect();
    set.sort_unstable();
    set.dedup();
    set.into_iter().zip(1u32..).collect()
}

impl Vocab {
    pub fn build(
        items: impl IntoIterator<Item = ItemId>,
        categories: impl IntoIterator<Item = CategoryId>,
        users: impl IntoIterator<Item = UserId>,
    ) -> Self {
        Self {
            items: index(items),
            categories: index(categories),
            users: index(users),
        }
    }

    pub fn item(&self, id: ItemId) -> usize {
        self.items.get(&id).copied().unwrap_or(0) as usize
    }

    pub fn category(&self, id: CategoryId) -> usize {
        self.categories.get(&id).copied().unwrap_or(0) as usize
    }

    pub fn user(&self, id: UserId) -> usize {
        self.users.get(&id).copied().unwrap_or(0) as usize
    }

    pub fn item_rows(&self) -> usize {
        self.items.len() + 1
    }

    pub fn category_rows(&self) -> usize {
        self.categories.len() + 1
    }

    pub fn user_rows(&self) -> usize {
        self.users.len() + 1
    }
}

/// `σ(w1 · (w2 · [e_i; e_t]))`
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// `1 × a`
    pub w1: Matrix,
    /// `a × 2d`
    pub w2: Matrix,
}

/// Gates over `[h_prev; x]`, each `d × 2d`, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
}

/// `w1 · σ(w2 · profile)`
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    /// `d × g`
    pub w1: Matrix,
    /// `g × p`
    pub w2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dnn {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub w_out: Matrix,
    pub b_out: Matrix,
}

/// Every trainable tensor.
///
/// | tensor | shape |
/// |---|---|
/// | item / category table | rows × d |
/// | behavior table | 7 × d |
/// | time table | 25 × d |
/// | profile table | users × p |
/// | attention w1 / w2 (three instances) | 1 × a / a × 2d |
/// | GRU w_z, w_r, w_h | d × 2d |
/// | gate w1 / w2 | d × g / g × p |
/// | fusion weight | 1 × 1 |
/// | DNN | h1 × in, h2 × h1, 1 × h2, biases as columns |
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub dims: ModelDims,
    pub fusion: Fusion,
    pub item: Matrix,
    pub category: Matrix,
    pub behavior: Matrix,
    pub time: Matrix,
    pub profile: Matrix,
    pub neighbor_att: Attention,
    pub center_att: Attention,
    pub scene_att: Attention,
    pub gru: Gru,
    pub gate: Gate,
    pub fusion_weight: Matrix,
    pub dnn: Dnn,
}

/// Fan-scaled uniform init for the dense layers of the final network.
fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::uniform(rows, cols, libm::sqrt(6.0 / (rows + cols) as f64), rng)
}

pub const TENSOR_COUNT: usize = 23;

macro_rules! tensor_list {
    ($s:ident, $($b:tt)+) => {
        [
            ("item_table", $($b)+ $s.item),
            ("category_table", $($b)+ $s.category),
            ("behavior_table", $($b)+ $s.behavior),
            ("time_table", $($b)+ $s.time),
            ("profile_table", $($b)+ $s.profile),
            ("neighbor_att.w1", $($b)+ $s.neighbor_att.w1),
            ("neighbor_att.w2", $($b)+ $s.neighbor_att.w2),
            ("center_att.w1", $($b)+ $s.center_att.w1),
            ("center_att.w2", $($b)+ $s.center_att.w2),
            ("scene_att.w1", $($b)+ $s.scene_att.w1),
            ("scene_att.w2", $($b)+ $s.scene_att.w2),
            ("gru.w_z", $($b)+ $s.gru.w_z),
            ("gru.w_r", $($b)+ $s.gru.w_r),
            ("gru.w_h", $($b)+ $s.gru.w_h),
            ("gate.w1", $($b)+ $s.gate.w1),
            ("gate.w2", $($b)+ $s.gate.w2),
            ("fusion.weight", $($b)+ $s.fusion_weight),
            ("dnn.w1", $($b)+ $s.dnn.w1),
            ("dnn.b1", $($b)+ $s.dnn.b1),
            ("dnn.w2", $($b)+ $s.dnn.w2),
            ("dnn.b2", $($b)+ $s.dnn.b2),
            ("dnn.w_out", $($b)+ $s.dnn.w_out),
            ("dnn.b_out", $($b)+ $s.dnn.b_out),
        ]
    };
}

impl ParameterSet {
    pub fn new(
        dims: ModelDims,
        fusion: Fusion,
        item_rows: usize,
        category_rows: usize,
        user_rows: usize,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        if item_rows == 0 || category_rows == 0 || user_rows == 0 {
            return Err(Error::InvalidConfig("embedding tables need at least one row".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let (d, a, p, g) = (dims.d, dims.attention_hidden, dims.profile_dim, dims.gate_hidden);
        let mut u = |r, c| Matrix::uniform(r, c, INIT_BOUND, rng);
        let item = u(item_rows, d);
        let category = u(category_rows, d);
        let behavior = u(BEHAVIOR_ROWS, d);
        let time = u(TIME_BUCKETS, d);
        let profile = u(user_rows, p);
        let mut att = || Attention {
            w1: u(1, a),
            w2: u(a, 2 * d),
        };
        let (neighbor_att, center_att, scene_att) = (att(), att(), att());
        let gru = Gru {
            w_z: u(d, 2 * d),
            w_r: u(d, 2 * d),
            w_h: u(d, 2 * d),
        };
        let gate = Gate {
            w1: u(d, g),
            w2: u(g, p),
        };
        let input = dims.dnn_input(fusion);
        let dnn = Dnn {
            w1: glorot(dims.hidden1, input, rng),
            b1: Matrix::zeros(dims.hidden1, 1),
            w2: glorot(dims.hidden2, dims.hidden1, rng),
            b2: Matrix::zeros(dims.hidden2, 1),
            w_out: glorot(1, dims.hidden2, rng),
            b_out: Matrix::zeros(1, 1),
        };
        Ok(Self {
            dims,
            fusion,
            item,
            category,
            behavior,
            time,
            profile,
            neighbor_att,
            center_att,
            scene_att,
            gru,
            gate,
            fusion_weight: Matrix::from_vec(1, 1, alloc::vec![0.5]),
            dnn,
        })
    }

    pub fn for_vocab(dims: ModelDims, fusion: Fusion, vocab: &Vocab, seed: u64) -> Result<Self> {
        Self::new(
            dims,
            fusion,
            vocab.item_rows(),
            vocab.category_rows(),
            vocab.user_rows(),
            seed,
        )
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, m| m.fill(0.0));
        z
    }

    pub fn tensors(&self) -> [(&'static str, &Matrix); TENSOR_COUNT] {
        tensor_list!(self, &)
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); TENSOR_COUNT] {
        tensor_list!(self, &mut)
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&'static str, &mut Matrix)) {
        for (n, m) in self.tensors_mut() {
            f(n, m);
        }
    }

    pub fn tensor_names(&self) -> Vec<&'static str> {
        self.tensors().iter().map(|(n, _)| *n).collect()
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors().into_iter().find(|(n, _)| *n == name).map(|(_, m)| m)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.tensors_mut().into_iter().find(|(n, _)| *n == name).map(|(_, m)| m)
    }

    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, m)| !m.is_finite())
            .map(|(n, _)| n)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    /// `self += alpha · other`, shapes assumed equal.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        for ((_, m), (_, o)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in m.data.iter_mut().zip(&o.data) {
                *a += alpha * b;
            }
        }
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        for (n, m) in self.tensors() {
            s.push_str(&alloc::format!("{n}: {}x{}\n", m.rows, m.cols));
        }
        s
    }
}
