//! Unsupervised GraphSAGE on the global item graph.
//!
//! Two mean-aggregator layers over learnable input features:
//!
//! ```text
//! h1(v) = relu(W1 [x(v) ; mean x(S1(v))])
//! h2(v) = W2 [h1(v) ; mean h1(S2(v))]
//! z(v)  = h2(v) / |h2(v)|
//! ```
//!
//! `S1`, `S2` are uniform neighbor samples of at most `sample_cap` nodes,
//! redrawn every epoch. The loss pulls each node toward one sampled neighbor
//! and pushes it away from `negatives` uniformly drawn nodes:
//! `-ln σ(τ z_v·z_u) - Σ ln σ(-τ z_v·z_n)`. Full-batch Adam, single-threaded.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::ItemGraph;
use crate::linalg::Matrix;
use crate::math::{dot, sigmoid};

#[derive(Debug, Clone, PartialEq)]
pub struct SageConfig {
    pub dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub seed: u64,
    pub sample_cap: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    /// Score scale τ applied to cosine similarities inside the loss.
    pub temperature_scale: f64,
}

impl SageConfig {
    pub fn new(dim: usize, epochs: usize, seed: u64) -> Self {
        Self {
            dim,
            hidden: dim.max(8),
            epochs,
            seed,
            sample_cap: 10,
            negatives: 5,
            learning_rate: 0.01,
            temperature_scale: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SageReport {
    /// Mean loss per epoch, measured on the forward pass before that epoch's update.
    pub losses: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - libm::pow(B1, self.t as f64);
        let c2 = 1.0 - libm::pow(B2, self.t as f64);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / c1) / (libm::sqrt(self.v[i] / c2) + 1e-8);
        }
    }
}

fn log_sigmoid(x: f64) -> f64 {
    // ln σ(x) = -softplus(-x)
    let y = -x;
    -(y.max(0.0) + libm::log1p(libm::exp(-y.abs())))
}

struct Layers {
    x: Matrix,
    w1: Matrix,
    w2: Matrix,
}

struct Pass {
    s1: Vec<Vec<usize>>,
    s2: Vec<Vec<usize>>,
    c1: Vec<Vec<f64>>,
    a1: Vec<Vec<f64>>,
    h1: Vec<Vec<f64>>,
    c2: Vec<Vec<f64>>,
    norms: Vec<f64>,
    z: Vec<Vec<f64>>,
}

fn sample_neighbors(adj: &[Vec<usize>], cap: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    adj.iter()
        .map(|nbrs| {
            if nbrs.len() <= cap {
                nbrs.clone()
            } else {
                let mut picked: Vec<usize> =
                    sample(rng, nbrs.len(), cap).into_iter().map(|i| nbrs[i]).collect();
                picked.sort_unstable();
                picked
            }
        })
        .collect()
}

fn mean_of<'a>(rows: &[usize], m: impl Fn(usize) -> &'a [f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    if rows.is_empty() {
        return out;
    }
    for &r in rows {
        for (o, x) in out.iter_mut().zip(m(r)) {
            *o += x;
        }
    }
    let n = rows.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

impl Layers {
    fn forward(&self, adj: &[Vec<usize>], cap: usize, rng: &mut ChaCha8Rng) -> Pass {
        let n = adj.len();
        let f = self.x.cols;
        let s1 = sample_neighbors(adj, cap, rng);
        let s2 = sample_neighbors(adj, cap, rng);
        let mut c1 = Vec::with_capacity(n);
        let mut a1 = Vec::with_capacity(n);
        let mut h1 = Vec::with_capacity(n);
        for v in 0..n {
            let m = mean_of(&s1[v], |r| self.x.row(r), f);
            let c = concat(self.x.row(v), &m);
            let a = self.w1.matvec(&c);
            h1.push(a.iter().map(|&t| t.max(0.0)).collect::<Vec<f64>>());
            a1.push(a);
            c1.push(c);
        }
        let h = self.w1.rows;
        let mut c2 = Vec::with_capacity(n);
        let mut norms = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for v in 0..n {
            let m = mean_of(&s2[v], |r| h1[r].as_slice(), h);
            let c = concat(&h1[v], &m);
            let out = self.w2.matvec(&c);
            let norm = libm::sqrt(dot(&out, &out) + 1e-12);
            z.push(out.iter().map(|o| o / norm).collect());
            norms.push(norm);
            c2.push(c);
        }
        Pass {
            s1,
            s2,
            c1,
            a1,
            h1,
            c2,
            norms,
            z,
        }
    }
}

/// Trains unit-norm item embeddings on `graph`. Deterministic for a fixed seed.
pub fn train_graph_embeddings(
    graph: &ItemGraph,
    cfg: &SageConfig,
) -> Result<(EmbeddingTable, SageReport)> {
    if graph.is_empty() {
        return Err(Error::Empty("graph"));
    }
    if cfg.dim < 2 {
        return Err(Error::InvalidConfig("embedding dim must be at least 2".into()));
    }
    let ids: Vec<_> = graph.nodes().collect();
    let n = ids.len();
    let adj: Vec<Vec<usize>> = ids
        .iter()
        .map(|&v| {
            graph
                .neighbors(v)
                .map(|(u, _)| ids.binary_search(&u).expect("neighbor is a node"))
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f = cfg.dim;
    let h = cfg.hidden;
    let glorot = |fan_in: usize, fan_out: usize| libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let mut layers = Layers {
        x: Matrix::uniform(n, f, 1.0, &mut rng),
        w1: Matrix::uniform(h, 2 * f, glorot(2 * f, h), &mut rng),
        w2: Matrix::uniform(cfg.dim, 2 * h, glorot(2 * h, cfg.dim), &mut rng),
    };
    let mut opt_x = Adam::new(layers.x.len());
    let mut opt_w1 = Adam::new(layers.w1.len());
    let mut opt_w2 = Adam::new(layers.w2.len());
    let tau = cfg.temperature_scale;
    let anchors: Vec<usize> = (0..n).filter(|&v| !adj[v].is_empty()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let pass = layers.forward(&adj, cfg.sample_cap, &mut rng);
        let mut dz = vec![vec![0.0; cfg.dim]; n];
        let mut loss = 0.0;
        let scale = 1.0 / anchors.len().max(1) as f64;
        for &v in &anchors {
            let u = adj[v][rng.gen_range(0..adj[v].len())];
            let s = dot(&pass.z[v], &pass.z[u]);
            loss -= log_sigmoid(tau * s);
            let g = -tau * (1.0 - sigmoid(tau * s)) * scale;
            for k in 0..cfg.dim {
                dz[v][k] += g * pass.z[u][k];
                dz[u][k] += g * pass.z[v][k];
            }
            for _ in 0..cfg.negatives {
                let mut neg = rng.gen_range(0..n);
                if n > 1 {
                    while neg == v {
                        neg = rng.gen_range(0..n);
                    }
                }
                let s = dot(&pass.z[v], &pass.z[neg]);
                loss -= log_sigmoid(-tau * s);
                let g = tau * sigmoid(tau * s) * scale;
                for k in 0..cfg.dim {
                    dz[v][k] += g * pass.z[neg][k];
                    dz[neg][k] += g * pass.z[v][k];
                }
            }
        }
        losses.push(loss * scale);

        let mut g_x = layers.x.zeros_like();
        let mut g_w1 = layers.w1.zeros_like();
        let mut g_w2 = layers.w2.zeros_like();
        let mut dh1 = vec![vec![0.0; h]; n];
        for v in 0..n {
            let z = &pass.z[v];
            let proj = dot(z, &dz[v]);
            let dh2: Vec<f64> = dz[v]
                .iter()
                .zip(z)
                .map(|(d, zi)| (d - zi * proj) / pass.norms[v])
                .collect();
            g_w2.add_outer(1.0, &dh2, &pass.c2[v]);
            let mut dc2 = vec![0.0; 2 * h];
            layers.w2.matvec_t_acc(&dh2, &mut dc2);
            for k in 0..h {
                dh1[v][k] += dc2[k];
            }
            let share = 1.0 / pass.s2[v].len().max(1) as f64;
            for &u in &pass.s2[v] {
                for k in 0..h {
                    dh1[u][k] += dc2[h + k] * share;
                }
            }
        }
        for v in 0..n {
            let da1: Vec<f64> = dh1[v]
                .iter()
                .zip(&pass.a1[v])
                .map(|(d, &a)| if a > 0.0 { *d } else { 0.0 })
                .collect();
            debug_assert_eq!(pass.h1[v].len(), h);
            g_w1.add_outer(1.0, &da1, &pass.c1[v]);
            let mut dc1 = vec![0.0; 2 * f];
            layers.w1.matvec_t_acc(&da1, &mut dc1);
            for (g, d) in g_x.row_mut(v).iter_mut().zip(&dc1[..f]) {
                *g += d;
            }
            let share = 1.0 / pass.s1[v].len().max(1) as f64;
            for &u in &pass.s1[v] {
                for (g, d) in g_x.row_mut(u).iter_mut().zip(&dc1[f..]) {
                    *g += d * share;
                }
            }
        }
        opt_x.step(&mut layers.x.data, &g_x.data, cfg.learning_rate);
        opt_w1.step(&mut layers.w1.data, &g_w1.data, cfg.learning_rate);
        opt_w2.step(&mut layers.w2.data, &g_w2.data, cfg.learning_rate);
    }

    // Final embeddings use full neighborhoods rather than a sample.
    let pass = layers.forward(&adj, usize::MAX, &mut rng);
    let mut table = EmbeddingTable::new(cfg.dim);
    for (id, z) in ids.into_iter().zip(pass.z) {
        table.insert(id, z)?;
    }
    Ok((table, SageReport { losses }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ItemId;
    use crate::math::norm;

    fn clique(g: &mut ItemGraph, ids: core::ops::Range<u64>) {
        for a in ids.clone() {
            for b in ids.clone() {
                if a < b {
                    g.add_edge(ItemId(a), ItemId(b), 1);
                }
            }
        }
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (norm(a) * norm(b))
    }

    #[test]
    fn disconnected_cliques_separate() {
        let mut g = ItemGraph::new();
        clique(&mut g, 0..6);
        clique(&mut g, 10..16);
        let (table, report) = train_graph_embeddings(&g, &SageConfig::new(8, 150, 3)).unwrap();
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        let all: Vec<_> = table.iter().collect();
        for (i, (a, va)) in all.iter().enumerate() {
            for (b, vb) in &all[i + 1..] {
                let c = cosine(va, vb);
                if (a.0 < 10) == (b.0 < 10) {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        let (intra, inter) = (intra / ni as f64, inter / nx as f64);
        assert!(intra > inter, "intra {intra} inter {inter}");
        assert!(report.losses.last().unwrap() < &report.losses[0]);
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let mut g = ItemGraph::new();
        g.add_edge(ItemId(1), ItemId(2), 1);
        g.add_edge(ItemId(2), ItemId(3), 1);
        let cfg = SageConfig::new(8, 20, 11);
        let (a, ra) = train_graph_embeddings(&g, &cfg).unwrap();
        let (b, rb) = train_graph_embeddings(&g, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        for (_, v) in a.iter() {
            assert!((norm(v) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_empty_graph_and_tiny_dim() {
        assert_eq!(
            train_graph_embeddings(&ItemGraph::new(), &SageConfig::new(8, 1, 0)).unwrap_err(),
            Error::Empty("graph")
        );
        let mut g = ItemGraph::new();
        g.add_node(ItemId(1));
        assert!(train_graph_embeddings(&g, &SageConfig::new(1, 1, 0)).is_err());
    }
}
