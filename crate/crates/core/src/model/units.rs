//! Differentiable building blocks. Each forward returns a cache; each
//! backward takes the upstream gradient, accumulates parameter gradients
//! into a same-shaped container and returns input gradients.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{Attention, Dnn, Gate, Gru};
use crate::error::{Error, Result};
use crate::math::{dot, sigmoid};

fn check(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
    pub weight: f64,
}

pub fn attention_unit(e_i: &[f64], e_t: &[f64], att: &Attention) -> Result<AttentionCache> {
    check("attention operand", att.w2.cols, e_i.len() + e_t.len())?;
    check("attention target", e_i.len(), e_t.len())?;
    let input = concat(e_i, e_t);
    let hidden = att.w2.matvec(&input);
    let weight = sigmoid(dot(&att.w1.data, &hidden));
    Ok(AttentionCache {
        input,
        hidden,
        weight,
    })
}

/// Returns `(d e_i, d e_t)`.
pub fn attention_backward(
    cache: &AttentionCache,
    att: &Attention,
    grad: &mut Attention,
    d_weight: f64,
) -> (Vec<f64>, Vec<f64>) {
    let w = cache.weight;
    let d_logit = d_weight * w * (1.0 - w);
    grad.w1.add_outer(d_logit, &[1.0], &cache.hidden);
    let d_hidden: Vec<f64> = att.w1.data.iter().map(|v| v * d_logit).collect();
    grad.w2.add_outer(1.0, &d_hidden, &cache.input);
    let mut d_input = vec![0.0; cache.input.len()];
    att.w2.matvec_t_acc(&d_hidden, &mut d_input);
    let d_t = d_input.split_off(d_input.len() / 2);
    (d_input, d_t)
}

/// `Σ σ(att(e_i, e_t)) · e_i`, weights not normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCache {
    pub output: Vec<f64>,
    pub attention: Vec<AttentionCache>,
}

impl PoolCache {
    pub fn weights(&self) -> Vec<f64> {
        self.attention.iter().map(|a| a.weight).collect()
    }
}

pub fn attention_pool(
    operands: &[Vec<f64>],
    target: &[f64],
    att: &Attention,
    what: &'static str,
) -> Result<PoolCache> {
    if operands.is_empty() {
        return Err(Error::Empty(what));
    }
    let mut output = vec![0.0; target.len()];
    let mut attention = Vec::with_capacity(operands.len());
    for e in operands {
        let c = attention_unit(e, target, att)?;
        for (o, x) in output.iter_mut().zip(e) {
            *o += c.weight * x;
        }
        attention.push(c);
    }
    Ok(PoolCache { output, attention })
}

/// Returns `(d operands, d target)`.
pub fn attention_pool_backward(
    operands: &[Vec<f64>],
    cache: &PoolCache,
    att: &Attention,
    grad: &mut Attention,
    d_out: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut d_target = vec![0.0; d_out.len()];
    let mut d_ops = Vec::with_capacity(operands.len());
    for (e, c) in operands.iter().zip(&cache.attention) {
        let (mut d_e, d_t) = attention_backward(c, att, grad, dot(d_out, e));
        for (g, d) in d_e.iter_mut().zip(d_out) {
            *g += c.weight * d;
        }
        add_into(&mut d_target, &d_t);
        d_ops.push(d_e);
    }
    (d_ops, d_target)
}

/// Pooling of a center's neighbors under the neighbor-level attention.
pub fn aggregate_center(neighbors: &[Vec<f64>], target: &[f64], att: &Attention) -> Result<PoolCache> {
    attention_pool(neighbors, target, att, "neighbor list")
}

/// Pooling of center representations under the center-level attention.
pub fn long_term_interest(centers: &[Vec<f64>], target: &[f64], att: &Attention) -> Result<PoolCache> {
    attention_pool(centers, target, att, "center list")
}

/// Pooling of scene representations under the scene-level attention.
pub fn short_term_interest(scenes: &[Vec<f64>], target: &[f64], att: &Attention) -> Result<PoolCache> {
    attention_pool(scenes, target, att, "scene list")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    inputs: Vec<Vec<f64>>,
    /// `states[0]` is the zero initial state; `states[t+1]` follows input `t`.
    states: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    candidate: Vec<Vec<f64>>,
}

impl GruCache {
    /// One state per input, initial state excluded.
    pub fn states(&self) -> &[Vec<f64>] {
        &self.states[1..]
    }
}

pub fn gru_sequence(inputs: &[Vec<f64>], gru: &Gru) -> Result<GruCache> {
    if inputs.is_empty() {
        return Err(Error::Empty("GRU input sequence"));
    }
    let d = gru.w_z.rows;
    let mut cache = GruCache {
        inputs: inputs.to_vec(),
        states: vec![vec![0.0; d]],
        z: Vec::with_capacity(inputs.len()),
        r: Vec::with_capacity(inputs.len()),
        candidate: Vec::with_capacity(inputs.len()),
    };
    for x in inputs {
        check("GRU input", gru.w_z.cols, d + x.len())?;
        let h = cache.states.last().unwrap();
        let c = concat(h, x);
        let z: Vec<f64> = gru.w_z.matvec(&c).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = gru.w_r.matvec(&c).into_iter().map(sigmoid).collect();
        let gated: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = gru
            .w_h
            .matvec(&concat(&gated, x))
            .into_iter()
            .map(libm::tanh)
            .collect();
        let next = (0..d).map(|i| (1.0 - z[i]) * h[i] + z[i] * cand[i]).collect();
        cache.z.push(z);
        cache.r.push(r);
        cache.candidate.push(cand);
        cache.states.push(next);
    }
    Ok(cache)
}

/// `d_states[t]` is the loss gradient on output state `t`; returns input
/// gradients.
pub fn gru_backward(cache: &GruCache, gru: &Gru, grad: &mut Gru, d_states: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = gru.w_z.rows;
    let steps = cache.inputs.len();
    let mut d_inputs = vec![Vec::new(); steps];
    let mut carry = vec![0.0; d];
    for t in (0..steps).rev() {
        let (x, h) = (&cache.inputs[t], &cache.states[t]);
        let (z, r, cand) = (&cache.z[t], &cache.r[t], &cache.candidate[t]);
        let dh: Vec<f64> = carry.iter().zip(&d_states[t]).map(|(a, b)| a + b).collect();

        let mut d_prev: Vec<f64> = (0..d).map(|i| dh[i] * (1.0 - z[i])).collect();
        let d_zpre: Vec<f64> = (0..d)
            .map(|i| dh[i] * (cand[i] - h[i]) * z[i] * (1.0 - z[i]))
            .collect();
        let d_cpre: Vec<f64> = (0..d)
            .map(|i| dh[i] * z[i] * (1.0 - cand[i] * cand[i]))
            .collect();

        let gated: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        grad.w_h.add_outer(1.0, &d_cpre, &concat(&gated, x));
        let mut d_c2 = vec![0.0; 2 * d];
        gru.w_h.matvec_t_acc(&d_cpre, &mut d_c2);
        let d_rpre: Vec<f64> = (0..d)
            .map(|i| d_c2[i] * h[i] * r[i] * (1.0 - r[i]))
            .collect();
        for i in 0..d {
            d_prev[i] += d_c2[i] * r[i];
        }
        let mut d_x = d_c2[d..].to_vec();

        let c = concat(h, x);
        grad.w_z.add_outer(1.0, &d_zpre, &c);
        grad.w_r.add_outer(1.0, &d_rpre, &c);
        let mut d_c = vec![0.0; c.len()];
        gru.w_z.matvec_t_acc(&d_zpre, &mut d_c);
        gru.w_r.matvec_t_acc(&d_rpre, &mut d_c);
        add_into(&mut d_prev, &d_c[..d]);
        add_into(&mut d_x, &d_c[d..]);

        d_inputs[t] = d_x;
        carry = d_prev;
    }
    d_inputs
}

/// Sum of the per-step states of one scene.
pub fn scene_representation(states: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = states.first().ok_or(Error::Empty("scene states"))?;
    let mut out = vec![0.0; first.len()];
    for s in states {
        check("scene state", out.len(), s.len())?;
        add_into(&mut out, s);
    }
    Ok(out)
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| libm::exp(v - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterestVectors {
    pub long: Vec<f64>,
    pub short: Vec<f64>,
    /// `[g ⊙ long, (1 − g) ⊙ short]`
    pub user: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateCache {
    profile: Vec<f64>,
    hidden: Vec<f64>,
    /// Raw gate before normalization.
    pub raw: Vec<f64>,
    pub gate: Vec<f64>,
}

pub fn gate_fusion(
    profile: &[f64],
    long: &[f64],
    short: &[f64],
    gate: &Gate,
) -> Result<(InterestVectors, GateCache)> {
    check("gate profile", gate.w2.cols, profile.len())?;
    check("gate output", gate.w1.rows, long.len())?;
    check("short-term interest", long.len(), short.len())?;
    let hidden: Vec<f64> = gate.w2.matvec(profile).into_iter().map(sigmoid).collect();
    let raw = gate.w1.matvec(&hidden);
    let g = softmax(&raw);
    let mut user: Vec<f64> = g.iter().zip(long).map(|(a, b)| a * b).collect();
    user.extend(g.iter().zip(short).map(|(a, b)| (1.0 - a) * b));
    Ok((
        InterestVectors {
            long: long.to_vec(),
            short: short.to_vec(),
            user,
        },
        GateCache {
            profile: profile.to_vec(),
            hidden,
            raw,
            gate: g,
        },
    ))
}

/// Returns `(d long, d short)`. No gradient is produced for the profile
/// input: the gate treats it as a constant.
pub fn gate_backward(
    cache: &GateCache,
    interests: &InterestVectors,
    gate: &Gate,
    grad: &mut Gate,
    d_user: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = cache.gate.len();
    let g = &cache.gate;
    let (d_a, d_b) = d_user.split_at(d);
    let d_long: Vec<f64> = (0..d).map(|i| d_a[i] * g[i]).collect();
    let d_short: Vec<f64> = (0..d).map(|i| d_b[i] * (1.0 - g[i])).collect();
    let d_g: Vec<f64> = (0..d)
        .map(|i| d_a[i] * interests.long[i] - d_b[i] * interests.short[i])
        .collect();
    let inner = dot(&d_g, g);
    let d_raw: Vec<f64> = (0..d).map(|i| g[i] * (d_g[i] - inner)).collect();
    grad.w1.add_outer(1.0, &d_raw, &cache.hidden);
    let mut d_hidden = vec![0.0; cache.hidden.len()];
    gate.w1.matvec_t_acc(&d_raw, &mut d_hidden);
    let d_pre: Vec<f64> = d_hidden
        .iter()
        .zip(&cache.hidden)
        .map(|(dh, s)| dh * s * (1.0 - s))
        .collect();
    grad.w2.add_outer(1.0, &d_pre, &cache.profile);
    (d_long, d_short)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DnnCache {
    input: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
}

fn relu_layer(w: &super::Matrix, b: &super::Matrix, x: &[f64]) -> Vec<f64> {
    let mut h = w.matvec(x);
    for (v, bias) in h.iter_mut().zip(&b.data) {
        *v = (*v + bias).max(0.0);
    }
    h
}

/// Two ReLU layers and a sigmoid head.
pub fn ctr_forward(input: &[f64], dnn: &Dnn) -> Result<DnnCache> {
    check("DNN input", dnn.w1.cols, input.len())?;
    let h1 = relu_layer(&dnn.w1, &dnn.b1, input);
    let h2 = relu_layer(&dnn.w2, &dnn.b2, &h1);
    let logit = dot(&dnn.w_out.data, &h2) + dnn.b_out.data[0];
    Ok(DnnCache {
        input: input.to_vec(),
        h1,
        h2,
        logit,
        probability: sigmoid(logit),
    })
}

/// Re-evaluates the head from the cached input.
pub fn ctr_replay(cache: &DnnCache, dnn: &Dnn) -> f64 {
    let h1 = relu_layer(&dnn.w1, &dnn.b1, &cache.input);
    let h2 = relu_layer(&dnn.w2, &dnn.b2, &h1);
    sigmoid(dot(&dnn.w_out.data, &h2) + dnn.b_out.data[0])
}

/// Returns the gradient on the DNN input.
pub fn ctr_backward(cache: &DnnCache, dnn: &Dnn, grad: &mut Dnn, d_logit: f64) -> Vec<f64> {
    grad.w_out.add_outer(d_logit, &[1.0], &cache.h2);
    grad.b_out.data[0] += d_logit;
    let d_h2: Vec<f64> = dnn
        .w_out
        .data
        .iter()
        .zip(&cache.h2)
        .map(|(w, h)| if *h > 0.0 { w * d_logit } else { 0.0 })
        .collect();
    grad.w2.add_outer(1.0, &d_h2, &cache.h1);
    add_into(&mut grad.b2.data, &d_h2);
    let mut d_h1 = vec![0.0; cache.h1.len()];
    dnn.w2.matvec_t_acc(&d_h2, &mut d_h1);
    for (g, h) in d_h1.iter_mut().zip(&cache.h1) {
        if *h <= 0.0 {
            *g = 0.0;
        }
    }
    grad.w1.add_outer(1.0, &d_h1, &cache.input);
    add_into(&mut grad.b1.data, &d_h1);
    let mut d_in = vec![0.0; cache.input.len()];
    dnn.w1.matvec_t_acc(&d_h1, &mut d_in);
    d_in
}

/// ReLU activity pattern, used to keep finite differences off the kinks.
pub fn relu_pattern(cache: &DnnCache) -> Vec<bool> {
    cache.h1.iter().chain(&cache.h2).map(|v| *v > 0.0).collect()
}
