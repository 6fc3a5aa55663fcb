//! Whole-model forward and backward passes for one example.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{time_bucket, Fusion, ParameterSet, BEHAVIOR_ROWS, TIME_BUCKETS};
use super::units::{
    attention_pool, attention_pool_backward, ctr_backward, ctr_forward, ctr_replay, gate_backward,
    gate_fusion, gru_backward, gru_sequence, scene_representation, DnnCache, GateCache, GruCache,
    InterestVectors, PoolCache,
};
use crate::corpus::BehaviorType;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Table rows of one behavior node. Out-of-range rows read row 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeInput {
    pub item: usize,
    pub category: usize,
    pub behavior: usize,
    pub bucket: usize,
}

impl NodeInput {
    /// `now` must not precede `timestamp`.
    pub fn new(
        item: usize,
        category: usize,
        behavior: BehaviorType,
        timestamp: u64,
        now: u64,
    ) -> Result<Self> {
        if timestamp > now {
            return Err(Error::OutOfRange {
                what: "event timestamp",
                value: timestamp as usize,
                min: 0,
                max: now as usize,
            });
        }
        Ok(Self {
            item,
            category,
            behavior: super::params::behavior_row(behavior),
            bucket: time_bucket(now - timestamp),
        })
    }
}

/// One labeled request in table-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub user: usize,
    pub target_item: usize,
    pub target_category: usize,
    /// Retrieved long-term nodes, one nonempty group per selected center.
    pub groups: Vec<Vec<NodeInput>>,
    /// Short-term events per scene in time order; empty scenes are skipped.
    pub scenes: Vec<Vec<NodeInput>>,
    pub label: bool,
}

fn row(m: &Matrix, r: usize) -> &[f64] {
    m.row(if r < m.rows { r } else { 0 })
}

fn row_mut(m: &mut Matrix, r: usize) -> &mut [f64] {
    let r = if r < m.rows { r } else { 0 };
    m.row_mut(r)
}

fn add_to_row(m: &mut Matrix, r: usize, g: &[f64]) {
    for (a, b) in row_mut(m, r).iter_mut().zip(g) {
        *a += b;
    }
}

/// Item embedding plus category, behavior and recency embeddings.
pub fn sideinfo_embed(params: &ParameterSet, node: &NodeInput) -> Vec<f64> {
    let (a, b) = (row(&params.item, node.item), row(&params.category, node.category));
    let c = row(&params.behavior, node.behavior.min(BEHAVIOR_ROWS - 1));
    let t = row(&params.time, node.bucket.min(TIME_BUCKETS - 1));
    (0..a.len()).map(|i| a[i] + b[i] + c[i] + t[i]).collect()
}

fn sideinfo_backward(grads: &mut ParameterSet, node: &NodeInput, g: &[f64]) {
    add_to_row(&mut grads.item, node.item, g);
    add_to_row(&mut grads.category, node.category, g);
    add_to_row(&mut grads.behavior, node.behavior.min(BEHAVIOR_ROWS - 1), g);
    add_to_row(&mut grads.time, node.bucket.min(TIME_BUCKETS - 1), g);
}

pub fn target_embed(params: &ParameterSet, item: usize, category: usize) -> Vec<f64> {
    let (a, b) = (row(&params.item, item), row(&params.category, category));
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[derive(Debug, Clone, PartialEq)]
struct SceneTrace {
    inputs: Vec<Vec<f64>>,
    nodes: Vec<NodeInput>,
    gru: GruCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    example: Example,
    target: Vec<f64>,
    group_inputs: Vec<Vec<Vec<f64>>>,
    group_pools: Vec<PoolCache>,
    center_pool: Option<PoolCache>,
    scenes: Vec<SceneTrace>,
    scene_reps: Vec<Vec<f64>>,
    scene_pool: Option<PoolCache>,
    gate: Option<GateCache>,
    profile: Vec<f64>,
    pub interests: InterestVectors,
    pub fused: Vec<f64>,
    pub dnn: DnnCache,
    /// No long-term input reached the model; the long vector is zero.
    pub long_missing: bool,
    /// Every scene was empty; the short vector is zero.
    pub short_missing: bool,
}

impl ForwardTrace {
    pub fn probability(&self) -> f64 {
        self.dnn.probability
    }

    pub fn logit(&self) -> f64 {
        self.dnn.logit
    }

    pub fn loss(&self) -> f64 {
        bce_with_logit(self.dnn.logit, self.example.label)
    }

    /// Recomputes the output from the cached network input.
    pub fn replay(&self, params: &ParameterSet) -> f64 {
        ctr_replay(&self.dnn, &params.dnn)
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn example(&self) -> &Example {
        &self.example
    }

    pub fn gate(&self) -> Option<&[f64]> {
        self.gate.as_ref().map(|g| g.gate.as_slice())
    }
}

/// Binary cross-entropy from a logit.
pub fn bce_with_logit(logit: f64, label: bool) -> f64 {
    let softplus = logit.max(0.0) + libm::log1p(libm::exp(-logit.abs()));
    if label {
        softplus - logit
    } else {
        softplus
    }
}

pub fn forward(params: &ParameterSet, ex: &Example) -> Result<ForwardTrace> {
    forward_detached(params, ex, None)
}

pub fn predict(params: &ParameterSet, ex: &Example) -> Result<f64> {
    forward(params, ex).map(|t| t.probability())
}

/// Forward pass where the gate reads `gate_profile` instead of the user's
/// profile row when given. Used to check that the gate path is cut.
pub fn forward_detached(
    params: &ParameterSet,
    ex: &Example,
    gate_profile: Option<&[f64]>,
) -> Result<ForwardTrace> {
    let d = params.dims.d;
    let fusion = params.fusion;
    let target = target_embed(params, ex.target_item, ex.target_category);

    let mut group_inputs = Vec::new();
    let mut group_pools = Vec::new();
    let mut center_pool = None;
    let mut long = vec![0.0; d];
    if fusion.uses_long() && !ex.groups.is_empty() {
        for g in &ex.groups {
            let inputs: Vec<Vec<f64>> = g.iter().map(|n| sideinfo_embed(params, n)).collect();
            group_pools.push(attention_pool(&inputs, &target, &params.neighbor_att, "neighbor list")?);
            group_inputs.push(inputs);
        }
        let centers: Vec<Vec<f64>> = group_pools.iter().map(|p| p.output.clone()).collect();
        let pool = attention_pool(&centers, &target, &params.center_att, "center list")?;
        long.clone_from(&pool.output);
        center_pool = Some(pool);
    }
    let long_missing = fusion.uses_long() && center_pool.is_none();

    let mut scenes = Vec::new();
    let mut scene_reps = Vec::new();
    let mut scene_pool = None;
    let mut short = vec![0.0; d];
    if fusion.uses_short() {
        for nodes in ex.scenes.iter().filter(|s| !s.is_empty()) {
            let inputs: Vec<Vec<f64>> = nodes.iter().map(|n| sideinfo_embed(params, n)).collect();
            let gru = gru_sequence(&inputs, &params.gru)?;
            scene_reps.push(scene_representation(gru.states())?);
            scenes.push(SceneTrace {
                inputs,
                nodes: nodes.clone(),
                gru,
            });
        }
        if !scene_reps.is_empty() {
            let pool = attention_pool(&scene_reps, &target, &params.scene_att, "scene list")?;
            short.clone_from(&pool.output);
            scene_pool = Some(pool);
        }
    }
    let short_missing = fusion.uses_short() && scene_pool.is_none();

    let profile = row(&params.profile, ex.user).to_vec();
    let mut gate = None;
    let fused = match fusion {
        Fusion::ShortOnly => short.clone(),
        Fusion::LongOnly => long.clone(),
        Fusion::Add => long.iter().zip(&short).map(|(a, b)| a + b).collect(),
        Fusion::Weight => {
            let w = params.fusion_weight.data[0];
            long.iter().zip(&short).map(|(a, b)| w * a + (1.0 - w) * b).collect()
        }
        Fusion::Multiply => long.iter().zip(&short).map(|(a, b)| a * b).collect(),
        Fusion::Concat => long.iter().chain(&short).copied().collect(),
        Fusion::Gate => {
            let p = gate_profile.unwrap_or(&profile);
            let (iv, cache) = gate_fusion(p, &long, &short, &params.gate)?;
            gate = Some(cache);
            iv.user
        }
    };
    let interests = InterestVectors {
        long,
        short,
        user: fused.clone(),
    };

    let mut input = Vec::with_capacity(params.dims.dnn_input(fusion));
    input.extend_from_slice(&fused);
    input.extend_from_slice(&target);
    input.extend_from_slice(&profile);
    let dnn = ctr_forward(&input, &params.dnn)?;

    Ok(ForwardTrace {
        example: ex.clone(),
        target,
        group_inputs,
        group_pools,
        center_pool,
        scenes,
        scene_reps,
        scene_pool,
        gate,
        profile,
        interests,
        fused,
        dnn,
        long_missing,
        short_missing,
    })
}

/// Accumulates `scale · ∂loss/∂θ` into `grads`.
pub fn backward(params: &ParameterSet, trace: &ForwardTrace, grads: &mut ParameterSet, scale: f64) {
    let y = if trace.example.label { 1.0 } else { 0.0 };
    backward_from_logit(params, trace, grads, scale * (trace.dnn.probability - y));
}

/// Backpropagates an arbitrary gradient on the output logit.
pub fn backward_from_logit(params: &ParameterSet, trace: &ForwardTrace, grads: &mut ParameterSet, d_logit: f64) {
    let d = params.dims.d;
    let ex = &trace.example;
    let d_in = ctr_backward(&trace.dnn, &params.dnn, &mut grads.dnn, d_logit);
    let f = params.fusion.output_dim(d);
    let (d_fused, rest) = d_in.split_at(f);
    let (d_target_dnn, d_profile) = rest.split_at(d);
    let mut d_target = d_target_dnn.to_vec();
    add_to_row(&mut grads.profile, ex.user, d_profile);

    let (long, short) = (&trace.interests.long, &trace.interests.short);
    let (d_long, d_short): (Vec<f64>, Vec<f64>) = match params.fusion {
        Fusion::ShortOnly => (vec![0.0; d], d_fused.to_vec()),
        Fusion::LongOnly => (d_fused.to_vec(), vec![0.0; d]),
        Fusion::Add => (d_fused.to_vec(), d_fused.to_vec()),
        Fusion::Weight => {
            let w = params.fusion_weight.data[0];
            grads.fusion_weight.data[0] += (0..d).map(|i| d_fused[i] * (long[i] - short[i])).sum::<f64>();
            (
                d_fused.iter().map(|g| w * g).collect(),
                d_fused.iter().map(|g| (1.0 - w) * g).collect(),
            )
        }
        Fusion::Multiply => (
            (0..d).map(|i| d_fused[i] * short[i]).collect(),
            (0..d).map(|i| d_fused[i] * long[i]).collect(),
        ),
        Fusion::Concat => (d_fused[..d].to_vec(), d_fused[d..].to_vec()),
        Fusion::Gate => {
            let cache = trace.gate.as_ref().expect("gate cache");
            gate_backward(cache, &trace.interests, &params.gate, &mut grads.gate, d_fused)
        }
    };

    if let Some(pool) = &trace.center_pool {
        let centers: Vec<Vec<f64>> = trace.group_pools.iter().map(|p| p.output.clone()).collect();
        let (d_centers, d_t) =
            attention_pool_backward(&centers, pool, &params.center_att, &mut grads.center_att, &d_long);
        add(&mut d_target, &d_t);
        for (((inputs, gp), d_c), nodes) in trace
            .group_inputs
            .iter()
            .zip(&trace.group_pools)
            .zip(&d_centers)
            .zip(&ex.groups)
        {
            let (d_nodes, d_t) =
                attention_pool_backward(inputs, gp, &params.neighbor_att, &mut grads.neighbor_att, d_c);
            add(&mut d_target, &d_t);
            for (n, g) in nodes.iter().zip(&d_nodes) {
                sideinfo_backward(grads, n, g);
            }
        }
    }

    if let Some(pool) = &trace.scene_pool {
        let (d_reps, d_t) =
            attention_pool_backward(&trace.scene_reps, pool, &params.scene_att, &mut grads.scene_att, &d_short);
        add(&mut d_target, &d_t);
        for (scene, d_rep) in trace.scenes.iter().zip(&d_reps) {
            let d_states = vec![d_rep.clone(); scene.inputs.len()];
            let d_inputs = gru_backward(&scene.gru, &params.gru, &mut grads.gru, &d_states);
            for (n, g) in scene.nodes.iter().zip(&d_inputs) {
                sideinfo_backward(grads, n, g);
            }
        }
    }

    add_to_row(&mut grads.item, ex.target_item, &d_target);
    add_to_row(&mut grads.category, ex.target_category, &d_target);
}

fn add(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}
