use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{backward, forward, Example};
use super::params::ParameterSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// SGD, with heavy-ball momentum when `momentum > 0`.
    #[default]
    Sgd,
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8; `momentum` is ignored.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// 0 gives plain SGD.
    pub momentum: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 8,
            batch: 32,
            seed: 0,
            momentum: 0.0,
            optimizer: Optimizer::Sgd,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

struct Adam {
    m: ParameterSet,
    v: ParameterSet,
    step: i32,
}

impl Adam {
    fn new(params: &ParameterSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ParameterSet, grads: &ParameterSet, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(ADAM_BETA1, self.step as f64);
        let c2 = 1.0 - libm::pow(ADAM_BETA2, self.step as f64);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = ADAM_BETA1 * m.data[i] + (1.0 - ADAM_BETA1) * gi;
                v.data[i] = ADAM_BETA2 * v.data[i] + (1.0 - ADAM_BETA2) * gi * gi;
                p.data[i] -= lr * (m.data[i] / c1) / (libm::sqrt(v.data[i] / c2) + ADAM_EPSILON);
            }
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch size must be nonzero".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch, measured before each batch's update.
    pub losses: Vec<f64>,
}

/// Mean binary cross-entropy of `data` and its gradient.
pub fn batch_gradient(params: &ParameterSet, data: &[&Example], grads: &mut ParameterSet) -> Result<f64> {
    let scale = 1.0 / data.len().max(1) as f64;
    let mut loss = 0.0;
    for ex in data {
        let trace = forward(params, ex)?;
        loss += trace.loss();
        backward(params, &trace, grads, scale);
    }
    Ok(loss * scale)
}

fn diagnose(params: &ParameterSet, grads: &ParameterSet, epoch: usize, batch: usize) -> Error {
    let tensor = params
        .first_non_finite()
        .map(String::from)
        .or_else(|| grads.first_non_finite().map(|n| alloc::format!("gradient of {n}")))
        .unwrap_or_else(|| String::from("loss"));
    Error::NonFinite {
        tensor,
        epoch,
        batch,
    }
}

/// Mini-batch gradient descent on binary cross-entropy, deterministic under
/// `cfg.seed`.
pub fn train(params: &mut ParameterSet, data: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = params.zeros_like();
    let mut velocity = params.zeros_like();
    let mut adam = (cfg.optimizer == Optimizer::Adam).then(|| Adam::new(params));
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            grads.for_each_mut(|_, m| m.fill(0.0));
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let loss = batch_gradient(params, &batch, &mut grads)?;
            if !loss.is_finite() || grads.first_non_finite().is_some() {
                return Err(diagnose(params, &grads, epoch, b));
            }
            total += loss * chunk.len() as f64;
            if let Some(adam) = adam.as_mut() {
                adam.update(params, &grads, cfg.learning_rate);
            } else if cfg.momentum > 0.0 {
                velocity.for_each_mut(|_, m| m.data.iter_mut().for_each(|v| *v *= cfg.momentum));
                velocity.add_scaled(1.0, &grads);
                params.add_scaled(-cfg.learning_rate, &velocity);
            } else {
                params.add_scaled(-cfg.learning_rate, &grads);
            }
            if params.first_non_finite().is_some() {
                return Err(diagnose(params, &grads, epoch, b));
            }
        }
        report.losses.push(total / data.len() as f64);
    }
    Ok(report)
}

pub fn predict_all(params: &ParameterSet, data: &[Example]) -> Result<Vec<f64>> {
    data.iter().map(|ex| super::net::predict(params, ex)).collect()
}
