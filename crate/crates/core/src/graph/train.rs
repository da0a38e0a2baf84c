use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::{encode_inputs, NodeInput, Plan};
use super::{GraphError, Model, NodeId};
use crate::arch::NODE_QUBITS;
use crate::data::Dataset;
use crate::qsim::{expectations_z, shift_jacobian, simulate_pure};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Cosine decay from the initial rate to zero over the epoch budget.
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    /// Train on only the first `n` samples when set.
    pub max_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            lr: 5e-3,
            weight_decay: 1e-4,
            schedule: Schedule::Cosine,
            max_samples: None,
        }
    }
}

impl TrainConfig {
    /// Reduced budget for smoke runs: 5 epochs on 100 samples.
    pub fn fast() -> Self {
        TrainConfig {
            epochs: 5,
            max_samples: Some(100),
            ..Self::default()
        }
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Cosine => {
                let t = epoch as f64 / self.epochs.max(1) as f64;
                self.lr * 0.5 * (1.0 + (PI * t).cos())
            }
        }
    }
}

/// Softmax cross-entropy of `logits` against `label`, and its gradient.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() + max - logits[label];
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, e)| e / total - if i == label { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

struct NodeTrace {
    /// d output / d body angle, one row per template parameter.
    body: Vec<Vec<f64>>,
    /// d output / d encoder angle, per `Node` input, one row per qubit.
    inputs: Vec<(NodeId, Vec<Vec<f64>>)>,
}

/// Loss and gradient (over [`Model::flat_params`]) for one sample under
/// exact simulation.
///
/// Each node's local Jacobians come from the parameter-shift rule: with
/// respect to its template angles, and with respect to the `π·o` angles of
/// its intermediate encoders. The chain rule then runs backwards over the
/// plan.
pub fn sample_gradient(model: &Model, plan: &Plan, features: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut outputs: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    let mut traces = Vec::with_capacity(plan.steps().len());
    for step in plan.steps() {
        let mut circuit = encode_inputs(&step.inputs, features, &outputs);
        let prefix_len = circuit.len();
        circuit.append(&step.body).expect("4-qubit body");

        let mut wanted = Vec::new();
        let mut encoder_slots = Vec::new();
        let mut pos = 0;
        for input in &step.inputs {
            match input {
                NodeInput::Data => pos += crate::arch::DATA_FEATURES,
                NodeInput::Node(c) => {
                    encoder_slots.push((*c, wanted.len()));
                    wanted.extend(pos..pos + NODE_QUBITS);
                    pos += NODE_QUBITS;
                }
            }
        }
        let body_start = wanted.len();
        wanted.extend(step.body.rotation_indices().into_iter().map(|i| i + prefix_len));

        let mut rows = shift_jacobian(&circuit, &wanted);
        let body = rows.split_off(body_start);
        let inputs = encoder_slots
            .into_iter()
            .map(|(c, at)| (c, rows[at..at + NODE_QUBITS].to_vec()))
            .collect();
        traces.push(NodeTrace { body, inputs });

        let z = expectations_z(&simulate_pure(&circuit));
        outputs.insert(step.node, z.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect());
    }

    let logits = plan.readout(&outputs);
    let (loss, dlogits) = cross_entropy(&logits, label);

    let mut upstream: BTreeMap<NodeId, [f64; NODE_QUBITS]> = BTreeMap::new();
    let share = 1.0 / plan.outputs().len() as f64;
    for o in plan.outputs() {
        let u = upstream.entry(*o).or_default();
        for (i, d) in dlogits.iter().enumerate() {
            u[i] += d * share;
        }
    }

    let offsets = model.param_offsets();
    let mut grad = vec![0.0; model.n_params()];
    for (step, trace) in plan.steps().iter().zip(&traces).rev() {
        let Some(u) = upstream.get(&step.node).copied() else {
            continue;
        };
        let dot = |row: &[f64]| row.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        let base = offsets[&step.node];
        for (k, row) in trace.body.iter().enumerate() {
            grad[base + k] += dot(row);
        }
        for (child, rows) in &trace.inputs {
            let cu = upstream.entry(*child).or_default();
            for (q, row) in rows.iter().enumerate() {
                cu[q] += PI * dot(row);
            }
        }
    }
    (loss, grad)
}

/// Mean cross-entropy over the dataset under exact simulation.
pub fn mean_loss(model: &Model, dataset: &Dataset) -> f64 {
    let plan = model.plan().with_n_classes(dataset.n_classes());
    let total: f64 = (0..dataset.len())
        .map(|i| {
            let logits = plan
                .run(dataset.features(i), &super::Exact, 0)
                .expect("exact execution cannot fail");
            cross_entropy(&logits, dataset.label(i)).0
        })
        .sum();
    total / dataset.len().max(1) as f64
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One step with L2 weight decay folded into the gradient.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i] + weight_decay * params[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Per-epoch training log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Mean mini-batch loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
    pub epoch_lrs: Vec<f64>,
}

/// Minimizes softmax cross-entropy with Adam and a cosine schedule,
/// simulating exactly and without noise. Returns a trained copy.
pub fn train(model: &Model, trainset: &Dataset, config: &TrainConfig, seed: u64) -> Result<Model, GraphError> {
    train_logged(model, trainset, config, seed).map(|(m, _)| m)
}

pub fn train_logged(
    model: &Model,
    trainset: &Dataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<(Model, TrainLog), GraphError> {
    let data = match config.max_samples {
        Some(n) => trainset.take(n),
        None => trainset.clone(),
    };
    if data.is_empty() {
        return Err(GraphError::EmptyDataset);
    }
    let mut model = model.clone();
    model.set_n_classes(data.n_classes())?;

    let mut params = model.flat_params();
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch_size = config.batch_size.max(1);
    let mut log = TrainLog {
        epoch_losses: Vec::with_capacity(config.epochs),
        epoch_lrs: Vec::with_capacity(config.epochs),
    };

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive(seed, epoch as u64)));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            model.set_flat_params(&params);
            let plan = model.plan();
            let mut grad = vec![0.0; params.len()];
            for &i in batch {
                let (loss, g) = sample_gradient(&model, &plan, data.features(i), data.label(i));
                epoch_loss += loss;
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grad, lr, config.weight_decay);
        }
        log.epoch_losses.push(epoch_loss / data.len() as f64);
        log.epoch_lrs.push(lr);
    }
    model.set_flat_params(&params);
    Ok((model, log))
}
