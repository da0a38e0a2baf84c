use std::collections::BTreeMap;

use thiserror::Error;

use super::{NodeId, ProviderId};
use crate::arch::{data_encoder, intermediate_encoder, NODE_QUBITS};
use crate::data::Dataset;
use crate::qsim::{expectations_z, simulate_noisy, simulate_pure, Circuit, NoiseSpec, QsimError, Shots};
use crate::seed;

/// Evaluation sets are capped at this many leading samples.
pub const EVAL_CAP: usize = 300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("node {node} on {provider}: {message}")]
    Transport {
        node: NodeId,
        provider: ProviderId,
        message: String,
    },
    #[error("no endpoint for provider {0}")]
    UnknownProvider(ProviderId),
    #[error(transparent)]
    Simulation(#[from] QsimError),
    #[error("node {node} returned {got} expectations, expected {expected}")]
    BadResult { node: NodeId, expected: usize, got: usize },
}

/// One circuit execution request for a node.
#[derive(Debug, Clone, Copy)]
pub struct NodeRequest<'a> {
    pub node: NodeId,
    pub provider: &'a ProviderId,
    pub circuit: &'a Circuit,
    pub seed: u64,
}

/// Somewhere node circuits can run: a local simulator or a provider fleet.
pub trait NodeExecutor: Send + Sync {
    /// Per-qubit ⟨Z⟩ of the request's circuit.
    fn execute(&self, request: NodeRequest<'_>) -> Result<Vec<f64>, ExecError>;

    /// Whether independent nodes of one sample should be dispatched in parallel.
    fn concurrent(&self) -> bool {
        false
    }
}

/// Noiseless exact simulation; ignores providers and seeds.
#[derive(Debug, Clone, Copy, Default)]
pub struct Exact;

impl NodeExecutor for Exact {
    fn execute(&self, request: NodeRequest<'_>) -> Result<Vec<f64>, ExecError> {
        Ok(expectations_z(&simulate_pure(request.circuit)))
    }
}

/// Every node on one local noisy device.
#[derive(Debug, Clone, Copy)]
pub struct LocalDevice {
    pub noise: NoiseSpec,
    pub shots: Shots,
}

impl NodeExecutor for LocalDevice {
    fn execute(&self, request: NodeRequest<'_>) -> Result<Vec<f64>, ExecError> {
        Ok(simulate_noisy(request.circuit, &self.noise, self.shots, request.seed)?)
    }
}

impl<T: NodeExecutor + ?Sized> NodeExecutor for &T {
    fn execute(&self, request: NodeRequest<'_>) -> Result<Vec<f64>, ExecError> {
        (**self).execute(request)
    }

    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeInput {
    /// The raw sample through the data encoder.
    Data,
    /// Output of an upstream node through the intermediate encoder.
    Node(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub node: NodeId,
    pub provider: ProviderId,
    pub inputs: Vec<NodeInput>,
    /// The node's own (template) circuit, run after the input encoders.
    pub body: Circuit,
}

/// Encoder prefix for one node given its inputs, in input order.
pub fn encode_inputs(
    inputs: &[NodeInput],
    features: &[f64],
    outputs: &BTreeMap<NodeId, Vec<f64>>,
) -> Circuit {
    let mut prefix = Circuit::new(NODE_QUBITS);
    for input in inputs {
        let piece = match input {
            NodeInput::Data => data_encoder(features),
            NodeInput::Node(c) => intermediate_encoder(&[&outputs[c]]),
        }
        .expect("plan inputs are well-formed");
        prefix.append(&piece).expect("all node circuits are 4 qubits wide");
    }
    prefix
}

/// Ordered node executions plus the nodes whose outputs form the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    steps: Vec<PlanStep>,
    outputs: Vec<NodeId>,
    n_classes: usize,
}

impl Plan {
    pub fn new(steps: Vec<PlanStep>, outputs: Vec<NodeId>, n_classes: usize) -> Plan {
        debug_assert!(outputs.iter().all(|o| steps.iter().any(|s| s.node == *o)));
        Plan { steps, outputs, n_classes }
    }

    pub fn steps(&self) -> &[PlanStep] {
        &self.steps
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn with_n_classes(mut self, n_classes: usize) -> Plan {
        self.n_classes = n_classes;
        self
    }

    /// Groups steps into waves whose members only depend on earlier waves.
    pub fn waves(&self) -> Vec<Vec<&PlanStep>> {
        let mut depth: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut waves: Vec<Vec<&PlanStep>> = Vec::new();
        for step in &self.steps {
            let d = step
                .inputs
                .iter()
                .filter_map(|i| match i {
                    NodeInput::Node(c) => Some(depth[c] + 1),
                    NodeInput::Data => None,
                })
                .max()
                .unwrap_or(0);
            depth.insert(step.node, d);
            if waves.len() <= d {
                waves.resize_with(d + 1, Vec::new);
            }
            waves[d].push(step);
        }
        waves
    }

    /// Full circuit of `step` for this sample.
    pub fn node_circuit(
        step: &PlanStep,
        features: &[f64],
        outputs: &BTreeMap<NodeId, Vec<f64>>,
    ) -> Circuit {
        let mut circuit = encode_inputs(&step.inputs, features, outputs);
        circuit.append(&step.body).expect("4-qubit body");
        circuit
    }

    /// Seed handed to the executor for `node` when the sample seed is `sample_seed`.
    pub fn node_seed(sample_seed: u64, node: NodeId) -> u64 {
        seed::derive(sample_seed, node.0 as u64)
    }

    /// Runs every step and returns each node's output. Executors that ask
    /// for it get each wave of independent steps concurrently.
    pub fn run_nodes(
        &self,
        features: &[f64],
        exec: &dyn NodeExecutor,
        sample_seed: u64,
    ) -> Result<BTreeMap<NodeId, Vec<f64>>, ExecError> {
        let mut outputs = BTreeMap::new();
        let run = |step: &PlanStep, outputs: &BTreeMap<NodeId, Vec<f64>>| {
            let circuit = Self::node_circuit(step, features, outputs);
            let z = exec.execute(NodeRequest {
                node: step.node,
                provider: &step.provider,
                circuit: &circuit,
                seed: Self::node_seed(sample_seed, step.node),
            })?;
            check_output(step.node, z)
        };
        if !exec.concurrent() {
            for step in &self.steps {
                let z = run(step, &outputs)?;
                outputs.insert(step.node, z);
            }
            return Ok(outputs);
        }
        for wave in self.waves() {
            let results: Vec<Result<Vec<f64>, ExecError>> = if wave.len() == 1 {
                vec![run(wave[0], &outputs)]
            } else {
                let done = &outputs;
                std::thread::scope(|s| {
                    let handles: Vec<_> = wave.iter().map(|step| s.spawn(move || run(step, done))).collect();
                    handles.into_iter().map(|h| h.join().expect("node worker panicked")).collect()
                })
            };
            for (step, z) in wave.iter().zip(results) {
                outputs.insert(step.node, z?);
            }
        }
        Ok(outputs)
    }

    /// Elementwise mean of the output nodes, truncated to `n_classes`.
    pub fn readout(&self, outputs: &BTreeMap<NodeId, Vec<f64>>) -> Vec<f64> {
        let mut mean = vec![0.0; NODE_QUBITS];
        for o in &self.outputs {
            for (m, v) in mean.iter_mut().zip(&outputs[o]) {
                *m += v;
            }
        }
        let k = self.outputs.len() as f64;
        mean.truncate(self.n_classes);
        mean.into_iter().map(|m| m / k).collect()
    }

    pub fn run(&self, features: &[f64], exec: &dyn NodeExecutor, sample_seed: u64) -> Result<Vec<f64>, ExecError> {
        let outputs = self.run_nodes(features, exec, sample_seed)?;
        Ok(self.readout(&outputs))
    }

    /// Fraction of the first [`EVAL_CAP`] samples whose logit argmax matches the label.
    pub fn accuracy(&self, dataset: &Dataset, exec: &dyn NodeExecutor, seed: u64) -> Result<f64, ExecError> {
        let n = dataset.len().min(EVAL_CAP);
        if n == 0 {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for i in 0..n {
            let logits = self.run(dataset.features(i), exec, sample_seed(seed, i))?;
            if argmax(&logits) == dataset.label(i) {
                correct += 1;
            }
        }
        Ok(correct as f64 / n as f64)
    }
}

/// Seed for sample `index` of an evaluation seeded with `seed`.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    seed::derive(seed, index as u64)
}

/// Clamps tiny overshoots of `[−1, 1]` from floating-point error.
pub(crate) fn check_output(node: NodeId, z: Vec<f64>) -> Result<Vec<f64>, ExecError> {
    if z.len() != NODE_QUBITS {
        return Err(ExecError::BadResult {
            node,
            expected: NODE_QUBITS,
            got: z.len(),
        });
    }
    Ok(z.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
