//! Circuit-inversion model theft, as seen from one provider's job log.
//!
//! A provider that also queries the service with data `Z` of its choosing
//! receives `D(Z)` followed by the model circuit. Running `D(Z)⁻¹` first
//! cancels the encoder and leaves the model. Under distribution each
//! provider only holds the node circuits it was sent, so the best it can
//! rebuild is its own security submodels.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{data_encoder, ArchError, NODE_QUBITS};
use crate::data::Dataset;
use crate::fleet::{FleetConfig, FleetError, LogEntry, Loopback, Orchestrator};
use crate::graph::{self, ExecError, GraphError, LocalDevice, Model, NodeId, NodeInput, Plan, PlanStep, ProviderId};
use crate::qsim::{invert, unitary, Circuit, GateKind, GateOp, QsimError, Shots};
use crate::security::{evaluate_submodel_on, find_security_submodels, submodel_plan};

/// Widest circuit [`unitary_fidelity`] will build a dense unitary for.
pub const MAX_FIDELITY_QUBITS: usize = 6;

#[derive(Debug, Error)]
pub enum RedteamError {
    #[error(transparent)]
    Circuit(#[from] QsimError),
    #[error(transparent)]
    Encoding(#[from] ArchError),
    #[error("job {job_id}: {reason}")]
    Log { job_id: String, reason: String },
    #[error("no logged circuit for node {0}")]
    MissingNode(NodeId),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
}

/// Drops adjacent gate pairs that undo each other: same kind and qubits,
/// angles exactly opposite. Repeats until nothing cancels.
pub fn cancel_inverse_pairs(circuit: &Circuit) -> Circuit {
    let mut out: Vec<GateOp> = Vec::with_capacity(circuit.len());
    for op in circuit.ops() {
        if out.last().is_some_and(|prev| undoes(prev, op)) {
            out.pop();
        } else {
            out.push(op.clone());
        }
    }
    Circuit::from_ops(circuit.n_qubits(), out).expect("subset of a valid circuit")
}

fn undoes(a: &GateOp, b: &GateOp) -> bool {
    if a.kind != b.kind || a.qubits != b.qubits {
        return false;
    }
    match a.kind {
        GateKind::H | GateKind::X | GateKind::Cx | GateKind::Cz => true,
        _ => a.params.iter().zip(&b.params).all(|(x, y)| x + y == 0.0),
    }
}

/// Recovers the model circuit from a logged `probe`-then-model circuit by
/// running `probe⁻¹` first and cancelling the resulting identity pairs.
pub fn steal(compiled: &Circuit, probe: &Circuit) -> Result<Circuit, QsimError> {
    compiled.check_width(probe)?;
    let joined = Circuit::compose(&invert(probe), compiled)?;
    Ok(cancel_inverse_pairs(&joined))
}

/// `|tr(U_a† U_b)| / 2^n`.
pub fn unitary_fidelity(a: &Circuit, b: &Circuit) -> Result<f64, QsimError> {
    a.check_width(b)?;
    let n = a.n_qubits();
    if n > MAX_FIDELITY_QUBITS {
        return Err(QsimError::InvalidCircuit(format!(
            "fidelity needs dense unitaries; {n} qubits exceeds {MAX_FIDELITY_QUBITS}"
        )));
    }
    let (ua, ub) = (unitary(a), unitary(b));
    let d = 1usize << n;
    let tr: Complex64 = ua.iter().zip(&ub).map(|(x, y)| x.conj() * y).sum();
    Ok(tr.norm() / d as f64)
}

/// Node id carried in an orchestrator job id (`n{node}-{counter}`).
pub fn job_node(job_id: &str) -> Option<NodeId> {
    let rest = job_id.strip_prefix('n')?;
    let (node, counter) = rest.split_once('-')?;
    counter.parse::<u64>().ok()?;
    node.parse().ok().map(NodeId)
}

/// Encoder prefix the attacker can reconstruct for a node: its own probe
/// through the data encoder, and the stacked `RY` layers of intermediate
/// inputs read straight off the logged circuit.
fn known_prefix(entry: &LogEntry, inputs: &[NodeInput], probe: &[f64]) -> Result<Circuit, RedteamError> {
    let bad = |reason: String| RedteamError::Log {
        job_id: entry.job_id.clone(),
        reason,
    };
    let mut prefix = Circuit::new(NODE_QUBITS);
    for input in inputs {
        match input {
            NodeInput::Data => prefix.append(&data_encoder(probe)?)?,
            NodeInput::Node(_) => {
                let at = prefix.len();
                let layer = entry
                    .circuit
                    .ops()
                    .get(at..at + NODE_QUBITS)
                    .ok_or_else(|| bad("circuit shorter than its encoder".into()))?;
                for (q, op) in layer.iter().enumerate() {
                    if op.kind != GateKind::Ry || op.qubits != [q] {
                        return Err(bad(format!("gate {} is not an intermediate encoder gate", at + q)));
                    }
                    prefix.push(op.clone())?;
                }
            }
        }
    }
    Ok(prefix)
}

/// Node bodies recovered from one provider's log. `layout` gives the input
/// layout of each node the attacker wants; the most recent logged job per
/// node is used and must have been produced from `probe`.
pub fn recover_bodies(
    log: &[LogEntry],
    layout: &BTreeMap<NodeId, Vec<NodeInput>>,
    probe: &[f64],
) -> Result<BTreeMap<NodeId, Circuit>, RedteamError> {
    let mut latest: BTreeMap<NodeId, &LogEntry> = BTreeMap::new();
    for entry in log {
        if let Some(node) = job_node(&entry.job_id) {
            latest.insert(node, entry);
        }
    }
    layout
        .iter()
        .map(|(&node, inputs)| {
            let entry = latest.get(&node).ok_or(RedteamError::MissingNode(node))?;
            let prefix = known_prefix(entry, inputs, probe)?;
            let body = steal(&entry.circuit, &prefix)?;
            Ok((node, body))
        })
        .collect()
}

/// What one provider extracts for one of its submodels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodelTheft {
    pub provider: ProviderId,
    pub nodes: Vec<NodeId>,
    /// Smallest unitary fidelity between a recovered node body and the true one.
    pub min_fidelity: f64,
    /// Accuracy of the rebuilt submodel on the provider's own device.
    pub recovered_acc: f64,
    /// The security module's accuracy for the same submodel and device.
    pub reference_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub probe: Vec<f64>,
    pub thefts: Vec<SubmodelTheft>,
}

impl AttackReport {
    pub fn max_acc_gap(&self) -> f64 {
        self.thefts
            .iter()
            .map(|t| (t.recovered_acc - t.reference_acc).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_fidelity(&self) -> f64 {
        self.thefts.iter().map(|t| t.min_fidelity).fold(1.0, f64::min)
    }
}

/// Replaces the step bodies of `plan` with `bodies`.
pub fn with_bodies(plan: &Plan, bodies: &BTreeMap<NodeId, Circuit>) -> Result<Plan, RedteamError> {
    let steps = plan
        .steps()
        .iter()
        .map(|s| {
            let body = bodies.get(&s.node).ok_or(RedteamError::MissingNode(s.node))?;
            Ok(PlanStep {
                body: body.clone(),
                ..s.clone()
            })
        })
        .collect::<Result<Vec<_>, RedteamError>>()?;
    Ok(Plan::new(steps, plan.outputs().to_vec(), plan.n_classes()))
}

/// Each provider's view of one query with `probe`, turned into its
/// submodels and scored on its own device against the security module's
/// numbers for the same submodels.
///
/// `logs` are the providers' job logs after the query; use
/// [`query_loopback`] to produce them in-process.
pub fn attack_from_logs(
    model: &Model,
    fleet: &FleetConfig,
    logs: &BTreeMap<ProviderId, Vec<LogEntry>>,
    probe: &[f64],
    testset: &Dataset,
    shots: Shots,
    seed: u64,
) -> Result<AttackReport, RedteamError> {
    let truth: BTreeMap<NodeId, Circuit> = model.plan().steps().iter().map(|s| (s.node, s.body.clone())).collect();
    let mut thefts = Vec::new();
    for sm in find_security_submodels(model).iter() {
        let plan = submodel_plan(sm, model).with_n_classes(testset.n_classes());
        let layout = plan.steps().iter().map(|s| (s.node, model_inputs(model, s))).collect();
        let empty = Vec::new();
        let log = logs.get(&sm.provider).unwrap_or(&empty);
        let bodies = recover_bodies(log, &layout, probe)?;
        let mut min_fidelity: f64 = 1.0;
        for (node, body) in &bodies {
            min_fidelity = min_fidelity.min(unitary_fidelity(body, &truth[node])?);
        }
        let device = LocalDevice {
            noise: fleet.provider(&sm.provider)?.default_device().noise,
            shots,
        };
        let stolen = with_bodies(&plan, &bodies)?;
        let recovered_acc = stolen.accuracy(testset, &device, crate::seed::derive(seed, 1))?;
        let reference_acc = evaluate_submodel_on(sm, model, testset, &device, crate::seed::derive(seed, 2))?;
        thefts.push(SubmodelTheft {
            provider: sm.provider.clone(),
            nodes: sm.nodes.clone(),
            min_fidelity,
            recovered_acc,
            reference_acc,
        });
    }
    Ok(AttackReport {
        probe: probe.to_vec(),
        thefts,
    })
}

// Inputs as the node actually received them in the full model, which is
// what its logged circuit carries.
fn model_inputs(model: &Model, step: &PlanStep) -> Vec<NodeInput> {
    if model.backbone().is_leaf(step.node) {
        vec![NodeInput::Data]
    } else {
        model.live_children(step.node).into_iter().map(NodeInput::Node).collect()
    }
}

/// Runs one forward pass of `model` on `probe` over an in-process fleet and
/// returns every provider's job log.
pub fn query_loopback(
    model: &Model,
    fleet: &FleetConfig,
    probe: &[f64],
    shots: Shots,
    seed: u64,
) -> Result<BTreeMap<ProviderId, Vec<LogEntry>>, RedteamError> {
    let orchestrator = Orchestrator::new(Loopback::new(fleet)?, fleet.clone(), shots)?;
    graph::forward(model, probe, &orchestrator, seed)?;
    Ok(orchestrator
        .transport()
        .services()
        .map(|(id, s)| (id.clone(), s.log()))
        .collect())
}
