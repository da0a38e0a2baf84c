//! Small-circuit quantum simulation.
//!
//! Circuits are plain gate lists over at most [`MAX_QUBITS`] qubits. Basis
//! states use little-endian bit order: qubit `q` is bit `q` of the amplitude
//! index. Everything here is a pure function of its inputs.

mod density;
mod grad;
mod state;

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use density::{simulate_mixed, simulate_noisy, MixedState, NoiseSpec, Shots};
pub use grad::{parameter_shift_grad, shift_jacobian};
pub use state::{expectations_z, simulate_from, simulate_pure, unitary, PureState};

/// Widest circuit the dense simulators accept.
pub const MAX_QUBITS: usize = 8;

/// Shift used by the parameter-shift rule for generators with eigenvalues ±1/2.
pub const SHIFT: f64 = FRAC_PI_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("shot count must be positive")]
    InvalidShots,
    #[error("observable qubit {index} out of range for {n_qubits} qubits")]
    InvalidObservable { index: usize, n_qubits: usize },
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    H,
    X,
    Rx,
    Ry,
    Rz,
    Cx,
    Cz,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Cx | GateKind::Cz => 2,
            _ => 1,
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz => 1,
            _ => 0,
        }
    }

    pub fn is_rotation(self) -> bool {
        self.n_params() == 1
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::Cx => "cx",
            GateKind::Cz => "cz",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One gate application. Field names follow the compact wire form
/// `{"g": "ry", "q": [0], "p": [1.5708]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    #[serde(rename = "g")]
    pub kind: GateKind,
    #[serde(rename = "q")]
    pub qubits: Vec<usize>,
    #[serde(rename = "p", default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
}

impl GateOp {
    pub fn h(q: usize) -> Self {
        Self::fixed(GateKind::H, vec![q])
    }

    pub fn x(q: usize) -> Self {
        Self::fixed(GateKind::X, vec![q])
    }

    pub fn rx(q: usize, theta: f64) -> Self {
        Self::rotation(GateKind::Rx, q, theta)
    }

    pub fn ry(q: usize, theta: f64) -> Self {
        Self::rotation(GateKind::Ry, q, theta)
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Self::rotation(GateKind::Rz, q, theta)
    }

    pub fn cx(control: usize, target: usize) -> Self {
        Self::fixed(GateKind::Cx, vec![control, target])
    }

    pub fn cz(a: usize, b: usize) -> Self {
        Self::fixed(GateKind::Cz, vec![a, b])
    }

    pub fn rotation(kind: GateKind, q: usize, theta: f64) -> Self {
        debug_assert!(kind.is_rotation());
        GateOp {
            kind,
            qubits: vec![q],
            params: vec![theta],
        }
    }

    fn fixed(kind: GateKind, qubits: Vec<usize>) -> Self {
        GateOp {
            kind,
            qubits,
            params: Vec::new(),
        }
    }

    /// Rotation angle, if this is a rotation gate.
    pub fn angle(&self) -> Option<f64> {
        self.kind.is_rotation().then(|| self.params[0])
    }

    pub fn validate(&self, n_qubits: usize) -> Result<(), QsimError> {
        let bad = |msg: String| Err(QsimError::InvalidCircuit(msg));
        if self.qubits.len() != self.kind.arity() {
            return bad(format!(
                "{} expects {} qubit(s), got {}",
                self.kind,
                self.kind.arity(),
                self.qubits.len()
            ));
        }
        if self.params.len() != self.kind.n_params() {
            return bad(format!(
                "{} expects {} parameter(s), got {}",
                self.kind,
                self.kind.n_params(),
                self.params.len()
            ));
        }
        if let Some(&q) = self.qubits.iter().find(|&&q| q >= n_qubits) {
            return bad(format!("{} acts on qubit {q} of a {n_qubits}-qubit circuit", self.kind));
        }
        if self.qubits.len() == 2 && self.qubits[0] == self.qubits[1] {
            return bad(format!("{} repeats qubit {}", self.kind, self.qubits[0]));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return bad(format!("{} has a non-finite angle", self.kind));
        }
        Ok(())
    }

    /// The inverse gate: rotations negate their angle, the rest are self-inverse.
    pub fn inverse(&self) -> GateOp {
        GateOp {
            kind: self.kind,
            qubits: self.qubits.clone(),
            params: self.params.iter().map(|p| -p).collect(),
        }
    }
}

/// Ordered gate list on `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCircuit")]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
}

#[derive(Deserialize)]
struct RawCircuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
}

impl TryFrom<RawCircuit> for Circuit {
    type Error = QsimError;

    fn try_from(raw: RawCircuit) -> Result<Self, Self::Error> {
        Circuit::from_ops(raw.n_qubits, raw.ops)
    }
}

impl Circuit {
    /// Empty circuit. Panics on a width of zero or above [`MAX_QUBITS`].
    pub fn new(n_qubits: usize) -> Self {
        assert!(
            (1..=MAX_QUBITS).contains(&n_qubits),
            "circuit width {n_qubits} outside 1..={MAX_QUBITS}"
        );
        Circuit {
            n_qubits,
            ops: Vec::new(),
        }
    }

    pub fn from_ops(n_qubits: usize, ops: Vec<GateOp>) -> Result<Self, QsimError> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(QsimError::InvalidCircuit(format!(
                "width {n_qubits} outside 1..={MAX_QUBITS}"
            )));
        }
        for op in &ops {
            op.validate(n_qubits)?;
        }
        Ok(Circuit { n_qubits, ops })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn push(&mut self, op: GateOp) -> Result<(), QsimError> {
        op.validate(self.n_qubits)?;
        self.ops.push(op);
        Ok(())
    }

    /// Appends `other` after `self` (other's gates act last).
    pub fn append(&mut self, other: &Circuit) -> Result<(), QsimError> {
        self.check_width(other)?;
        self.ops.extend(other.ops.iter().cloned());
        Ok(())
    }

    /// `first` followed by `then`.
    pub fn compose(first: &Circuit, then: &Circuit) -> Result<Circuit, QsimError> {
        let mut out = first.clone();
        out.append(then)?;
        Ok(out)
    }

    pub fn check_width(&self, other: &Circuit) -> Result<(), QsimError> {
        if self.n_qubits != other.n_qubits {
            return Err(QsimError::InvalidCircuit(format!(
                "width mismatch: {} vs {}",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(())
    }

    /// Indices (into `ops`) of the rotation gates, i.e. the trainable angles.
    pub fn rotation_indices(&self) -> Vec<usize> {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, op)| op.kind.is_rotation())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_rotations(&self) -> usize {
        self.ops.iter().filter(|op| op.kind.is_rotation()).count()
    }

    /// Copy with the angle of the rotation at op index `op_index` shifted by `delta`.
    pub fn with_shifted_angle(&self, op_index: usize, delta: f64) -> Circuit {
        let mut out = self.clone();
        let op = &mut out.ops[op_index];
        debug_assert!(op.kind.is_rotation());
        op.params[0] += delta;
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("circuit serializes")
    }
}

/// Reverses the gate order and inverts every gate, so that running
/// `circuit` then `invert(circuit)` is the identity.
pub fn invert(circuit: &Circuit) -> Circuit {
    Circuit {
        n_qubits: circuit.n_qubits,
        ops: circuit.ops.iter().rev().map(GateOp::inverse).collect(),
    }
}
