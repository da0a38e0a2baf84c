//! Node architecture templates and the two angle encoders.
//!
//! Every computing node works on [`NODE_QUBITS`] qubits. Raw samples enter
//! through [`data_encoder`]; outputs of upstream nodes enter through
//! [`intermediate_encoder`], one RY layer per upstream node.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::{Circuit, GateKind, GateOp};

pub const NODE_QUBITS: usize = 4;
/// Features consumed by the data encoder.
pub const DATA_FEATURES: usize = 16;

const DATA_AXES: [GateKind; 4] = [GateKind::Ry, GateKind::Rz, GateKind::Rx, GateKind::Ry];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("template {template} takes {expected} parameters, got {got}")]
    ParamCount { template: TemplateId, expected: usize, got: usize },
    #[error("unknown template id {0}")]
    UnknownTemplate(u8),
}

/// Index into the template catalog; `0` is the empty template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TemplateId(u8);

impl TemplateId {
    pub const EMPTY: TemplateId = TemplateId(0);
    pub const COUNT: usize = 6;

    pub fn new(id: u8) -> Result<Self, ArchError> {
        if usize::from(id) < Self::COUNT {
            Ok(TemplateId(id))
        } else {
            Err(ArchError::UnknownTemplate(id))
        }
    }

    pub fn all() -> impl Iterator<Item = TemplateId> {
        (0..Self::COUNT as u8).map(TemplateId)
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn n_params(self) -> usize {
        match self.0 {
            0 => 0,
            1 => 4,
            2 | 3 => 8,
            4 => 16,
            5 => 12,
            _ => unreachable!(),
        }
    }
}

impl TryFrom<u8> for TemplateId {
    type Error = ArchError;

    fn try_from(id: u8) -> Result<Self, Self::Error> {
        TemplateId::new(id)
    }
}

impl From<TemplateId> for u8 {
    fn from(t: TemplateId) -> u8 {
        t.0
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// Catalog entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchTemplate {
    pub id: TemplateId,
    pub n_params: usize,
    pub description: &'static str,
}

pub fn catalog() -> Vec<ArchTemplate> {
    const DESCRIPTIONS: [&str; TemplateId::COUNT] = [
        "empty",
        "RY layer, CX ring",
        "RX layer, RZ layer, CX ring",
        "RY layer, CZ ring, RY layer",
        "2 x (RY layer, RZ layer, CX ring)",
        "RX layer, RY layer, RZ layer, CX ring",
    ];
    TemplateId::all()
        .map(|id| ArchTemplate {
            id,
            n_params: id.n_params(),
            description: DESCRIPTIONS[id.index()],
        })
        .collect()
}

struct Builder<'a> {
    circuit: Circuit,
    params: &'a [f64],
}

impl Builder<'_> {
    fn layer(&mut self, kind: GateKind) {
        let (now, rest) = self.params.split_at(NODE_QUBITS);
        for (q, &theta) in now.iter().enumerate() {
            self.push(GateOp::rotation(kind, q, theta));
        }
        self.params = rest;
    }

    fn ring(&mut self, kind: GateKind) {
        for q in 0..NODE_QUBITS {
            let next = (q + 1) % NODE_QUBITS;
            let op = match kind {
                GateKind::Cx => GateOp::cx(q, next),
                _ => GateOp::cz(q, next),
            };
            self.push(op);
        }
    }

    fn push(&mut self, op: GateOp) {
        self.circuit.push(op).expect("template gates are valid on 4 qubits");
    }
}

/// Builds template `id` with the given angles, consumed layer by layer
/// (qubit-minor).
pub fn instantiate_template(id: TemplateId, params: &[f64]) -> Result<Circuit, ArchError> {
    if params.len() != id.n_params() {
        return Err(ArchError::ParamCount {
            template: id,
            expected: id.n_params(),
            got: params.len(),
        });
    }
    let mut b = Builder {
        circuit: Circuit::new(NODE_QUBITS),
        params,
    };
    use GateKind::*;
    match id.0 {
        0 => {}
        1 => {
            b.layer(Ry);
            b.ring(Cx);
        }
        2 => {
            b.layer(Rx);
            b.layer(Rz);
            b.ring(Cx);
        }
        3 => {
            b.layer(Ry);
            b.ring(Cz);
            b.layer(Ry);
        }
        4 => {
            for _ in 0..2 {
                b.layer(Ry);
                b.layer(Rz);
                b.ring(Cx);
            }
        }
        5 => {
            b.layer(Rx);
            b.layer(Ry);
            b.layer(Rz);
            b.ring(Cx);
        }
        _ => unreachable!(),
    }
    debug_assert!(b.params.is_empty());
    Ok(b.circuit)
}

/// Four rotation layers with axes RY, RZ, RX, RY; feature `4·l + q` drives
/// layer `l` on qubit `q`.
pub fn data_encoder(features: &[f64]) -> Result<Circuit, ArchError> {
    if features.len() != DATA_FEATURES {
        return Err(ArchError::Encoding(format!(
            "data encoder takes {DATA_FEATURES} features, got {}",
            features.len()
        )));
    }
    if let Some(bad) = features.iter().find(|f| !f.is_finite()) {
        return Err(ArchError::Encoding(format!("non-finite feature {bad}")));
    }
    let mut c = Circuit::new(NODE_QUBITS);
    for (layer, axis) in DATA_AXES.iter().enumerate() {
        for q in 0..NODE_QUBITS {
            c.push(GateOp::rotation(*axis, q, features[layer * NODE_QUBITS + q]))
                .expect("encoder gates are valid");
        }
    }
    Ok(c)
}

/// One `RY(π·o_q)` layer per upstream output, stacked in the given order.
/// Gate `4·p + q` of the result encodes qubit `q` of output `p`.
pub fn intermediate_encoder<V: AsRef<[f64]>>(parent_outputs: &[V]) -> Result<Circuit, ArchError> {
    let mut c = Circuit::new(NODE_QUBITS);
    for out in parent_outputs {
        let out = out.as_ref();
        if out.len() != NODE_QUBITS {
            return Err(ArchError::Encoding(format!(
                "intermediate output has {} entries, expected {NODE_QUBITS}",
                out.len()
            )));
        }
        for (q, &o) in out.iter().enumerate() {
            if !(-1.0..=1.0).contains(&o) {
                return Err(ArchError::Encoding(format!("intermediate value {o} outside [-1, 1]")));
            }
            c.push(GateOp::ry(q, PI * o)).expect("encoder gates are valid");
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{expectations_z, simulate_pure};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn z(c: &Circuit) -> Vec<f64> {
        expectations_z(&simulate_pure(c))
    }

    /// Dense 16x16 product of the encoder layers, built from explicit
    /// Kronecker products rather than the simulator's bit kernels.
    fn dense_encoder_expectations(features: &[f64]) -> Vec<f64> {
        type M = Vec<Vec<Complex64>>;
        let rot = |axis: usize, t: f64| -> M {
            let (s, c) = (t / 2.0).sin_cos();
            let (re, im) = (|x: f64| Complex64::new(x, 0.0), |x: f64| Complex64::new(0.0, x));
            match axis {
                0 => vec![vec![re(c), im(-s)], vec![im(-s), re(c)]],
                1 => vec![vec![re(c), re(-s)], vec![re(s), re(c)]],
                _ => vec![
                    vec![Complex64::from_polar(1.0, -t / 2.0), re(0.0)],
                    vec![re(0.0), Complex64::from_polar(1.0, t / 2.0)],
                ],
            }
        };
        let kron = |a: &M, b: &M| -> M {
            let (n, m) = (a.len(), b.len());
            let mut out = vec![vec![Complex64::new(0.0, 0.0); n * m]; n * m];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..m {
                        for l in 0..m {
                            out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                        }
                    }
                }
            }
            out
        };
        let axes = [1usize, 2, 0, 1];
        let mut psi = vec![Complex64::new(0.0, 0.0); 16];
        psi[0] = Complex64::new(1.0, 0.0);
        for (l, &axis) in axes.iter().enumerate() {
            // Qubit 3 is the most significant factor.
            let mut layer = rot(axis, features[4 * l + 3]);
            for q in (0..3).rev() {
                layer = kron(&layer, &rot(axis, features[4 * l + q]));
            }
            psi = (0..16).map(|i| (0..16).map(|j| layer[i][j] * psi[j]).sum()).collect();
        }
        (0..4)
            .map(|q| {
                psi.iter()
                    .enumerate()
                    .map(|(i, a)| if i >> q & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn catalog_shape() {
        let cat = catalog();
        assert_eq!(cat.len(), 6);
        let counts: Vec<usize> = cat.iter().map(|t| t.n_params).collect();
        assert_eq!(counts, vec![0, 4, 8, 8, 16, 12]);
    }

    #[test]
    fn templates_have_declared_rotation_counts() {
        for id in TemplateId::all() {
            let c = instantiate_template(id, &vec![0.3; id.n_params()]).unwrap();
            assert_eq!(c.n_qubits(), NODE_QUBITS);
            assert_eq!(c.n_rotations(), id.n_params());
        }
        assert!(instantiate_template(TemplateId::EMPTY, &[]).unwrap().is_empty());
    }

    #[test]
    fn template_one_at_zero_is_a_cx_ring() {
        let c = instantiate_template(TemplateId::new(1).unwrap(), &[0.0; 4]).unwrap();
        let entangling: Vec<_> = c.ops().iter().filter(|op| !op.kind.is_rotation()).collect();
        assert_eq!(entangling.len(), 4);
        assert!(entangling.iter().all(|op| op.kind == GateKind::Cx));
        assert_eq!(z(&c), vec![1.0; 4]);
    }

    #[test]
    fn template_errors() {
        assert_eq!(TemplateId::new(6), Err(ArchError::UnknownTemplate(6)));
        assert!(matches!(
            instantiate_template(TemplateId::new(2).unwrap(), &[0.0; 3]),
            Err(ArchError::ParamCount { expected: 8, got: 3, .. })
        ));
    }

    #[test]
    fn data_encoder_examples() {
        assert_eq!(z(&data_encoder(&[0.0; 16]).unwrap()), vec![1.0; 4]);
        let mut f = [0.0; 16];
        f[0] = PI;
        assert!((z(&data_encoder(&f).unwrap())[0] + 1.0).abs() < 1e-10);
        assert!(data_encoder(&[0.0; 15]).is_err());
    }

    #[test]
    fn data_encoder_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..10 {
            let f: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..PI)).collect();
            let got = z(&data_encoder(&f).unwrap());
            let want = dense_encoder_expectations(&f);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn data_encoder_is_injective_on_angles() {
        let a: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
        let mut b = a.clone();
        b[7] += 1e-9;
        assert_ne!(data_encoder(&a).unwrap(), data_encoder(&b).unwrap());
    }

    #[test]
    fn intermediate_encoder_examples() {
        assert_eq!(z(&intermediate_encoder(&[[0.0; 4]]).unwrap()), vec![1.0; 4]);

        let two = intermediate_encoder(&[[0.1, 0.2, 0.3, 0.4], [0.5, 0.6, 0.7, 0.8]]).unwrap();
        assert_eq!(two.len(), 8);
        assert!(two.ops().iter().all(|op| op.kind == GateKind::Ry));
        assert!((two.ops()[0].params[0] - 0.1 * PI).abs() < 1e-15);
        assert!((two.ops()[4].params[0] - 0.5 * PI).abs() < 1e-15);

        let got = z(&intermediate_encoder(&[[1.0, -1.0, 0.0, 0.5]]).unwrap());
        for (a, b) in got.iter().zip([-1.0, -1.0, 1.0, 0.0]) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(intermediate_encoder(&[[1.5, 0.0, 0.0, 0.0]]).is_err());
        assert!(intermediate_encoder(&[vec![0.0; 3]]).is_err());
    }

    #[test]
    fn template_id_serde() {
        assert_eq!(serde_json::to_string(&TemplateId::new(3).unwrap()).unwrap(), "3");
        assert!(serde_json::from_str::<TemplateId>("7").is_err());
    }
}
