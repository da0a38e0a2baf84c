use num_complex::Complex64;

use super::{Circuit, GateKind, GateOp, QsimError};

pub(crate) type Mat2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub(crate) fn gate_matrix(kind: GateKind, params: &[f64]) -> Mat2 {
    let half = |p: &[f64]| p[0] / 2.0;
    match kind {
        GateKind::H => {
            let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            [[s, s], [s, -s]]
        }
        GateKind::X => [[ZERO, ONE], [ONE, ZERO]],
        GateKind::Rx => {
            let (s, c) = half(params).sin_cos();
            let c = Complex64::new(c, 0.0);
            let mis = Complex64::new(0.0, -s);
            [[c, mis], [mis, c]]
        }
        GateKind::Ry => {
            let (s, c) = half(params).sin_cos();
            [
                [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
            ]
        }
        GateKind::Rz => {
            let h = half(params);
            [
                [Complex64::from_polar(1.0, -h), ZERO],
                [ZERO, Complex64::from_polar(1.0, h)],
            ]
        }
        GateKind::Cx | GateKind::Cz => unreachable!("two-qubit gate has no 2x2 matrix"),
    }
}

pub(crate) fn conj_mat(m: &Mat2) -> Mat2 {
    [
        [m[0][0].conj(), m[0][1].conj()],
        [m[1][0].conj(), m[1][1].conj()],
    ]
}

/// Applies a 2x2 matrix to bit `bit` of an amplitude vector.
pub(crate) fn apply_1q(amps: &mut [Complex64], bit: usize, m: &Mat2) {
    let stride = 1usize << bit;
    let len = amps.len();
    let mut base = 0;
    while base < len {
        for i in base..base + stride {
            let j = i + stride;
            let (a, b) = (amps[i], amps[j]);
            amps[i] = m[0][0] * a + m[0][1] * b;
            amps[j] = m[1][0] * a + m[1][1] * b;
        }
        base += stride << 1;
    }
}

pub(crate) fn apply_cx(amps: &mut [Complex64], control: usize, target: usize) {
    let (cm, tm) = (1usize << control, 1usize << target);
    for i in 0..amps.len() {
        if i & cm != 0 && i & tm == 0 {
            amps.swap(i, i | tm);
        }
    }
}

pub(crate) fn apply_cz(amps: &mut [Complex64], a: usize, b: usize) {
    let mask = (1usize << a) | (1usize << b);
    for (i, amp) in amps.iter_mut().enumerate() {
        if i & mask == mask {
            *amp = -*amp;
        }
    }
}

/// Applies `op` to an amplitude vector, offsetting its qubit indices by `offset`
/// bits. With `conjugate`, single-qubit matrices are complex-conjugated.
pub(crate) fn apply_op(amps: &mut [Complex64], op: &GateOp, offset: usize, conjugate: bool) {
    match op.kind {
        GateKind::Cx => apply_cx(amps, op.qubits[0] + offset, op.qubits[1] + offset),
        GateKind::Cz => apply_cz(amps, op.qubits[0] + offset, op.qubits[1] + offset),
        kind => {
            let m = gate_matrix(kind, &op.params);
            let m = if conjugate { conj_mat(&m) } else { m };
            apply_1q(amps, op.qubits[0] + offset, &m);
        }
    }
}

/// State vector of `2^n_qubits` amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl PureState {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        PureState { n_qubits, amps }
    }

    /// Wraps raw amplitudes, normalizing them. Fails on a zero vector or a
    /// length that is not a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, QsimError> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QsimError::InvalidCircuit(format!("state length {len}")));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(QsimError::InvalidCircuit("zero-norm state".into()));
        }
        Ok(PureState {
            n_qubits: len.trailing_zeros() as usize,
            amps: amps.into_iter().map(|a| a / norm).collect(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// |⟨self|other⟩|².
    pub fn fidelity(&self, other: &PureState) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm_sqr()
    }

    pub fn apply(&mut self, circuit: &Circuit) -> Result<(), QsimError> {
        if circuit.n_qubits() != self.n_qubits {
            return Err(QsimError::InvalidCircuit(format!(
                "{}-qubit circuit on a {}-qubit state",
                circuit.n_qubits(),
                self.n_qubits
            )));
        }
        for op in circuit.ops() {
            apply_op(&mut self.amps, op, 0, false);
        }
        Ok(())
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub(crate) fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Runs `circuit` on `|0…0⟩`.
pub fn simulate_pure(circuit: &Circuit) -> PureState {
    let mut state = PureState::zero(circuit.n_qubits());
    state.apply(circuit).expect("width matches by construction");
    state
}

/// Runs `circuit` on an arbitrary initial state.
pub fn simulate_from(initial: &PureState, circuit: &Circuit) -> Result<PureState, QsimError> {
    let mut state = initial.clone();
    state.apply(circuit)?;
    Ok(state)
}

/// Per-qubit ⟨Zᵢ⟩ of a diagonal probability vector.
pub(crate) fn z_from_probabilities(probs: &[f64], n_qubits: usize) -> Vec<f64> {
    let mut z = vec![0.0; n_qubits];
    for (idx, &p) in probs.iter().enumerate() {
        for (q, zq) in z.iter_mut().enumerate() {
            if idx >> q & 1 == 0 {
                *zq += p;
            } else {
                *zq -= p;
            }
        }
    }
    z
}

/// Anything with a computational-basis distribution.
pub trait BasisDistribution {
    fn n_qubits(&self) -> usize;
    fn basis_probabilities(&self) -> Vec<f64>;
}

impl BasisDistribution for PureState {
    fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn basis_probabilities(&self) -> Vec<f64> {
        self.probabilities()
    }
}

/// ⟨Zᵢ⟩ for every qubit of a pure or mixed state.
pub fn expectations_z<S: BasisDistribution + ?Sized>(state: &S) -> Vec<f64> {
    z_from_probabilities(&state.basis_probabilities(), state.n_qubits())
}

/// Dense unitary of `circuit`, row-major `2^n × 2^n`.
pub fn unitary(circuit: &Circuit) -> Vec<Complex64> {
    let dim = 1usize << circuit.n_qubits();
    let mut u = vec![ZERO; dim * dim];
    for col in 0..dim {
        let mut amps = vec![ZERO; dim];
        amps[col] = ONE;
        for op in circuit.ops() {
            apply_op(&mut amps, op, 0, false);
        }
        for (row, a) in amps.into_iter().enumerate() {
            u[row * dim + col] = a;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::super::testutil::random_circuit;
    use super::super::{invert, Circuit, GateOp};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn one_gate(op: GateOp, n: usize) -> Circuit {
        Circuit::from_ops(n, vec![op]).unwrap()
    }

    #[test]
    fn empty_circuit_is_ground_state() {
        let s = simulate_pure(&Circuit::new(2));
        let expect = [ONE, ZERO, ZERO, ZERO];
        assert_eq!(s.amplitudes(), &expect);
    }

    #[test]
    fn x_flips() {
        let s = simulate_pure(&one_gate(GateOp::x(0), 1));
        assert_eq!(s.amplitudes(), &[ZERO, ONE]);
        assert_eq!(expectations_z(&s), vec![-1.0]);
        assert_eq!(expectations_z(&PureState::zero(1)), vec![1.0]);
    }

    #[test]
    fn ry_half_pi_is_unbiased() {
        let s = simulate_pure(&one_gate(GateOp::ry(0, FRAC_PI_2), 1));
        assert!(expectations_z(&s)[0].abs() < 1e-12);
    }

    #[test]
    fn rotation_expectations_match_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let theta = rng.random_range(-PI..PI);
            for op in [GateOp::ry(0, theta), GateOp::rx(0, theta)] {
                let z = expectations_z(&simulate_pure(&one_gate(op, 1)))[0];
                assert!((z - theta.cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bell_pair() {
        let c = Circuit::from_ops(2, vec![GateOp::h(0), GateOp::cx(0, 1)]).unwrap();
        let s = simulate_pure(&c);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitudes()[0].re - r).abs() < 1e-12);
        assert!((s.amplitudes()[3].re - r).abs() < 1e-12);
        assert!(s.amplitudes()[1].norm() < 1e-12);
    }

    #[test]
    fn cx_uses_little_endian_control() {
        // X on qubit 1, then CX(1 -> 0): both bits set, index 3.
        let c = Circuit::from_ops(2, vec![GateOp::x(1), GateOp::cx(1, 0)]).unwrap();
        assert!((simulate_pure(&c).amplitudes()[3].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_circuit(&mut rng, 3, 25);
        let u = unitary(&c);
        let d = 8;
        for i in 0..d {
            for j in 0..d {
                let dot: Complex64 = (0..d).map(|k| u[k * d + i].conj() * u[k * d + j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn invert_roundtrip_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let n = rng.random_range(1..=4);
            let c = random_circuit(&mut rng, n, 30);
            let init: Vec<Complex64> = (0..1 << n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let init = PureState::from_amplitudes(init).unwrap();
            let there = simulate_from(&init, &c).unwrap();
            let back = simulate_from(&there, &invert(&c)).unwrap();
            assert!(back.fidelity(&init) > 1.0 - 1e-10);
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut s = PureState::zero(2);
        assert!(s.apply(&Circuit::new(3)).is_err());
    }
}
