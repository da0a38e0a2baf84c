use super::state::{apply_op, PureState};
use super::{expectations_z, Circuit, QsimError, SHIFT};

/// ∂⟨Z_observable⟩/∂θₖ for every rotation angle θₖ, in op order, by the
/// two-term parameter-shift rule on exact simulation.
pub fn parameter_shift_grad(circuit: &Circuit, observable: usize) -> Result<Vec<f64>, QsimError> {
    if observable >= circuit.n_qubits() {
        return Err(QsimError::InvalidObservable {
            index: observable,
            n_qubits: circuit.n_qubits(),
        });
    }
    let jac = shift_jacobian(circuit, &circuit.rotation_indices());
    Ok(jac.into_iter().map(|row| row[observable]).collect())
}

/// Jacobian of all per-qubit ⟨Zᵢ⟩ with respect to the angles of the rotation
/// gates at `op_indices`. Row `k` holds the derivatives for `op_indices[k]`.
///
/// The state just before each shifted gate is taken from a single forward
/// sweep, so each shift only replays the circuit suffix.
pub fn shift_jacobian(circuit: &Circuit, op_indices: &[usize]) -> Vec<Vec<f64>> {
    if op_indices.is_empty() {
        return Vec::new();
    }
    let ops = circuit.ops();
    let n = circuit.n_qubits();

    let mut sorted: Vec<(usize, usize)> = op_indices.iter().copied().enumerate().map(|(k, i)| (i, k)).collect();
    sorted.sort_unstable();

    let mut rows = vec![Vec::new(); op_indices.len()];
    let mut prefix = PureState::zero(n);
    let mut applied = 0;
    for (op_index, row) in sorted {
        assert!(ops[op_index].kind.is_rotation(), "op {op_index} is not a rotation");
        while applied < op_index {
            apply_op(prefix.amps_mut(), &ops[applied], 0, false);
            applied += 1;
        }
        let eval = |delta: f64| {
            let mut state = prefix.clone();
            let mut shifted = ops[op_index].clone();
            shifted.params[0] += delta;
            apply_op(state.amps_mut(), &shifted, 0, false);
            for op in &ops[op_index + 1..] {
                apply_op(state.amps_mut(), op, 0, false);
            }
            expectations_z(&state)
        };
        let plus = eval(SHIFT);
        let minus = eval(-SHIFT);
        rows[row] = plus.iter().zip(&minus).map(|(p, m)| (p - m) / 2.0).collect();
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::super::testutil::random_rotation_circuit;
    use super::super::{simulate_pure, GateOp};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    /// Central finite differences of ⟨Z_obs⟩, independent of the shift rule.
    fn finite_difference(circuit: &Circuit, observable: usize, h: f64) -> Vec<f64> {
        circuit
            .rotation_indices()
            .into_iter()
            .map(|i| {
                let up = expectations_z(&simulate_pure(&circuit.with_shifted_angle(i, h)))[observable];
                let down = expectations_z(&simulate_pure(&circuit.with_shifted_angle(i, -h)))[observable];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn single_ry_examples() {
        let c = Circuit::from_ops(1, vec![GateOp::ry(0, FRAC_PI_2)]).unwrap();
        assert!((parameter_shift_grad(&c, 0).unwrap()[0] + 1.0).abs() < 1e-10);
        let c = Circuit::from_ops(1, vec![GateOp::ry(0, 0.0)]).unwrap();
        assert!(parameter_shift_grad(&c, 0).unwrap()[0].abs() < 1e-10);
    }

    #[test]
    fn bad_observable() {
        let c = Circuit::new(2);
        assert_eq!(
            parameter_shift_grad(&c, 2),
            Err(QsimError::InvalidObservable { index: 2, n_qubits: 2 })
        );
    }

    #[test]
    fn matches_finite_differences_on_four_qubits() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let c = random_rotation_circuit(&mut rng, 4, 12);
        assert_eq!(c.n_rotations(), 12);
        for obs in 0..4 {
            let shift = parameter_shift_grad(&c, obs).unwrap();
            let fd = finite_difference(&c, obs, 1e-4);
            for (a, b) in shift.iter().zip(&fd) {
                let scale = a.abs().max(b.abs()).max(1e-3);
                assert!((a - b).abs() / scale < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn jacobian_row_order_follows_request() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = random_rotation_circuit(&mut rng, 3, 6);
        let idx = c.rotation_indices();
        let reversed: Vec<usize> = idx.iter().rev().copied().collect();
        let fwd = shift_jacobian(&c, &idx);
        let rev = shift_jacobian(&c, &reversed);
        for (k, row) in rev.iter().enumerate() {
            assert_eq!(row, &fwd[idx.len() - 1 - k]);
        }
    }
}
