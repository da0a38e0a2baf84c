use std::f64::consts::PI;

use proptest::prelude::*;
use qumos::qsim::{
    expectations_z, invert, parameter_shift_grad, simulate_mixed, simulate_noisy, simulate_pure, unitary, Circuit,
    GateOp, NoiseSpec, Shots,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_circuit(rng: &mut ChaCha8Rng, n_qubits: usize, n_ops: usize) -> Circuit {
    let mut c = Circuit::new(n_qubits);
    for _ in 0..n_ops {
        let q = rng.random_range(0..n_qubits);
        let other = (q + rng.random_range(1..n_qubits.max(2))) % n_qubits;
        let op = match rng.random_range(0..7) {
            0 => GateOp::h(q),
            1 => GateOp::x(q),
            2 => GateOp::rx(q, rng.random_range(-PI..PI)),
            3 => GateOp::ry(q, rng.random_range(-PI..PI)),
            4 => GateOp::rz(q, rng.random_range(-PI..PI)),
            5 if n_qubits > 1 => GateOp::cx(q, other),
            6 if n_qubits > 1 => GateOp::cz(q, other),
            _ => GateOp::ry(q, rng.random_range(-PI..PI)),
        };
        c.push(op).unwrap();
    }
    c
}

fn noise(rng: &mut ChaCha8Rng) -> NoiseSpec {
    NoiseSpec::new(rng.random_range(0.0..0.05), rng.random_range(0.0..0.1), rng.random_range(0.0..0.1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pure_norm_is_preserved(seed in any::<u64>(), n in 1usize..=5, ops in 0usize..40) {
        let c = random_circuit(&mut ChaCha8Rng::seed_from_u64(seed), n, ops);
        prop_assert!((simulate_pure(&c).norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mixed_state_stays_a_density_matrix(seed in any::<u64>(), n in 1usize..=4, ops in 0usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(&mut rng, n, ops);
        let rho = simulate_mixed(&c, &noise(&mut rng));
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(rho.trace().im.abs() < 1e-10);
        prop_assert!(rho.hermiticity_error() < 1e-10);
        for i in 0..rho.dim() {
            prop_assert!(rho.get(i, i).re > -1e-12);
        }
    }

    #[test]
    fn zero_noise_exact_equals_pure(seed in any::<u64>(), n in 1usize..=4, ops in 0usize..30) {
        let c = random_circuit(&mut ChaCha8Rng::seed_from_u64(seed), n, ops);
        let noisy = simulate_noisy(&c, &NoiseSpec::default(), Shots::Exact, seed).unwrap();
        let pure = expectations_z(&simulate_pure(&c));
        for (a, b) in noisy.iter().zip(&pure) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn circuit_then_inverse_is_identity(seed in any::<u64>(), n in 1usize..=4, ops in 0usize..30) {
        let c = random_circuit(&mut ChaCha8Rng::seed_from_u64(seed), n, ops);
        let both = Circuit::compose(&c, &invert(&c)).unwrap();
        let u = unitary(&both);
        let dim = 1usize << n;
        let trace: num_complex::Complex64 = (0..dim).map(|i| u[i * dim + i]).sum();
        prop_assert!(trace.norm() / dim as f64 > 1.0 - 1e-10);
    }
}

#[test]
fn parameter_shift_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for trial in 0..50 {
        let c = random_circuit(&mut rng, 4, 25);
        let obs = trial % 4;
        let grad = parameter_shift_grad(&c, obs).unwrap();
        assert_eq!(grad.len(), c.n_rotations());
        let h = 1e-5;
        for (k, &i) in c.rotation_indices().iter().enumerate() {
            let up = expectations_z(&simulate_pure(&c.with_shifted_angle(i, h)))[obs];
            let down = expectations_z(&simulate_pure(&c.with_shifted_angle(i, -h)))[obs];
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
            assert!(rel < 1e-4, "trial {trial} angle {k}: {fd} vs {}", grad[k]);
        }
    }
}

#[test]
fn shot_estimates_converge() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let c = random_circuit(&mut rng, 4, 30);
    let spec = NoiseSpec::new(0.002, 0.02, 0.03).unwrap();
    let exact = simulate_noisy(&c, &spec, Shots::Exact, 0).unwrap();
    for shots in [1000u32, 8092, 64000] {
        let trials = 200;
        let bound = 4.0 * (1.0 / shots as f64).sqrt();
        let inside = (0..trials)
            .filter(|&t| {
                let est = simulate_noisy(&c, &spec, Shots::Count(shots), t).unwrap();
                est.iter().zip(&exact).all(|(e, z)| (e - z).abs() <= bound)
            })
            .count();
        assert!(inside as f64 >= 0.99 * trials as f64, "{shots} shots: {inside}/{trials}");
    }
}
