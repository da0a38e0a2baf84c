use proptest::prelude::*;
use qumos::arch::{catalog, data_encoder, instantiate_template, intermediate_encoder, TemplateId, NODE_QUBITS};
use qumos::qsim::GateKind;

#[test]
fn catalog_counts() {
    let counts: Vec<usize> = catalog().iter().map(|t| t.n_params).collect();
    assert_eq!(counts, vec![0, 4, 8, 8, 16, 12]);
}

proptest! {
    #[test]
    fn templates_are_four_wide(id in 1u8..=5, seed in any::<u64>()) {
        let t = TemplateId::new(id).unwrap();
        let params: Vec<f64> = (0..t.n_params()).map(|k| ((seed.wrapping_add(k as u64) % 1000) as f64) / 100.0).collect();
        let c = instantiate_template(t, &params).unwrap();
        prop_assert_eq!(c.n_qubits(), NODE_QUBITS);
        prop_assert_eq!(c.n_rotations(), t.n_params());
        for op in c.ops() {
            prop_assert!(matches!(
                op.kind,
                GateKind::H | GateKind::X | GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Cx | GateKind::Cz
            ));
        }
        prop_assert!(instantiate_template(t, &params[1..]).is_err());
    }

    #[test]
    fn data_encoder_is_injective(
        a in prop::array::uniform16(0.0..std::f64::consts::PI),
        b in prop::array::uniform16(0.0..std::f64::consts::PI),
    ) {
        let (ca, cb) = (data_encoder(&a).unwrap(), data_encoder(&b).unwrap());
        prop_assert_eq!(ca.len(), 16);
        prop_assert_eq!(a == b, ca == cb);
    }

    #[test]
    fn intermediate_encoder_stacks_parents(outs in prop::collection::vec(prop::array::uniform4(-1.0..=1.0f64), 1..3)) {
        let c = intermediate_encoder(&outs).unwrap();
        prop_assert_eq!(c.len(), 4 * outs.len());
        for (k, op) in c.ops().iter().enumerate() {
            prop_assert_eq!(op.kind, GateKind::Ry);
            let want = std::f64::consts::PI * outs[k / 4][k % 4];
            prop_assert!((op.angle().unwrap() - want).abs() < 1e-12);
        }
    }
}
