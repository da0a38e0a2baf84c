use std::collections::BTreeMap;

use qumos::arch::data_encoder;
use qumos::data::{prepare, DatasetName};
use qumos::engine::{RandomSampler, Sampler, SearchConfig};
use qumos::fleet::FleetConfig;
use qumos::graph::{materialize, Model, NodeId, ProviderId};
use qumos::qsim::{Circuit, GateKind, GateOp, Shots};
use qumos::redteam::{attack_from_logs, query_loopback, recover_bodies, steal, unitary_fidelity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_circuit(rng: &mut ChaCha8Rng, n_ops: usize) -> Circuit {
    let mut c = Circuit::new(4);
    for _ in 0..n_ops {
        let q = rng.random_range(0..4);
        let op = match rng.random_range(0..6) {
            0 => GateOp::h(q),
            1 => GateOp::rotation(GateKind::Rx, q, rng.random_range(-3.0..3.0)),
            2 => GateOp::rotation(GateKind::Ry, q, rng.random_range(-3.0..3.0)),
            3 => GateOp::rotation(GateKind::Rz, q, rng.random_range(-3.0..3.0)),
            4 => GateOp::cx(q, (q + 1) % 4),
            _ => GateOp::cz(q, (q + 2) % 4),
        };
        c.push(op).unwrap();
    }
    c
}

fn random_features(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..16).map(|_| rng.random_range(0.0..std::f64::consts::PI)).collect()
}

#[test]
fn steal_recovers_model_circuit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let model = random_circuit(&mut rng, 24);
        let probe = data_encoder(&random_features(&mut rng)).unwrap();
        let compiled = Circuit::compose(&probe, &model).unwrap();
        let stolen = steal(&compiled, &probe).unwrap();
        assert!(unitary_fidelity(&stolen, &model).unwrap() > 1.0 - 1e-9);
    }
}

#[test]
fn steal_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let probe = data_encoder(&random_features(&mut rng)).unwrap();
    let stolen = steal(&probe, &probe).unwrap();
    assert!(stolen.is_empty());
    assert!((unitary_fidelity(&stolen, &Circuit::new(4)).unwrap() - 1.0).abs() < 1e-12);

    let zero = data_encoder(&[0.0; 16]).unwrap();
    let model = random_circuit(&mut rng, 10);
    let stolen = steal(&Circuit::compose(&zero, &model).unwrap(), &zero).unwrap();
    assert!(unitary_fidelity(&stolen, &model).unwrap() > 1.0 - 1e-9);

    assert!(steal(&Circuit::new(3), &probe).is_err());
}

#[test]
fn fidelity_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = random_circuit(&mut rng, 15);
    assert!((unitary_fidelity(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    let x = Circuit::from_ops(1, vec![GateOp::x(0)]).unwrap();
    assert!(unitary_fidelity(&x, &Circuit::new(1)).unwrap().abs() < 1e-12);
    // A global phase does not count.
    let rz = Circuit::from_ops(1, vec![GateOp::rz(0, 2.0 * std::f64::consts::PI)]).unwrap();
    assert!((unitary_fidelity(&rz, &Circuit::new(1)).unwrap() - 1.0).abs() < 1e-12);
    assert!(unitary_fidelity(&x, &c).is_err());
}

fn random_model(seed: u64, depth: usize, pin: Option<&str>, n_classes: usize) -> Model {
    let config = SearchConfig {
        backbone_depth: depth,
        ..SearchConfig::default()
    };
    let mut sampler = RandomSampler::new(&config);
    for k in 0.. {
        let (mut design, _) = sampler.sample(qumos::seed::derive(seed, k));
        if let Some(p) = pin {
            design.provider.values_mut().for_each(|v| *v = ProviderId::from(p));
        }
        if let Ok(mut m) = materialize(&design, seed) {
            m.set_n_classes(n_classes).unwrap();
            return m;
        }
    }
    unreachable!()
}

#[test]
fn single_provider_deployment_leaks_every_node() {
    let fleet = FleetConfig::default_fleet(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..20 {
        let model = random_model(trial, 1 + (trial as usize % 3), Some("qcp2"), 2);
        let probe = random_features(&mut rng);
        let logs = query_loopback(&model, &fleet, &probe, Shots::Count(100), trial).unwrap();
        assert!(logs[&ProviderId::from("qcp1")].is_empty());
        let plan = model.plan();
        let layout: BTreeMap<NodeId, _> = plan
            .steps()
            .iter()
            .map(|s| (s.node, s.inputs.clone()))
            .collect();
        let bodies = recover_bodies(&logs[&ProviderId::from("qcp2")], &layout, &probe).unwrap();
        assert_eq!(bodies.len(), model.n_nodes());
        for step in plan.steps() {
            let f = unitary_fidelity(&bodies[&step.node], &step.body).unwrap();
            assert!(f > 1.0 - 1e-9, "trial {trial} node {}: {f}", step.node);
        }
    }
}

#[test]
fn distributed_thefts_match_submodel_accuracy() {
    let fleet = FleetConfig::default_fleet(3).unwrap();
    let (_, test) = prepare(DatasetName::Synth4, std::path::Path::new("."), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..3 {
        let model = random_model(100 + trial, 3, None, 4);
        let probe = random_features(&mut rng);
        let logs = query_loopback(&model, &fleet, &probe, Shots::Count(8092), trial).unwrap();
        let report = attack_from_logs(&model, &fleet, &logs, &probe, &test, Shots::Count(8092), trial).unwrap();
        assert_eq!(report.thefts.len(), qumos::security::find_security_submodels(&model).len());
        assert!(report.min_fidelity() > 1.0 - 1e-9);
        assert!(report.max_acc_gap() <= 0.03, "trial {trial}: {:?}", report.thefts);
    }
}

#[test]
fn missing_log_is_reported() {
    let mut layout = BTreeMap::new();
    layout.insert(NodeId(1), vec![qumos::graph::NodeInput::Data]);
    assert!(recover_bodies(&[], &layout, &[0.0; 16]).is_err());
}
