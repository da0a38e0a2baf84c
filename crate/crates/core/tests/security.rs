use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use proptest::prelude::*;
use qumos::arch::TemplateId;
use qumos::data::{prepare, DatasetName};
use qumos::graph::{accuracy, materialize, LocalDevice, ModelDesign, NodeId, ProviderId};
use qumos::qsim::{NoiseSpec, Shots};
use qumos::security::{
    evaluate_submodel, find_security_submodels, find_submodels, sec_mec, security_report, ProviderDag,
    SecuritySubmodel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p(s: &str) -> ProviderId {
    ProviderId::from(s)
}

fn n(ids: &[usize]) -> Vec<NodeId> {
    ids.iter().map(|&i| NodeId(i)).collect()
}

fn fig4() -> ProviderDag {
    let nodes = [(6, "qcp1"), (4, "qcp1"), (2, "qcp1"), (5, "qcp1"), (3, "qcp2"), (1, "qcp2")]
        .into_iter()
        .map(|(i, q)| (NodeId(i), p(q)))
        .collect();
    let edges = [(6, 4), (4, 2), (2, 1), (5, 3), (3, 1)]
        .into_iter()
        .map(|(a, b)| (NodeId(a), NodeId(b)))
        .collect();
    ProviderDag { nodes, edges }
}

#[test]
fn fig4_instance() {
    let providers = [p("qcp1"), p("qcp2"), p("qcp3")];
    let smap = find_submodels(&fig4()).with_providers(&providers);
    let q1 = smap.get(&p("qcp1"));
    assert_eq!(q1.len(), 2);
    assert_eq!(q1[0].nodes, n(&[2, 4, 6]));
    assert_eq!(q1[1].nodes, n(&[5]));
    assert_eq!(smap.get(&p("qcp2"))[0].nodes, n(&[1, 3]));
    assert!(smap.get(&p("qcp3")).is_empty());

    // {6, 4, 2} is a chain entered at 6 and read out at 2.
    assert_eq!(q1[0].heads, n(&[6]));
    assert_eq!(q1[0].tails, n(&[2]));
    assert_eq!((q1[1].heads.clone(), q1[1].tails.clone()), (n(&[5]), n(&[5])));
    let q2 = &smap.get(&p("qcp2"))[0];
    assert_eq!((q2.heads.clone(), q2.tails.clone()), (n(&[3]), n(&[1])));
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        if self.0[i] != i {
            let r = self.find(self.0[i]);
            self.0[i] = r;
        }
        self.0[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
    }
}

/// Components via union-find, heads/tails by scanning all edges.
fn brute_force(dag: &ProviderDag) -> BTreeSet<(String, Vec<NodeId>, Vec<NodeId>, Vec<NodeId>)> {
    let ids: Vec<NodeId> = dag.nodes.keys().copied().collect();
    let pos = |x: NodeId| ids.iter().position(|&i| i == x).unwrap();
    let mut uf = UnionFind((0..ids.len()).collect());
    for &(a, b) in &dag.edges {
        if dag.nodes[&a] == dag.nodes[&b] {
            uf.union(pos(a), pos(b));
        }
    }
    let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(id);
    }
    groups
        .into_values()
        .map(|members| {
            let inside = |x: &NodeId| members.contains(x);
            let heads = members
                .iter()
                .copied()
                .filter(|m| !dag.edges.iter().any(|(a, b)| b == m && inside(a)))
                .collect();
            let tails = members
                .iter()
                .copied()
                .filter(|m| !dag.edges.iter().any(|(a, b)| a == m && inside(b)))
                .collect();
            (dag.nodes[&members[0]].0.clone(), members, heads, tails)
        })
        .collect()
}

fn flatten(subs: impl Iterator<Item = SecuritySubmodel>) -> BTreeSet<(String, Vec<NodeId>, Vec<NodeId>, Vec<NodeId>)> {
    subs.map(|s| (s.provider.0, s.nodes, s.heads, s.tails)).collect()
}

fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize, max_providers: usize) -> ProviderDag {
    let count = rng.random_range(1..=max_nodes);
    let k = rng.random_range(1..=max_providers);
    let mut ids: Vec<usize> = (1..=3 * max_nodes).collect();
    for i in 0..count {
        let j = rng.random_range(i..ids.len());
        ids.swap(i, j);
    }
    ids.truncate(count);
    let nodes = ids
        .iter()
        .map(|&i| (NodeId(i), p(&format!("qcp{}", rng.random_range(1..=k)))))
        .collect();
    let mut edges = Vec::new();
    // Edges only go from lower to higher position, so the graph is acyclic.
    for a in 0..count {
        for b in a + 1..count {
            if rng.random_bool(0.3) {
                edges.push((NodeId(ids[a]), NodeId(ids[b])));
            }
        }
    }
    ProviderDag { nodes, edges }
}

#[test]
fn matches_brute_force_on_random_dags() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let dag = random_dag(&mut rng, 12, 4);
        let got = flatten(find_submodels(&dag).iter().cloned());
        assert_eq!(got, brute_force(&dag), "{dag:?}");
    }
}

proptest! {
    #[test]
    fn submodels_partition_nodes(seed in any::<u64>()) {
        let dag = random_dag(&mut ChaCha8Rng::seed_from_u64(seed), 12, 4);
        let smap = find_submodels(&dag);
        let mut covered = BTreeSet::new();
        for sm in smap.iter() {
            prop_assert!(!sm.heads.is_empty() && !sm.tails.is_empty());
            for node in &sm.nodes {
                prop_assert!(covered.insert(*node));
                prop_assert_eq!(&dag.nodes[node], &sm.provider);
            }
        }
        prop_assert_eq!(covered, dag.nodes.keys().copied().collect::<BTreeSet<_>>());
    }
}

fn timed(dag: &ProviderDag, reps: usize) -> f64 {
    (0..5)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..reps {
                std::hint::black_box(find_submodels(std::hint::black_box(dag)));
            }
            t.elapsed().as_secs_f64() / reps as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn sparse_dag(rng: &mut ChaCha8Rng, count: usize) -> ProviderDag {
    let nodes = (1..=count)
        .map(|i| (NodeId(i), p(&format!("qcp{}", rng.random_range(1..=3)))))
        .collect();
    let edges = (2..=count).map(|i| (NodeId(i), NodeId(i / 2))).collect();
    ProviderDag { nodes, edges }
}

#[test]
fn runtime_scales_linearly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sizes = [10usize, 100, 1000];
    let points: Vec<(f64, f64)> = sizes
        .iter()
        .map(|&size| {
            let dag = sparse_dag(&mut rng, size);
            ((size as f64).ln(), timed(&dag, 200_000 / size).ln())
        })
        .collect();
    let mx = points.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = points.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / points.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    assert!(slope < 1.2, "log-log slope {slope}");
}

#[test]
fn table_arithmetic() {
    assert!((sec_mec(0.9467, &[0.53]).unwrap() - 0.4401).abs() <= 1e-4);
    assert!((sec_mec(0.7333, &[0.0433, 0.01]).unwrap() - 0.9409).abs() <= 1e-4);
    assert_eq!(sec_mec(0.7, &[0.7]).unwrap(), 0.0);
}

fn design(depth: usize, arch: &[u8], providers: &[&str]) -> ModelDesign {
    let mut d = ModelDesign::uniform(depth, TemplateId::new(1).unwrap(), p("qcp1")).unwrap();
    for (i, (&t, &q)) in arch.iter().zip(providers).enumerate() {
        d.arch.insert(NodeId(i + 1), TemplateId::new(t).unwrap());
        d.provider.insert(NodeId(i + 1), p(q));
    }
    d
}

#[test]
fn single_provider_gives_one_submodel_and_zero_secmec() {
    let (_, test) = prepare(DatasetName::Synth2, std::path::Path::new("."), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..5 {
        let arch: Vec<u8> = (0..7).map(|_| rng.random_range(1..=5)).collect();
        let m = materialize(&design(3, &arch, &["qcp2"; 7]), seed).unwrap();
        let smap = find_security_submodels(&m);
        assert_eq!(smap.len(), 1);
        assert_eq!(smap.iter().next().unwrap().nodes, m.topo_order().iter().rev().copied().collect::<Vec<_>>());
        let exec = LocalDevice {
            noise: NoiseSpec::new(0.001, 0.01, 0.02).unwrap(),
            shots: Shots::Count(1000),
        };
        let r = security_report(&m, &test.take(60), &exec, seed, 2).unwrap();
        if r.acc > 0.0 {
            assert_eq!(r.sec_mec, 0.0);
        }
    }
}

#[test]
fn single_provider_with_empty_templates_stays_one_submodel() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for seed in 0..400 {
        let arch: Vec<u8> = (0..15).map(|_| rng.random_range(0..=5)).collect();
        let Ok(m) = materialize(&design(4, &arch, &["qcp3"; 15]), seed) else {
            continue;
        };
        assert_eq!(m.sinks(), &[NodeId(1)], "{arch:?}");
        assert_eq!(find_security_submodels(&m).len(), 1, "{arch:?}");
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn whole_model_submodel_equals_model_accuracy() {
    let (_, test) = prepare(DatasetName::Synth4, std::path::Path::new("."), 2).unwrap();
    let test = test.take(80);
    let mut m = materialize(&design(2, &[2, 3, 5], &["qcp1"; 3]), 4).unwrap();
    m.set_n_classes(4).unwrap();
    let noise = NoiseSpec::new(0.002, 0.02, 0.03).unwrap();
    let shots = Shots::Count(2000);
    let sm = find_security_submodels(&m).iter().next().unwrap().clone();
    let sub = evaluate_submodel(&sm, &m, &test, noise, shots, 17);
    let full = accuracy(&m, &test, &LocalDevice { noise, shots }, 17).unwrap();
    assert_eq!(sub, full);
}

#[test]
fn random_submodels_sit_near_chance() {
    let (_, test) = prepare(DatasetName::Synth4, std::path::Path::new("."), 5).unwrap();
    let providers = ["qcp1", "qcp2", "qcp1", "qcp2", "qcp2", "qcp1", "qcp1"];
    let mut accs = Vec::new();
    for seed in 0..10 {
        let m = materialize(&design(3, &[1, 2, 3, 4, 5, 1, 2], &providers), 100 + seed).unwrap();
        let smap = find_security_submodels(&m);
        let sm = smap.iter().max_by_key(|s| s.nodes.len()).unwrap();
        accs.push(evaluate_submodel(sm, &m, &test, NoiseSpec::NOISELESS, Shots::Exact, seed));
    }
    for a in &accs {
        assert!((0.10..=0.45).contains(a), "{accs:?}");
    }
}

#[test]
fn mixed_head_keeps_present_parent() {
    // Node 1 keeps child 2 (same provider) and takes the data encoder for 3.
    let m = materialize(&design(2, &[1, 1, 1], &["qcp1", "qcp1", "qcp2"]), 0).unwrap();
    let smap = find_security_submodels(&m);
    let sm = &smap.get(&p("qcp1"))[0];
    assert_eq!(sm.nodes, n(&[1, 2]));
    let plan = qumos::security::submodel_plan(sm, &m);
    let root = plan.steps().iter().find(|s| s.node == NodeId(1)).unwrap();
    use qumos::graph::NodeInput;
    assert_eq!(root.inputs, vec![NodeInput::Node(NodeId(2)), NodeInput::Data]);
    assert_eq!(plan.outputs(), &[NodeId(1)]);
}

#[test]
fn report_json_shape() {
    let (_, test) = prepare(DatasetName::Synth2, std::path::Path::new("."), 3).unwrap();
    let m = materialize(&design(2, &[1, 1, 1], &["qcp1", "qcp2", "qcp1"]), 6).unwrap();
    let r = security_report(&m, &test.take(40), &qumos::graph::Exact, 0, 1);
    let r = match r {
        Ok(r) => r,
        Err(qumos::security::SecurityError::DegenerateModel) => return,
        Err(e) => panic!("{e}"),
    };
    let v = serde_json::to_value(&r).unwrap();
    for key in ["acc", "sec_acc", "sec_mec", "submodels"] {
        assert!(v.get(key).is_some());
    }
    assert_eq!(v["submodels"].as_array().unwrap().len(), 2);
    assert!(v["submodels"][0].get("provider").is_some());
    assert!((r.sec_mec - (1.0 - r.sec_acc / r.acc)).abs() == 0.0);
}
