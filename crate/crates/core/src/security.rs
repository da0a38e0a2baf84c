//! Security submodels and the SecMec metric.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::graph::{ExecError, GraphError, LocalDevice, Model, NodeExecutor, NodeId, Plan, ProviderId};
use crate::qsim::{NoiseSpec, Shots};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SecurityError {
    #[error("model accuracy is zero, SecMec is undefined")]
    DegenerateModel,
    #[error("no submodel accuracies")]
    NoSubmodels,
    #[error(transparent)]
    Execution(#[from] ExecError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A directed graph whose nodes carry a provider label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProviderDag {
    pub nodes: BTreeMap<NodeId, ProviderId>,
    /// `(from, to)` pairs; data flows from `from` into `to`.
    pub edges: Vec<(NodeId, NodeId)>,
}

impl ProviderDag {
    pub fn from_model(model: &Model) -> Self {
        ProviderDag {
            nodes: model.topo_order().iter().map(|&n| (n, model.provider(n).clone())).collect(),
            edges: model.edges(),
        }
    }
}

/// Nodes of one provider that are connected when edge direction is ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecuritySubmodel {
    pub provider: ProviderId,
    /// Ascending.
    pub nodes: Vec<NodeId>,
    /// No in-edge from inside the submodel.
    pub heads: Vec<NodeId>,
    /// No out-edge to inside the submodel.
    pub tails: Vec<NodeId>,
}

impl SecuritySubmodel {
    pub fn node_set(&self) -> BTreeSet<NodeId> {
        self.nodes.iter().copied().collect()
    }
}

/// Provider → its submodels, ordered by smallest member node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubmodelMap(pub BTreeMap<ProviderId, Vec<SecuritySubmodel>>);

impl SubmodelMap {
    pub fn get(&self, provider: &ProviderId) -> &[SecuritySubmodel] {
        self.0.get(provider).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SecuritySubmodel> {
        self.0.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.0.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds an empty entry for each provider that hosts nothing.
    pub fn with_providers<'a>(mut self, providers: impl IntoIterator<Item = &'a ProviderId>) -> Self {
        for p in providers {
            self.0.entry(p.clone()).or_default();
        }
        self
    }
}

/// Splits a provider-labeled DAG into security submodels in O(N + E).
pub fn find_submodels(dag: &ProviderDag) -> SubmodelMap {
    let ids: Vec<NodeId> = dag.nodes.keys().copied().collect();
    let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let provider: Vec<&ProviderId> = dag.nodes.values().collect();

    // Stage 1: keep only edges inside one provider's subgraph.
    let mut undirected = vec![Vec::new(); ids.len()];
    let mut indeg = vec![0usize; ids.len()];
    let mut outdeg = vec![0usize; ids.len()];
    for (from, to) in &dag.edges {
        let (Some(&a), Some(&b)) = (index.get(from), index.get(to)) else {
            continue;
        };
        if provider[a] != provider[b] {
            continue;
        }
        undirected[a].push(b);
        undirected[b].push(a);
        outdeg[a] += 1;
        indeg[b] += 1;
    }

    // Stage 2: BFS components. Stage 3: heads and tails by in-component degree.
    let mut seen = vec![false; ids.len()];
    let mut map: BTreeMap<ProviderId, Vec<SecuritySubmodel>> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for start in 0..ids.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            for &j in &undirected[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        let pick = |keep: &dyn Fn(usize) -> bool| members.iter().filter(|&&i| keep(i)).map(|&i| ids[i]).collect();
        map.entry(provider[start].clone()).or_default().push(SecuritySubmodel {
            provider: provider[start].clone(),
            nodes: members.iter().map(|&i| ids[i]).collect(),
            heads: pick(&|i| indeg[i] == 0),
            tails: pick(&|i| outdeg[i] == 0),
        });
    }
    SubmodelMap(map)
}

/// Security submodels of a materialized model.
pub fn find_security_submodels(model: &Model) -> SubmodelMap {
    find_submodels(&ProviderDag::from_model(model))
}

/// Execution plan of a submodel: heads take the data encoder in place of any
/// missing producer, and the logits average the tails.
pub fn submodel_plan(sm: &SecuritySubmodel, model: &Model) -> Plan {
    model.subplan(&sm.node_set(), &sm.tails)
}

/// Accuracy of `sm` run on `exec` (typically its provider's device).
pub fn evaluate_submodel_on(
    sm: &SecuritySubmodel,
    model: &Model,
    dataset: &Dataset,
    exec: &dyn NodeExecutor,
    seed: u64,
) -> Result<f64, ExecError> {
    submodel_plan(sm, model)
        .with_n_classes(dataset.n_classes())
        .accuracy(dataset, exec, seed)
}

/// Accuracy of `sm` on a local device with the given noise and shot budget.
pub fn evaluate_submodel(
    sm: &SecuritySubmodel,
    model: &Model,
    dataset: &Dataset,
    device: NoiseSpec,
    shots: Shots,
    seed: u64,
) -> f64 {
    let exec = LocalDevice { noise: device, shots };
    evaluate_submodel_on(sm, model, dataset, &exec, seed).expect("local simulation of a validated model")
}

/// `1 − max(submodel_accs) / acc_model`, unclamped.
pub fn sec_mec(acc_model: f64, submodel_accs: &[f64]) -> Result<f64, SecurityError> {
    if acc_model <= 0.0 {
        return Err(SecurityError::DegenerateModel);
    }
    let best = submodel_accs
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(SecurityError::NoSubmodels)?;
    Ok(1.0 - best / acc_model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodelAccuracy {
    pub provider: ProviderId,
    pub nodes: Vec<NodeId>,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub acc: f64,
    pub sec_acc: f64,
    pub sec_mec: f64,
    pub submodels: Vec<SubmodelAccuracy>,
}

/// Accuracy of every submodel on `exec`, which must route each node to its
/// provider. Runs are spread over up to `workers` threads.
pub fn submodel_accuracies(
    model: &Model,
    dataset: &Dataset,
    exec: &dyn NodeExecutor,
    seed: u64,
    workers: usize,
) -> Result<Vec<SubmodelAccuracy>, SecurityError> {
    let smap = find_security_submodels(model);
    let subs: Vec<&SecuritySubmodel> = smap.iter().collect();
    let accs = parallel_map(&subs, workers, |sm| evaluate_submodel_on(sm, model, dataset, exec, seed))?;
    Ok(subs
        .iter()
        .zip(accs)
        .map(|(sm, acc)| SubmodelAccuracy {
            provider: sm.provider.clone(),
            nodes: sm.nodes.clone(),
            acc,
        })
        .collect())
}

/// Full-model accuracy, per-submodel accuracies and SecMec.
pub fn security_report(
    model: &Model,
    dataset: &Dataset,
    exec: &dyn NodeExecutor,
    seed: u64,
    workers: usize,
) -> Result<SecurityReport, SecurityError> {
    let acc = crate::graph::accuracy(model, dataset, exec, seed)?;
    let submodels = submodel_accuracies(model, dataset, exec, seed, workers)?;
    let accs: Vec<f64> = submodels.iter().map(|s| s.acc).collect();
    Ok(SecurityReport {
        acc,
        sec_acc: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sec_mec: sec_mec(acc, &accs)?,
        submodels,
    })
}

/// Order-preserving map over a bounded pool of scoped threads.
pub(crate) fn parallel_map<T: Sync, R: Send, E: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> Result<R, E> + Sync,
) -> Result<Vec<R>, E> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R, E>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
