use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::{NodeInput, Plan, PlanStep};
use super::{BackboneGraph, GraphError, ModelDesign, NodeId, ProviderId};
use crate::arch::{instantiate_template, TemplateId, NODE_QUBITS};

/// A design with trainable angles and a resolved execution order.
///
/// Only live nodes carry parameters. A node is live when its template is not
/// empty, data reaches it (it is a leaf, or at least one of its children is
/// live) and its output reaches the root through live nodes. The root is the
/// only sink.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    design: ModelDesign,
    backbone: BackboneGraph,
    params: BTreeMap<NodeId, Vec<f64>>,
    topo_order: Vec<NodeId>,
    sinks: Vec<NodeId>,
    n_classes: usize,
}

/// Removes empty nodes, nodes that no data reaches and nodes cut off from the
/// root by an empty ancestor, then draws every
/// remaining angle uniformly from `[−π, π]`.
///
/// The returned model's design marks pruned nodes with the empty template,
/// so materializing it again yields the same node set.
pub fn materialize(design: &ModelDesign, seed: u64) -> Result<Model, GraphError> {
    let backbone = design.validate()?;
    if design.arch.values().all(|t| t.is_empty()) {
        return Err(GraphError::EmptyModel);
    }

    let mut fed = BTreeSet::new();
    // Children have larger ids than their parent, so descending order visits
    // producers before consumers.
    for n in backbone.nodes().rev() {
        let filled = !design.arch[&n].is_empty();
        if filled && (backbone.is_leaf(n) || backbone.children(n).iter().any(|c| fed.contains(c))) {
            fed.insert(n);
        }
    }
    if !fed.contains(&NodeId::ROOT) {
        return Err(if design.arch[&NodeId::ROOT].is_empty() {
            GraphError::EmptyModel
        } else {
            GraphError::NoDataPath
        });
    }
    let mut live = BTreeSet::new();
    for n in backbone.nodes() {
        if fed.contains(&n) && backbone.parent(n).is_none_or(|p| live.contains(&p)) {
            live.insert(n);
        }
    }

    let mut normalized = design.clone();
    for (n, t) in normalized.arch.iter_mut() {
        if !live.contains(n) {
            *t = TemplateId::EMPTY;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = live
        .iter()
        .map(|&n| {
            let k = normalized.arch[&n].n_params();
            (n, (0..k).map(|_| rng.random_range(-PI..=PI)).collect())
        })
        .collect();

    Ok(Model::assemble(normalized, backbone, params, &live))
}

impl Model {
    fn assemble(
        design: ModelDesign,
        backbone: BackboneGraph,
        params: BTreeMap<NodeId, Vec<f64>>,
        live: &BTreeSet<NodeId>,
    ) -> Model {
        let topo_order: Vec<NodeId> = live.iter().rev().copied().collect();
        let sinks = live
            .iter()
            .copied()
            .filter(|&n| backbone.parent(n).is_none_or(|p| !live.contains(&p)))
            .collect();
        Model {
            design,
            backbone,
            params,
            topo_order,
            sinks,
            n_classes: NODE_QUBITS,
        }
    }

    /// Rebuilds a model from a design and previously trained angles.
    pub fn from_parts(
        design: &ModelDesign,
        params: BTreeMap<NodeId, Vec<f64>>,
        n_classes: usize,
    ) -> Result<Model, GraphError> {
        let mut model = materialize(design, 0)?;
        for (&n, p) in &params {
            match model.params.get_mut(&n) {
                Some(slot) if slot.len() == p.len() => slot.clone_from(p),
                Some(slot) => {
                    return Err(GraphError::ParamShape { node: n, expected: slot.len(), got: p.len() })
                }
                None => return Err(GraphError::UnknownNode(n)),
            }
        }
        if let Some(&missing) = model.params.keys().find(|n| !params.contains_key(n)) {
            return Err(GraphError::MissingNode(missing));
        }
        model.set_n_classes(n_classes)?;
        Ok(model)
    }

    pub fn design(&self) -> &ModelDesign {
        &self.design
    }

    pub fn backbone(&self) -> &BackboneGraph {
        &self.backbone
    }

    /// Live nodes in execution order (producers first).
    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo_order
    }

    pub fn sinks(&self) -> &[NodeId] {
        &self.sinks
    }

    pub fn n_nodes(&self) -> usize {
        self.topo_order.len()
    }

    pub fn is_live(&self, node: NodeId) -> bool {
        self.params.contains_key(&node)
    }

    pub fn template(&self, node: NodeId) -> TemplateId {
        self.design.arch[&node]
    }

    pub fn provider(&self, node: NodeId) -> &ProviderId {
        &self.design.provider[&node]
    }

    /// Distinct providers hosting live nodes.
    pub fn providers(&self) -> BTreeSet<&ProviderId> {
        self.topo_order.iter().map(|n| self.provider(*n)).collect()
    }

    pub fn params(&self) -> &BTreeMap<NodeId, Vec<f64>> {
        &self.params
    }

    pub fn node_params(&self, node: NodeId) -> &[f64] {
        &self.params[&node]
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn set_n_classes(&mut self, n_classes: usize) -> Result<(), GraphError> {
        if !(1..=NODE_QUBITS).contains(&n_classes) {
            return Err(GraphError::ClassCount(n_classes));
        }
        self.n_classes = n_classes;
        Ok(())
    }

    /// Live upstream producers of `node`, ascending.
    pub fn live_children(&self, node: NodeId) -> Vec<NodeId> {
        self.backbone
            .children(node)
            .into_iter()
            .filter(|c| self.is_live(*c))
            .collect()
    }

    /// Active connectivity: backbone edges between live nodes.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.backbone
            .edges()
            .into_iter()
            .filter(|(c, p)| self.is_live(*c) && self.is_live(*p))
            .collect()
    }

    /// Flattened angles, ascending node id.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.values().flatten().copied().collect()
    }

    pub fn n_params(&self) -> usize {
        self.params.values().map(Vec::len).sum()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "flat parameter length");
        let mut rest = flat;
        for p in self.params.values_mut() {
            let (now, tail) = rest.split_at(p.len());
            p.copy_from_slice(now);
            rest = tail;
        }
    }

    /// Offset of each node's block within [`Model::flat_params`].
    pub fn param_offsets(&self) -> BTreeMap<NodeId, usize> {
        let mut offset = 0;
        self.params
            .iter()
            .map(|(&n, p)| {
                let here = offset;
                offset += p.len();
                (n, here)
            })
            .collect()
    }

    /// Execution plan for the whole model: leaves read the data sample,
    /// interior nodes read their live children in ascending id order.
    pub fn plan(&self) -> Plan {
        let keep = |_: NodeId| true;
        self.plan_for(&self.topo_order, &self.sinks, keep)
    }

    /// Plan restricted to `nodes`; inputs from producers outside the set are
    /// replaced by the data encoder. `outputs` are averaged into the logits.
    pub fn subplan(&self, nodes: &BTreeSet<NodeId>, outputs: &[NodeId]) -> Plan {
        let order: Vec<NodeId> = self.topo_order.iter().copied().filter(|n| nodes.contains(n)).collect();
        self.plan_for(&order, outputs, |c| nodes.contains(&c))
    }

    fn plan_for(&self, order: &[NodeId], outputs: &[NodeId], present: impl Fn(NodeId) -> bool) -> Plan {
        let steps = order
            .iter()
            .map(|&n| {
                let inputs = if self.backbone.is_leaf(n) {
                    vec![NodeInput::Data]
                } else {
                    self.live_children(n)
                        .into_iter()
                        .map(|c| if present(c) { NodeInput::Node(c) } else { NodeInput::Data })
                        .collect()
                };
                let body = instantiate_template(self.template(n), self.node_params(n))
                    .expect("live node parameters match their template");
                PlanStep {
                    node: n,
                    provider: self.provider(n).clone(),
                    inputs,
                    body,
                }
            })
            .collect();
        Plan::new(steps, outputs.to_vec(), self.n_classes)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            backbone_depth: self.design.backbone_depth,
            arch: self.design.arch.clone(),
            provider: self.design.provider.clone(),
            n_classes: self.n_classes,
            params: self.params.clone(),
        }
    }
}

/// JSON form of a trained model: the design plus `n_classes` and `params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub backbone_depth: usize,
    pub arch: BTreeMap<NodeId, TemplateId>,
    pub provider: BTreeMap<NodeId, ProviderId>,
    pub n_classes: usize,
    pub params: BTreeMap<NodeId, Vec<f64>>,
}

impl ModelFile {
    pub fn design(&self) -> ModelDesign {
        ModelDesign {
            backbone_depth: self.backbone_depth,
            arch: self.arch.clone(),
            provider: self.provider.clone(),
        }
    }

    pub fn into_model(self) -> Result<Model, GraphError> {
        Model::from_parts(&self.design(), self.params, self.n_classes)
    }
}
