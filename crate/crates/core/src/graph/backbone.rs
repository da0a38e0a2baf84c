use std::fmt;

use serde::{Deserialize, Serialize};

use super::GraphError;

/// Computing-node id. Backbone nodes are numbered `1..=N` in heap order:
/// the root is 1 and node `n` feeds node `n / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(1);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const MAX_DEPTH: usize = 4;

/// Full binary tree with data entering at the leaves and flowing to the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneGraph {
    depth: usize,
}

impl BackboneGraph {
    pub fn new(depth: usize) -> Result<Self, GraphError> {
        if !(1..=MAX_DEPTH).contains(&depth) {
            return Err(GraphError::InvalidDepth(depth));
        }
        Ok(BackboneGraph { depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_nodes(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn nodes(&self) -> impl DoubleEndedIterator<Item = NodeId> {
        (1..=self.n_nodes()).map(NodeId)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        (1..=self.n_nodes()).contains(&node.0)
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        node.0 >= 1 << (self.depth - 1)
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|&n| self.is_leaf(n))
    }

    /// Downstream consumer of `node`; `None` for the root.
    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        (node.0 > 1).then_some(NodeId(node.0 / 2))
    }

    /// Upstream producers of `node`, ascending.
    pub fn children(&self, node: NodeId) -> Vec<NodeId> {
        if self.is_leaf(node) {
            Vec::new()
        } else {
            vec![NodeId(2 * node.0), NodeId(2 * node.0 + 1)]
        }
    }

    /// Directed edges `(from, to)` in dataflow direction, leaf to root.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.nodes()
            .filter_map(|n| self.parent(n).map(|p| (n, p)))
            .collect()
    }
}

/// Convenience wrapper for [`BackboneGraph::new`].
pub fn build_backbone(depth: usize) -> Result<BackboneGraph, GraphError> {
    BackboneGraph::new(depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_three_tree() {
        let b = build_backbone(3).unwrap();
        assert_eq!(b.n_nodes(), 7);
        assert_eq!(b.leaves().count(), 4);
        assert_eq!(b.edges().len(), 6);
        assert!(b.edges().iter().all(|&(c, p)| b.parent(c) == Some(p)));
    }

    #[test]
    fn small_trees() {
        let b = build_backbone(1).unwrap();
        assert_eq!(b.n_nodes(), 1);
        assert!(b.edges().is_empty());
        assert!(b.is_leaf(NodeId(1)));

        let b = build_backbone(2).unwrap();
        assert_eq!(b.n_nodes(), 3);
        assert_eq!(b.children(NodeId(1)), vec![NodeId(2), NodeId(3)]);
    }

    #[test]
    fn depth_bounds() {
        assert!(matches!(build_backbone(0), Err(GraphError::InvalidDepth(0))));
        assert!(matches!(build_backbone(5), Err(GraphError::InvalidDepth(5))));
    }

    #[test]
    fn every_non_root_node_has_one_consumer() {
        let b = build_backbone(4).unwrap();
        for n in b.nodes() {
            let outgoing = b.edges().iter().filter(|(c, _)| *c == n).count();
            assert_eq!(outgoing, usize::from(n != NodeId(1)));
        }
    }
}
