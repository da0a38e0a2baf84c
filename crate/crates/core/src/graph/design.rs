use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BackboneGraph, GraphError, NodeId};
use crate::arch::TemplateId;

/// Name of a quantum cloud provider, e.g. `qcp1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProviderId(pub String);

impl ProviderId {
    pub fn new(id: impl Into<String>) -> Self {
        ProviderId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProviderId {
    fn from(s: &str) -> Self {
        ProviderId(s.to_string())
    }
}

/// Per-node architecture and provider choices over a backbone tree.
///
/// Connectivity is not stored: it is the backbone's edge set restricted to
/// the nodes that survive materialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDesign {
    pub backbone_depth: usize,
    pub arch: BTreeMap<NodeId, TemplateId>,
    pub provider: BTreeMap<NodeId, ProviderId>,
}

impl ModelDesign {
    pub fn backbone(&self) -> Result<BackboneGraph, GraphError> {
        BackboneGraph::new(self.backbone_depth)
    }

    /// Same template and provider on every node.
    pub fn uniform(depth: usize, template: TemplateId, provider: ProviderId) -> Result<Self, GraphError> {
        let backbone = BackboneGraph::new(depth)?;
        Ok(ModelDesign {
            backbone_depth: depth,
            arch: backbone.nodes().map(|n| (n, template)).collect(),
            provider: backbone.nodes().map(|n| (n, provider.clone())).collect(),
        })
    }

    /// Checks that both maps cover exactly the backbone nodes.
    pub fn validate(&self) -> Result<BackboneGraph, GraphError> {
        let backbone = self.backbone()?;
        for n in backbone.nodes() {
            if !self.arch.contains_key(&n) || !self.provider.contains_key(&n) {
                return Err(GraphError::MissingNode(n));
            }
        }
        let extra = self
            .arch
            .keys()
            .chain(self.provider.keys())
            .find(|n| !backbone.contains(**n));
        if let Some(&n) = extra {
            return Err(GraphError::UnknownNode(n));
        }
        Ok(backbone)
    }

    /// Providers used by nodes with a non-empty template.
    pub fn providers_in_use(&self) -> BTreeSet<&ProviderId> {
        self.arch
            .iter()
            .filter(|(_, t)| !t.is_empty())
            .filter_map(|(n, _)| self.provider.get(n))
            .collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("design serializes")
    }
}
