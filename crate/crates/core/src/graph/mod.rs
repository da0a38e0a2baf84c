//! Backbone trees, design materialization, inference and training.

mod backbone;
mod design;
mod model;
mod plan;
mod train;

use thiserror::Error;

pub use backbone::{build_backbone, BackboneGraph, NodeId, MAX_DEPTH};
pub use design::{ModelDesign, ProviderId};
pub use model::{materialize, Model, ModelFile};
pub use plan::{
    argmax, encode_inputs, sample_seed, Exact, ExecError, LocalDevice, NodeExecutor, NodeInput, NodeRequest, Plan,
    PlanStep, EVAL_CAP,
};
pub use train::{cross_entropy, mean_loss, sample_gradient, train, train_logged, Schedule, TrainConfig, TrainLog};

use crate::arch::ArchError;
use crate::data::Dataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("backbone depth {0} outside 1..={MAX_DEPTH}")]
    InvalidDepth(usize),
    #[error("the root node has the empty template")]
    EmptyModel,
    #[error("no data path from a leaf reaches the root")]
    NoDataPath,
    #[error("design does not cover node {0}")]
    MissingNode(NodeId),
    #[error("node {0} is not part of the backbone or not active")]
    UnknownNode(NodeId),
    #[error("node {node} expects {expected} parameters, got {got}")]
    ParamShape { node: NodeId, expected: usize, got: usize },
    #[error("class count {0} outside 1..=4")]
    ClassCount(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("execution failed: {0}")]
    Execution(#[from] ExecError),
}

/// Logits of one sample: the mean sink output truncated to the model's class count.
pub fn forward(model: &Model, features: &[f64], env: &dyn NodeExecutor, seed: u64) -> Result<Vec<f64>, GraphError> {
    crate::arch::data_encoder(features)?;
    Ok(model.plan().run(features, env, seed)?)
}

/// Accuracy over the first [`EVAL_CAP`] samples of `dataset`.
pub fn accuracy(model: &Model, dataset: &Dataset, env: &dyn NodeExecutor, seed: u64) -> Result<f64, GraphError> {
    if dataset.is_empty() {
        return Err(GraphError::EmptyDataset);
    }
    let plan = model.plan().with_n_classes(dataset.n_classes());
    Ok(plan.accuracy(dataset, env, seed)?)
}
