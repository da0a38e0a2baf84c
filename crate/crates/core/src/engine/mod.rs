//! Joint search over per-node architectures and provider placements.

mod controller;
mod search;
mod synthetic;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use controller::{ControllerPolicy, Head, Trajectory, EMBED, HIDDEN};
pub use search::{
    rollout_heads, run_pipeline, run_random_search, run_search, run_single_provider_nas, ControllerSampler, Evaluation, Evaluator,
    QuantumEvaluator, RandomSampler, Sampler, SearchOutcome, SingleProviderSampler, update_policy,
};
pub use synthetic::SyntheticReward;

use crate::arch::TemplateId;
use crate::data::DatasetName;
use crate::fleet::FleetConfig;
use crate::graph::{GraphError, ModelDesign, ModelFile, TrainConfig};
use crate::qsim::Shots;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("policy update skipped: {0}")]
    Update(String),
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Security(#[from] crate::security::SecurityError),
    #[error(transparent)]
    Fleet(#[from] crate::fleet::FleetError),
    #[error("writing results: {0}")]
    Output(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub episodes: usize,
    pub samples_per_episode: usize,
    /// Weight of the security term in the reward.
    pub lambda: f64,
    pub baseline_decay: f64,
    pub rmsprop_decay: f64,
    pub controller_lr: f64,
    /// Global gradient-norm bound applied before each policy step.
    pub grad_clip: f64,
    pub backbone_depth: usize,
    pub fleet: FleetConfig,
    pub dataset: DatasetName,
    pub shots: Shots,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            episodes: 200,
            samples_per_episode: 1,
            lambda: 0.5,
            baseline_decay: 0.95,
            rmsprop_decay: 0.9,
            controller_lr: 0.99,
            grad_clip: 5.0,
            backbone_depth: 3,
            fleet: FleetConfig::default(),
            dataset: DatasetName::Mnist2,
            shots: Shots::default(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.into()));
        if self.episodes == 0 || self.samples_per_episode == 0 {
            return bad("episodes and samples_per_episode must be at least 1");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) || !(0.0..1.0).contains(&self.rmsprop_decay) {
            return bad("decay rates must lie in [0, 1)");
        }
        if self.fleet.providers.is_empty() {
            return bad("fleet has no providers");
        }
        self.fleet.validate()?;
        crate::graph::build_backbone(self.backbone_depth)?;
        Ok(())
    }
}

/// Number of (architecture, provider) assignments over a full tree.
pub fn design_space_size(depth: usize, n_providers: usize) -> u128 {
    let nodes = (1u32 << depth) - 1;
    ((TemplateId::COUNT * n_providers) as u128).pow(nodes)
}

/// Mean over records of `acc − b + λ·sec_mec`.
pub fn reward(records: &[(f64, f64)], b: f64, lambda: f64) -> f64 {
    assert!(!records.is_empty(), "reward of no records");
    records.iter().map(|&(acc, sec)| sample_reward(acc, sec, b, lambda)).sum::<f64>() / records.len() as f64
}

/// Reward term of one sample.
pub fn sample_reward(acc: f64, sec_mec: f64, b: f64, lambda: f64) -> f64 {
    acc - b + lambda * sec_mec
}

pub fn update_baseline(b: f64, acc: f64, decay: f64) -> f64 {
    decay * b + (1.0 - decay) * acc
}

/// Exponential moving average of observed accuracies; the first observation
/// sets it outright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    value: Option<f64>,
    decay: f64,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Baseline { value: None, decay }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn observe(&mut self, acc: f64) -> f64 {
        let b = match self.value {
            None => acc,
            Some(b) => update_baseline(b, acc, self.decay),
        };
        self.value = Some(b);
        b
    }
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub design: ModelDesign,
    pub acc: f64,
    pub sec_mec: f64,
    pub sec_acc: f64,
    pub reward: f64,
    /// Baseline the reward was computed against.
    pub baseline: f64,
    pub n_nodes: usize,
    pub n_providers: usize,
    #[serde(skip)]
    pub model: Option<ModelFile>,
}

impl EpisodeRecord {
    /// `acc + λ·sec_mec`: the reward before the baseline is subtracted.
    pub fn objective(&self, lambda: f64) -> f64 {
        self.acc + lambda * self.sec_mec
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    episode: usize,
    acc: f64,
    sec_mec: f64,
    sec_acc: f64,
    reward: f64,
    baseline: f64,
    n_nodes: usize,
    n_providers: usize,
    design_json: String,
}

/// Records not dominated in (acc, sec_mec), one per distinct design, by
/// descending accuracy.
pub fn pareto_front(records: &[EpisodeRecord]) -> Vec<EpisodeRecord> {
    let dominated = |r: &EpisodeRecord| {
        records.iter().any(|o| {
            o.acc >= r.acc && o.sec_mec >= r.sec_mec && (o.acc > r.acc || o.sec_mec > r.sec_mec)
        })
    };
    let mut seen = BTreeSet::new();
    let mut front: Vec<EpisodeRecord> = records
        .iter()
        .filter(|r| !dominated(r))
        .filter(|r| seen.insert(r.design.to_json_string()))
        .cloned()
        .collect();
    front.sort_by(|a, b| b.acc.total_cmp(&a.acc).then(a.sec_mec.total_cmp(&b.sec_mec)));
    front
}

pub fn write_episodes_csv(records: &[EpisodeRecord], path: &Path) -> Result<(), EngineError> {
    let out = |e: &dyn std::fmt::Display| EngineError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(|e| out(&e))?;
    for r in records {
        w.serialize(CsvRow {
            episode: r.episode,
            acc: r.acc,
            sec_mec: r.sec_mec,
            sec_acc: r.sec_acc,
            reward: r.reward,
            baseline: r.baseline,
            n_nodes: r.n_nodes,
            n_providers: r.n_providers,
            design_json: r.design.to_json_string(),
        })
        .map_err(|e| out(&e))?;
    }
    w.flush().map_err(|e| out(&e))
}

pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRecord>, EngineError> {
    let out = |e: &dyn std::fmt::Display| EngineError::Output(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| out(&e))?;
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(|e| out(&e))?;
            Ok(EpisodeRecord {
                episode: row.episode,
                design: serde_json::from_str(&row.design_json).map_err(|e| out(&e))?,
                acc: row.acc,
                sec_mec: row.sec_mec,
                sec_acc: row.sec_acc,
                reward: row.reward,
                baseline: row.baseline,
                n_nodes: row.n_nodes,
                n_providers: row.n_providers,
                model: None,
            })
        })
        .collect()
}

/// Writes `episodes.csv`, `best_acc.json`, `best_sec.json` and `pareto.json`.
/// The two best files hold the trained model when one exists.
pub fn write_outputs(outcome: &SearchOutcome, dir: &Path) -> Result<(), EngineError> {
    let out = |e: &dyn std::fmt::Display| EngineError::Output(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(|e| out(&e))?;
    write_episodes_csv(&outcome.records, &dir.join("episodes.csv"))?;
    let best = |r: &EpisodeRecord| match &r.model {
        Some(m) => serde_json::to_string_pretty(m),
        None => serde_json::to_string_pretty(&r.design),
    };
    for (name, r) in [("best_acc.json", &outcome.best_acc), ("best_sec.json", &outcome.best_sec)] {
        fs::write(dir.join(name), best(r).map_err(|e| out(&e))? + "\n").map_err(|e| out(&e))?;
    }
    let designs: Vec<&ModelDesign> = outcome.pareto.iter().map(|r| &r.design).collect();
    let json = serde_json::to_string_pretty(&designs).map_err(|e| out(&e))?;
    fs::write(dir.join("pareto.json"), json + "\n").map_err(|e| out(&e))
}
