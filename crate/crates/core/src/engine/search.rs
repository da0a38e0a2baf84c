use std::collections::BTreeSet;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::controller::{ControllerPolicy, Head, Trajectory};
use super::{pareto_front, sample_reward, Baseline, EngineError, EpisodeRecord, SearchConfig};
use crate::arch::TemplateId;
use crate::data::Dataset;
use crate::fleet::{Orchestrator, Transport};
use crate::graph::{accuracy, build_backbone, materialize, train, GraphError, ModelDesign, NodeId, ProviderId};
use crate::security::{sec_mec, submodel_accuracies};
use crate::seed;

/// Proposes designs and learns from their rewards.
pub trait Sampler {
    fn sample(&mut self, seed: u64) -> (ModelDesign, Option<Trajectory>);

    /// Receives the episode's trajectories and its mean reward.
    fn update(&mut self, trajectories: &[Trajectory], reward: f64) -> Result<(), EngineError>;
}

fn decode(depth: usize, providers: &[ProviderId], heads: &[Head], actions: &[usize], pinned: Option<&ProviderId>) -> ModelDesign {
    let backbone = build_backbone(depth).expect("validated depth");
    let mut design = ModelDesign {
        backbone_depth: depth,
        arch: Default::default(),
        provider: Default::default(),
    };
    let mut it = heads.iter().zip(actions);
    for n in backbone.nodes() {
        let (_, &a) = it.next().expect("one arch decision per node");
        design.arch.insert(n, TemplateId::new(a as u8).expect("arch head has 6 outputs"));
        let provider = match pinned {
            Some(p) => p.clone(),
            None => {
                let (_, &p) = it.next().expect("one provider decision per node");
                providers[p].clone()
            }
        };
        design.provider.insert(n, provider);
    }
    design
}

/// Decision order for a depth-`depth` tree: node 1 first, arch before provider.
pub fn rollout_heads(depth: usize, with_providers: bool) -> Vec<Head> {
    let nodes = (1usize << depth) - 1;
    (0..nodes)
        .flat_map(|_| {
            if with_providers {
                vec![Head::Arch, Head::Provider]
            } else {
                vec![Head::Arch]
            }
        })
        .collect()
}

/// REINFORCE step on `reward · Σ log π(aₜ)` averaged over `trajectories`,
/// clipped and applied with RMSProp. A non-finite gradient leaves the policy
/// untouched.
pub fn update_policy(
    policy: &mut ControllerPolicy,
    trajectories: &[Trajectory],
    reward: f64,
    lr: f64,
    decay: f64,
    clip: f64,
) -> Result<(), EngineError> {
    let mut grad = vec![0.0; policy.params().len()];
    let share = reward / trajectories.len().max(1) as f64;
    for t in trajectories {
        let (_, g) = policy.log_prob_grad(&t.heads, &t.actions);
        for (acc, gi) in grad.iter_mut().zip(g) {
            *acc += share * gi;
        }
    }
    if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
        return Err(EngineError::Update(format!("non-finite gradient at parameter {bad}")));
    }
    policy.apply_gradient(&grad, lr, decay, clip);
    Ok(())
}

/// The LSTM controller choosing every node's architecture and provider.
#[derive(Debug, Clone)]
pub struct ControllerSampler {
    pub policy: ControllerPolicy,
    depth: usize,
    providers: Vec<ProviderId>,
    heads: Vec<Head>,
    pinned: Option<ProviderId>,
    lr: f64,
    decay: f64,
    clip: f64,
}

impl ControllerSampler {
    pub fn new(config: &SearchConfig) -> Self {
        let providers = config.fleet.provider_ids();
        ControllerSampler {
            policy: ControllerPolicy::new(providers.len(), seed::derive(config.seed, u64::MAX)),
            depth: config.backbone_depth,
            heads: rollout_heads(config.backbone_depth, true),
            providers,
            pinned: None,
            lr: config.controller_lr,
            decay: config.rmsprop_decay,
            clip: config.grad_clip,
        }
    }
}

impl Sampler for ControllerSampler {
    fn sample(&mut self, seed: u64) -> (ModelDesign, Option<Trajectory>) {
        let t = self.policy.sample(&self.heads, seed);
        let d = decode(self.depth, &self.providers, &t.heads, &t.actions, self.pinned.as_ref());
        (d, Some(t))
    }

    fn update(&mut self, trajectories: &[Trajectory], reward: f64) -> Result<(), EngineError> {
        update_policy(&mut self.policy, trajectories, reward, self.lr, self.decay, self.clip)
    }
}

/// Controller over architectures only; every node goes to one provider.
#[derive(Debug, Clone)]
pub struct SingleProviderSampler(ControllerSampler);

impl SingleProviderSampler {
    pub fn new(config: &SearchConfig, provider: ProviderId) -> Self {
        let mut inner = ControllerSampler::new(config);
        inner.heads = rollout_heads(config.backbone_depth, false);
        inner.pinned = Some(provider);
        SingleProviderSampler(inner)
    }

    pub fn policy(&self) -> &ControllerPolicy {
        &self.0.policy
    }
}

impl Sampler for SingleProviderSampler {
    fn sample(&mut self, seed: u64) -> (ModelDesign, Option<Trajectory>) {
        self.0.sample(seed)
    }

    fn update(&mut self, trajectories: &[Trajectory], reward: f64) -> Result<(), EngineError> {
        self.0.update(trajectories, reward)
    }
}

/// Uniform sampling over the same decision space.
#[derive(Debug, Clone)]
pub struct RandomSampler {
    depth: usize,
    providers: Vec<ProviderId>,
}

impl RandomSampler {
    pub fn new(config: &SearchConfig) -> Self {
        RandomSampler {
            depth: config.backbone_depth,
            providers: config.fleet.provider_ids(),
        }
    }
}

impl Sampler for RandomSampler {
    fn sample(&mut self, seed: u64) -> (ModelDesign, Option<Trajectory>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heads = rollout_heads(self.depth, true);
        let actions: Vec<usize> = heads
            .iter()
            .map(|h| match h {
                Head::Arch => rng.random_range(0..TemplateId::COUNT),
                Head::Provider => rng.random_range(0..self.providers.len()),
            })
            .collect();
        (decode(self.depth, &self.providers, &heads, &actions, None), None)
    }

    fn update(&mut self, _: &[Trajectory], _: f64) -> Result<(), EngineError> {
        Ok(())
    }
}

/// Accuracy and security of one design.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub acc: f64,
    pub sec_acc: f64,
    pub sec_mec: f64,
    pub n_nodes: usize,
    pub n_providers: usize,
    pub model: Option<crate::graph::ModelFile>,
}

impl Evaluation {
    /// What a design with no live node scores.
    pub fn empty() -> Self {
        Evaluation {
            acc: 0.0,
            sec_acc: 0.0,
            sec_mec: 0.0,
            n_nodes: 0,
            n_providers: 0,
            model: None,
        }
    }
}

pub trait Evaluator {
    fn evaluate(&mut self, design: &ModelDesign, seed: u64) -> Result<Evaluation, EngineError>;
}

/// Trains each design, then measures it on the provider fleet.
pub struct QuantumEvaluator<T> {
    pub trainset: Dataset,
    pub testset: Dataset,
    pub orchestrator: Orchestrator<T>,
    pub train: crate::graph::TrainConfig,
    pub workers: usize,
}

impl<T: Transport> Evaluator for QuantumEvaluator<T> {
    fn evaluate(&mut self, design: &ModelDesign, seed: u64) -> Result<Evaluation, EngineError> {
        let model = match materialize(design, seed) {
            Ok(m) => m,
            Err(GraphError::EmptyModel | GraphError::NoDataPath) => return Ok(Evaluation::empty()),
            Err(e) => return Err(e.into()),
        };
        let model = train(&model, &self.trainset, &self.train, seed)?;
        let n_providers = model.providers().len();
        let acc = accuracy(&model, &self.testset, &self.orchestrator, seed)?;
        let subs = submodel_accuracies(&model, &self.testset, &self.orchestrator, seed, self.workers)?;
        let accs: Vec<f64> = subs.iter().map(|s| s.acc).collect();
        let sec_acc = accs.iter().copied().fold(0.0, f64::max);
        // A model that never classifies correctly carries no security signal.
        let sec = if acc > 0.0 { sec_mec(acc, &accs)? } else { 0.0 };
        Ok(Evaluation {
            acc,
            sec_acc,
            sec_mec: sec,
            n_nodes: model.n_nodes(),
            n_providers,
            model: Some(model.to_file()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub records: Vec<EpisodeRecord>,
    pub best_acc: EpisodeRecord,
    pub best_sec: EpisodeRecord,
    pub pareto: Vec<EpisodeRecord>,
}

/// Sample, evaluate, reward and update for `config.episodes` episodes.
pub fn run_pipeline(
    config: &SearchConfig,
    sampler: &mut dyn Sampler,
    evaluator: &mut dyn Evaluator,
) -> Result<SearchOutcome, EngineError> {
    config.validate()?;
    let mut baseline = Baseline::new(config.baseline_decay);
    let mut records = Vec::with_capacity(config.episodes * config.samples_per_episode);
    for episode in 0..config.episodes {
        let ep_seed = seed::derive(config.seed, episode as u64);
        let mut trajectories = Vec::new();
        let mut evals = Vec::new();
        for k in 0..config.samples_per_episode as u64 {
            let (design, t) = sampler.sample(seed::derive(ep_seed, 2 * k));
            let e = evaluator.evaluate(&design, seed::derive(ep_seed, 2 * k + 1))?;
            trajectories.extend(t);
            evals.push((design, e));
        }
        let b = baseline.value().unwrap_or(evals[0].1.acc);
        let mut total = 0.0;
        for (design, e) in evals {
            let r = sample_reward(e.acc, e.sec_mec, b, config.lambda);
            total += r;
            baseline.observe(e.acc);
            info!(
                "episode {episode}: acc {:.4} sec_mec {:.4} reward {r:.4} nodes {} providers {}",
                e.acc, e.sec_mec, e.n_nodes, e.n_providers
            );
            records.push(EpisodeRecord {
                episode,
                design,
                acc: e.acc,
                sec_mec: e.sec_mec,
                sec_acc: e.sec_acc,
                reward: r,
                baseline: b,
                n_nodes: e.n_nodes,
                n_providers: e.n_providers,
                model: e.model,
            });
        }
        let mean = total / config.samples_per_episode as f64;
        if let Err(e) = sampler.update(&trajectories, mean) {
            warn!("episode {episode}: {e}");
        }
    }
    let pick = |key: &dyn Fn(&EpisodeRecord) -> (f64, f64)| {
        records
            .iter()
            .reduce(|best, r| {
                let (a, b) = (key(r), key(best));
                if a.0 > b.0 || (a.0 == b.0 && a.1 > b.1) {
                    r
                } else {
                    best
                }
            })
            .expect("at least one episode")
            .clone()
    };
    let best_acc = pick(&|r| (r.acc, r.sec_mec));
    let best_sec = pick(&|r| (r.sec_mec, r.acc));
    let pareto = pareto_front(&records);
    Ok(SearchOutcome {
        records,
        best_acc,
        best_sec,
        pareto,
    })
}

pub fn run_search(config: &SearchConfig, evaluator: &mut dyn Evaluator) -> Result<SearchOutcome, EngineError> {
    run_pipeline(config, &mut ControllerSampler::new(config), evaluator)
}

pub fn run_random_search(config: &SearchConfig, evaluator: &mut dyn Evaluator) -> Result<SearchOutcome, EngineError> {
    run_pipeline(config, &mut RandomSampler::new(config), evaluator)
}

pub fn run_single_provider_nas(
    config: &SearchConfig,
    provider: &ProviderId,
    evaluator: &mut dyn Evaluator,
) -> Result<SearchOutcome, EngineError> {
    config.fleet.provider(provider)?;
    run_pipeline(config, &mut SingleProviderSampler::new(config, provider.clone()), evaluator)
}

/// Live nodes and distinct providers of a design, or `None` if nothing survives pruning.
pub(crate) fn live_shape(design: &ModelDesign) -> Option<(BTreeSet<NodeId>, usize)> {
    let m = materialize(design, 0).ok()?;
    let nodes: BTreeSet<NodeId> = m.topo_order().iter().copied().collect();
    Some((nodes, m.providers().len()))
}
