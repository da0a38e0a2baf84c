use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::search::{live_shape, Evaluation, Evaluator};
use super::EngineError;
use crate::arch::TemplateId;
use crate::graph::{ModelDesign, ProviderId};
use crate::seed;

/// A fixed, seeded lookup from design to (accuracy, SecMec) with no quantum
/// training behind it.
///
/// Each live node contributes a per-(node, template) score to accuracy and a
/// per-(node, provider) score to security; spreading nodes over providers
/// raises security, and a single provider scores exactly zero. A per-design
/// jitter keyed on the full design makes the table irregular.
#[derive(Debug, Clone)]
pub struct SyntheticReward {
    seed: u64,
    providers: Vec<ProviderId>,
    arch_score: Vec<[f64; TemplateId::COUNT]>,
    provider_score: Vec<Vec<f64>>,
}

impl SyntheticReward {
    pub fn new(depth: usize, providers: &[ProviderId], seed: u64) -> Self {
        let nodes = (1usize << depth) - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let arch_score = (0..nodes)
            .map(|_| std::array::from_fn(|_| normal.sample(&mut rng)))
            .collect();
        let provider_score = (0..nodes)
            .map(|_| (0..providers.len()).map(|_| 0.5 * normal.sample(&mut rng)).collect())
            .collect();
        SyntheticReward {
            seed,
            providers: providers.to_vec(),
            arch_score,
            provider_score,
        }
    }

    fn code(&self, design: &ModelDesign) -> u64 {
        design.arch.iter().fold(0u64, |acc, (n, t)| {
            let p = self.providers.iter().position(|q| q == &design.provider[n]).unwrap_or(0);
            acc.wrapping_mul((TemplateId::COUNT * self.providers.len()) as u64)
                .wrapping_add((t.index() * self.providers.len() + p) as u64)
        })
    }

    fn jitter(&self, design: &ModelDesign, salt: u64) -> f64 {
        let h = seed::derive(seed::derive(self.seed, self.code(design)), salt);
        (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }

    pub fn score(&self, design: &ModelDesign) -> Evaluation {
        let Some((live, n_providers)) = live_shape(design) else {
            return Evaluation::empty();
        };
        let mut s_arch = 0.0;
        let mut s_prov = 0.0;
        let mut counts = vec![0usize; self.providers.len()];
        for n in &live {
            let i = n.0 - 1;
            s_arch += self.arch_score[i][design.arch[n].index()];
            let p = self.providers.iter().position(|q| q == &design.provider[n]).unwrap_or(0);
            s_prov += self.provider_score[i][p];
            counts[p] += 1;
        }
        let share = *counts.iter().max().expect("providers") as f64 / live.len() as f64;
        let acc = (0.55 + 0.4 * (s_arch / 2.0).tanh() + 0.06 * self.jitter(design, 0)).clamp(0.0, 1.0);
        let sec_mec = ((1.0 - share) * (0.7 + 0.3 * s_prov.tanh() + 0.1 * self.jitter(design, 1))).min(1.0);
        Evaluation {
            acc,
            sec_acc: acc * (1.0 - sec_mec),
            sec_mec,
            n_nodes: live.len(),
            n_providers,
            model: None,
        }
    }
}

impl Evaluator for SyntheticReward {
    fn evaluate(&mut self, design: &ModelDesign, _seed: u64) -> Result<Evaluation, EngineError> {
        Ok(self.score(design))
    }
}
