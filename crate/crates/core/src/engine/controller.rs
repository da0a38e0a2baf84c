use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::TemplateId;

/// LSTM hidden units.
pub const HIDDEN: usize = 35;
/// Width of the previous-choice embeddings.
pub const EMBED: usize = 8;
const GATES: usize = 4 * HIDDEN;
const Z: usize = EMBED + HIDDEN;

/// Which output head a rollout step reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Arch,
    Provider,
}

/// A sampled sequence of decisions and their log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub heads: Vec<Head>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
}

impl Trajectory {
    pub fn total_log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    n_providers: usize,
    w: usize,
    b: usize,
    arch_embed: usize,
    prov_embed: usize,
    arch_w: usize,
    arch_b: usize,
    prov_w: usize,
    prov_b: usize,
    len: usize,
}

impl Layout {
    fn new(n_providers: usize) -> Self {
        let arch = TemplateId::COUNT;
        let w = 0;
        let b = w + GATES * Z;
        let arch_embed = b + GATES;
        let prov_embed = arch_embed + arch * EMBED;
        let arch_w = prov_embed + n_providers * EMBED;
        let arch_b = arch_w + arch * HIDDEN;
        let prov_w = arch_b + arch;
        let prov_b = prov_w + n_providers * HIDDEN;
        Layout {
            n_providers,
            w,
            b,
            arch_embed,
            prov_embed,
            arch_w,
            arch_b,
            prov_w,
            prov_b,
            len: prov_b + n_providers,
        }
    }

    fn width(&self, head: Head) -> usize {
        match head {
            Head::Arch => TemplateId::COUNT,
            Head::Provider => self.n_providers,
        }
    }

    fn head_w(&self, head: Head) -> usize {
        match head {
            Head::Arch => self.arch_w,
            Head::Provider => self.prov_w,
        }
    }

    fn head_b(&self, head: Head) -> usize {
        match head {
            Head::Arch => self.arch_b,
            Head::Provider => self.prov_b,
        }
    }

    fn embed(&self, head: Head, choice: usize) -> usize {
        match head {
            Head::Arch => self.arch_embed + choice * EMBED,
            Head::Provider => self.prov_embed + choice * EMBED,
        }
    }
}

/// Single-layer LSTM controller with an architecture head and a provider head.
///
/// Every parameter lives in one flat vector; the RMSProp accumulators have
/// the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerPolicy {
    n_providers: usize,
    params: Vec<f64>,
    rms: Vec<f64>,
}

struct StepCache {
    z: [f64; Z],
    c_prev: [f64; HIDDEN],
    i: [f64; HIDDEN],
    f: [f64; HIDDEN],
    g: [f64; HIDDEN],
    o: [f64; HIDDEN],
    tanh_c: [f64; HIDDEN],
    h: [f64; HIDDEN],
    probs: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl ControllerPolicy {
    /// LSTM weights and embeddings drawn from U[−0.1, 0.1]; output heads zero,
    /// so a fresh policy samples uniformly.
    pub fn new(n_providers: usize, seed: u64) -> Self {
        assert!(n_providers >= 1, "at least one provider");
        let layout = Layout::new(n_providers);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.len];
        for p in &mut params[..layout.arch_w] {
            *p = rng.random_range(-0.1..0.1);
        }
        ControllerPolicy {
            n_providers,
            params,
            rms: vec![0.0; layout.len],
        }
    }

    fn layout(&self) -> Layout {
        Layout::new(self.n_providers)
    }

    pub fn n_providers(&self) -> usize {
        self.n_providers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn step(&self, x: &[f64; EMBED], h: &[f64; HIDDEN], c: &[f64; HIDDEN], head: Head) -> StepCache {
        let l = self.layout();
        let p = &self.params;
        let mut z = [0.0; Z];
        z[..EMBED].copy_from_slice(x);
        z[EMBED..].copy_from_slice(h);
        let mut a = [0.0; GATES];
        for (r, ar) in a.iter_mut().enumerate() {
            let row = &p[l.w + r * Z..l.w + (r + 1) * Z];
            *ar = p[l.b + r] + row.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>();
        }
        let mut s = StepCache {
            z,
            c_prev: *c,
            i: [0.0; HIDDEN],
            f: [0.0; HIDDEN],
            g: [0.0; HIDDEN],
            o: [0.0; HIDDEN],
            tanh_c: [0.0; HIDDEN],
            h: [0.0; HIDDEN],
            probs: Vec::new(),
        };
        for k in 0..HIDDEN {
            s.i[k] = sigmoid(a[k]);
            s.f[k] = sigmoid(a[HIDDEN + k]);
            s.g[k] = a[2 * HIDDEN + k].tanh();
            s.o[k] = sigmoid(a[3 * HIDDEN + k]);
            let cn = s.f[k] * c[k] + s.i[k] * s.g[k];
            s.tanh_c[k] = cn.tanh();
            s.h[k] = s.o[k] * s.tanh_c[k];
        }
        let width = l.width(head);
        let (hw, hb) = (l.head_w(head), l.head_b(head));
        let logits: Vec<f64> = (0..width)
            .map(|j| {
                let row = &p[hw + j * HIDDEN..hw + (j + 1) * HIDDEN];
                p[hb + j] + row.iter().zip(&s.h).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        s.probs = softmax(&logits);
        s
    }

    /// Runs the LSTM over `heads`. Actions are sampled from `rng` unless
    /// `forced` supplies them.
    fn rollout(&self, heads: &[Head], forced: Option<&[usize]>, rng: Option<&mut ChaCha8Rng>) -> (Vec<usize>, Vec<StepCache>) {
        let l = self.layout();
        let mut rng = rng;
        let mut h = [0.0; HIDDEN];
        let mut c = [0.0; HIDDEN];
        let mut x = [0.0; EMBED];
        let mut actions = Vec::with_capacity(heads.len());
        let mut caches = Vec::with_capacity(heads.len());
        for (t, &head) in heads.iter().enumerate() {
            let s = self.step(&x, &h, &c, head);
            let a = match (forced, rng.as_deref_mut()) {
                (Some(f), _) => f[t],
                (None, Some(r)) => sample_index(&s.probs, r),
                (None, None) => unreachable!("rollout needs actions or an rng"),
            };
            let e = l.embed(head, a);
            x.copy_from_slice(&self.params[e..e + EMBED]);
            h = s.h;
            for k in 0..HIDDEN {
                c[k] = s.f[k] * s.c_prev[k] + s.i[k] * s.g[k];
            }
            actions.push(a);
            caches.push(s);
        }
        (actions, caches)
    }

    /// Samples one decision per entry of `heads`.
    pub fn sample(&self, heads: &[Head], seed: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (actions, caches) = self.rollout(heads, None, Some(&mut rng));
        let log_probs = caches.iter().zip(&actions).map(|(s, &a)| s.probs[a].ln()).collect();
        Trajectory {
            heads: heads.to_vec(),
            actions,
            log_probs,
        }
    }

    /// Action distributions along a fixed trajectory.
    pub fn distributions(&self, heads: &[Head], actions: &[usize]) -> Vec<Vec<f64>> {
        self.rollout(heads, Some(actions), None).1.into_iter().map(|s| s.probs).collect()
    }

    pub fn log_prob(&self, heads: &[Head], actions: &[usize]) -> f64 {
        self.distributions(heads, actions)
            .iter()
            .zip(actions)
            .map(|(p, &a)| p[a].ln())
            .sum()
    }

    /// Σ log π(aₜ) along the trajectory and its gradient over [`Self::params`],
    /// by backpropagation through time.
    pub fn log_prob_grad(&self, heads: &[Head], actions: &[usize]) -> (f64, Vec<f64>) {
        let l = self.layout();
        let p = &self.params;
        let (_, caches) = self.rollout(heads, Some(actions), None);
        let mut grad = vec![0.0; l.len];
        let mut total = 0.0;
        let mut dh_next = [0.0; HIDDEN];
        let mut dc_next = [0.0; HIDDEN];
        for t in (0..caches.len()).rev() {
            let s = &caches[t];
            let (head, a) = (heads[t], actions[t]);
            total += s.probs[a].ln();

            let (hw, hb) = (l.head_w(head), l.head_b(head));
            let mut dh = dh_next;
            for (j, &pj) in s.probs.iter().enumerate() {
                let dl = if j == a { 1.0 } else { 0.0 } - pj;
                grad[hb + j] += dl;
                for k in 0..HIDDEN {
                    grad[hw + j * HIDDEN + k] += dl * s.h[k];
                    dh[k] += dl * p[hw + j * HIDDEN + k];
                }
            }

            let mut da = [0.0; GATES];
            for k in 0..HIDDEN {
                let dc = dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
                let d_o = dh[k] * s.tanh_c[k];
                da[k] = dc * s.g[k] * s.i[k] * (1.0 - s.i[k]);
                da[HIDDEN + k] = dc * s.c_prev[k] * s.f[k] * (1.0 - s.f[k]);
                da[2 * HIDDEN + k] = dc * s.i[k] * (1.0 - s.g[k] * s.g[k]);
                da[3 * HIDDEN + k] = d_o * s.o[k] * (1.0 - s.o[k]);
                dc_next[k] = dc * s.f[k];
            }
            let mut dz = [0.0; Z];
            for (r, &dar) in da.iter().enumerate() {
                grad[l.b + r] += dar;
                let base = l.w + r * Z;
                for m in 0..Z {
                    grad[base + m] += dar * s.z[m];
                    dz[m] += dar * p[base + m];
                }
            }
            dh_next.copy_from_slice(&dz[EMBED..]);
            if t > 0 {
                let e = l.embed(heads[t - 1], actions[t - 1]);
                for m in 0..EMBED {
                    grad[e + m] += dz[m];
                }
            }
        }
        (total, grad)
    }

    /// One RMSProp ascent step on `grad`, which is clipped to a global norm
    /// of `clip` first. Returns the pre-clip norm.
    pub fn apply_gradient(&mut self, grad: &[f64], lr: f64, decay: f64, clip: f64) -> f64 {
        const EPS: f64 = 1e-8;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > clip { clip / norm } else { 1.0 };
        for ((p, r), g) in self.params.iter_mut().zip(&mut self.rms).zip(grad) {
            let g = g * scale;
            *r = decay * *r + (1.0 - decay) * g * g;
            *p += lr * g / (r.sqrt() + EPS);
        }
        norm
    }
}
