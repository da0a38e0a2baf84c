use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::state::{apply_op, z_from_probabilities, BasisDistribution};
use super::{Circuit, QsimError};

/// Device noise: depolarizing after every gate plus symmetric readout error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseSpec {
    /// Depolarizing probability after each single-qubit gate.
    pub p1: f64,
    /// Depolarizing probability after each two-qubit gate.
    pub p2: f64,
    /// Per-qubit bit-flip probability at measurement.
    pub readout_flip: f64,
}

impl NoiseSpec {
    pub const NOISELESS: NoiseSpec = NoiseSpec {
        p1: 0.0,
        p2: 0.0,
        readout_flip: 0.0,
    };

    pub fn new(p1: f64, p2: f64, readout_flip: f64) -> Result<Self, QsimError> {
        let spec = NoiseSpec { p1, p2, readout_flip };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), QsimError> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.p1) || !unit.contains(&self.p2) {
            return Err(QsimError::InvalidNoise(format!(
                "depolarizing probabilities ({}, {}) outside [0, 1]",
                self.p1, self.p2
            )));
        }
        if !(0.0..=0.5).contains(&self.readout_flip) {
            return Err(QsimError::InvalidNoise(format!(
                "readout flip {} outside [0, 0.5]",
                self.readout_flip
            )));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.p1 == 0.0 && self.p2 == 0.0 && self.readout_flip == 0.0
    }
}

/// How expectations are read out: exactly, or estimated from samples.
///
/// Serialized as the string `"exact"` or a positive integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ShotsRepr", into = "ShotsRepr")]
pub enum Shots {
    Exact,
    Count(u32),
}

impl Shots {
    /// Shot count used for evaluation when none is configured.
    pub const DEFAULT_COUNT: u32 = 8092;
}

impl Default for Shots {
    fn default() -> Self {
        Shots::Count(Self::DEFAULT_COUNT)
    }
}

impl std::str::FromStr for Shots {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("exact") {
            return Ok(Shots::Exact);
        }
        s.parse::<u32>()
            .map(Shots::Count)
            .map_err(|_| format!("expected a shot count or \"exact\", got {s:?}"))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ShotsRepr {
    Count(u32),
    Word(String),
}

impl TryFrom<ShotsRepr> for Shots {
    type Error = String;

    fn try_from(r: ShotsRepr) -> Result<Self, Self::Error> {
        match r {
            ShotsRepr::Count(n) => Ok(Shots::Count(n)),
            ShotsRepr::Word(w) => w.parse(),
        }
    }
}

impl From<Shots> for ShotsRepr {
    fn from(s: Shots) -> Self {
        match s {
            Shots::Exact => ShotsRepr::Word("exact".into()),
            Shots::Count(n) => ShotsRepr::Count(n),
        }
    }
}

/// Density matrix, row-major `2^n × 2^n`.
///
/// Stored so that entry `(i, j)` sits at index `i << n | j`; a gate on qubit
/// `q` then acts on bit `q + n` (row) and, conjugated, on bit `q` (column).
#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    n_qubits: usize,
    rho: Vec<Complex64>,
}

impl MixedState {
    pub fn zero(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let mut rho = vec![Complex64::new(0.0, 0.0); dim * dim];
        rho[0] = Complex64::new(1.0, 0.0);
        MixedState { n_qubits, rho }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.rho[row * self.dim() + col]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// Largest deviation from Hermiticity, `max |ρᵢⱼ − conj(ρⱼᵢ)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    fn apply_gates(&mut self, circuit: &Circuit, noise: &NoiseSpec) {
        let n = self.n_qubits;
        for op in circuit.ops() {
            apply_op(&mut self.rho, op, n, false);
            apply_op(&mut self.rho, op, 0, true);
            let p = if op.kind.arity() == 1 { noise.p1 } else { noise.p2 };
            if p > 0.0 {
                self.depolarize(&op.qubits, p);
            }
        }
    }

    /// `ρ → (1−p)·ρ + p·(I/2^k ⊗ Tr_S ρ)` for the qubit set `S` of size `k`.
    fn depolarize(&mut self, qubits: &[usize], p: f64) {
        let d = self.dim();
        let mask: usize = qubits.iter().map(|&q| 1usize << q).sum();
        let scale = p / (1usize << qubits.len()) as f64;

        let mut reduced = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                if i & mask == j & mask {
                    reduced[(i & !mask) * d + (j & !mask)] += self.rho[i * d + j];
                }
            }
        }
        for v in self.rho.iter_mut() {
            *v *= 1.0 - p;
        }
        for i in 0..d {
            for j in 0..d {
                if i & mask == j & mask {
                    self.rho[i * d + j] += reduced[(i & !mask) * d + (j & !mask)] * scale;
                }
            }
        }
    }
}

impl BasisDistribution for MixedState {
    fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn basis_probabilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i).re).collect()
    }
}

/// Evolves `|0…0⟩⟨0…0|` through `circuit` with gate noise (readout noise is
/// a measurement effect and is not applied here).
pub fn simulate_mixed(circuit: &Circuit, noise: &NoiseSpec) -> MixedState {
    let mut state = MixedState::zero(circuit.n_qubits());
    state.apply_gates(circuit, noise);
    state
}

/// Noisy per-qubit ⟨Zᵢ⟩.
///
/// With [`Shots::Exact`] the readout error scales each expectation by
/// `1 − 2·readout_flip`. Otherwise `shots` full bitstrings are drawn from the
/// final state, each bit flipped with probability `readout_flip`, and the
/// `±1` outcomes averaged. The sampler is seeded by `seed` only.
pub fn simulate_noisy(
    circuit: &Circuit,
    noise: &NoiseSpec,
    shots: Shots,
    seed: u64,
) -> Result<Vec<f64>, QsimError> {
    noise.validate()?;
    if shots == Shots::Count(0) {
        return Err(QsimError::InvalidShots);
    }
    let state = simulate_mixed(circuit, noise);
    let n = state.n_qubits();
    let probs: Vec<f64> = state
        .basis_probabilities()
        .into_iter()
        .map(|p| p.max(0.0))
        .collect();
    match shots {
        Shots::Exact => {
            let attenuation = 1.0 - 2.0 * noise.readout_flip;
            Ok(z_from_probabilities(&probs, n)
                .into_iter()
                .map(|z| attenuation * z)
                .collect())
        }
        Shots::Count(count) => Ok(sample_expectations(&probs, n, count, noise.readout_flip, seed)),
    }
}

fn sample_expectations(probs: &[f64], n: usize, shots: u32, flip: f64, seed: u64) -> Vec<f64> {
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cumulative.push(acc);
    }
    let total = acc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ones = vec![0u32; n];
    for _ in 0..shots {
        let u = rng.random::<f64>() * total;
        let outcome = cumulative
            .partition_point(|&c| c <= u)
            .min(probs.len() - 1);
        for (q, count) in ones.iter_mut().enumerate() {
            let mut bit = outcome >> q & 1 == 1;
            if flip > 0.0 && rng.random::<f64>() < flip {
                bit = !bit;
            }
            if bit {
                *count += 1;
            }
        }
    }
    ones.into_iter()
        .map(|k| 1.0 - 2.0 * f64::from(k) / f64::from(shots))
        .collect()
}
