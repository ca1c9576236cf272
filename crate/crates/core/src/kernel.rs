//! Within-population proposal machinery: the large jump, the local
//! optimization chain, the final randomization and its proposal density.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::Model;
use crate::operators::Population;
use crate::target::Target;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("randomization exceeded the size cap in all {0} attempts")]
    RandomizeExhausted(usize),
    #[error("invalid kernel configuration: {0}")]
    Invalid(String),
}

/// Inclusion mask over a population.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask(Vec<bool>);

impl Mask {
    pub fn empty(len: usize) -> Self {
        Mask(vec![false; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Mask(bits)
    }

    pub fn from_positions(len: usize, positions: &[usize]) -> Self {
        let mut bits = vec![false; len];
        for &p in positions {
            bits[p] = true;
        }
        Mask(bits)
    }

    /// Mask of `model` within `pop`, or `None` if some feature is missing.
    pub fn of_model(model: &Model, pop: &Population) -> Option<Self> {
        let mut bits = vec![false; pop.len()];
        for f in model.features() {
            bits[pop.position(f.key())?] = true;
        }
        Some(Mask(bits))
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut m = self.clone();
        m.flip(i);
        m
    }

    pub fn hamming(&self, other: &Mask) -> usize {
        assert_eq!(self.len(), other.len(), "masks over different populations");
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn to_model(&self, pop: &Population) -> Model {
        Model::new(
            self.0
                .iter()
                .zip(pop.features())
                .filter(|(b, _)| **b)
                .map(|(_, f)| f.clone())
                .collect(),
        )
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalMove {
    Greedy,
    Metropolis,
}

/// How the randomization density enters the acceptance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QrRatio {
    /// Full density of the size-capped independent-flip kernel.
    Exact,
    /// `rho^(d_back - d_fwd)` only; ignores the `(1 - rho)` factors and the
    /// size-cap normalizer.
    Hamming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalKernelConfig {
    pub jump_prob: f64,
    pub local_steps: usize,
    pub local_move: LocalMove,
    pub randomize_prob: f64,
    pub randomize_retries: usize,
    pub qr_ratio: QrRatio,
}

impl Default for LocalKernelConfig {
    fn default() -> Self {
        LocalKernelConfig {
            jump_prob: 0.35,
            local_steps: 15,
            local_move: LocalMove::Greedy,
            randomize_prob: 0.05,
            randomize_retries: 50,
            qr_ratio: QrRatio::Exact,
        }
    }
}

impl LocalKernelConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        if !(0.0..=1.0).contains(&self.jump_prob) {
            return Err(KernelError::Invalid("jump_prob must lie in [0, 1]".into()));
        }
        if !(self.randomize_prob > 0.0 && self.randomize_prob < 0.5) {
            return Err(KernelError::Invalid(
                "randomize_prob must lie in (0, 0.5)".into(),
            ));
        }
        if self.randomize_retries == 0 {
            return Err(KernelError::Invalid(
                "randomize_retries must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn randomizer(&self, max_size: usize) -> Randomizer {
        Randomizer {
            prob: self.randomize_prob,
            max_size,
            retries: self.randomize_retries,
            form: self.qr_ratio,
        }
    }
}

/// Flips each bit independently with probability `jump_prob`, then drops
/// uniformly chosen inclusions until at most `max_size` remain.
pub fn large_jump<R: Rng + ?Sized>(m: &Mask, jump_prob: f64, max_size: usize, rng: &mut R) -> Mask {
    let mut out = m.clone();
    for i in 0..out.len() {
        if rng.random::<f64>() < jump_prob {
            out.flip(i);
        }
    }
    let ones: Vec<usize> = (0..out.len()).filter(|&i| out.get(i)).collect();
    if ones.len() > max_size {
        for idx in rand::seq::index::sample(rng, ones.len(), ones.len() - max_size) {
            out.flip(ones[idx]);
        }
    }
    out
}

/// Result of a local search: the end mask and the number of target
/// evaluations requested.
#[derive(Debug, Clone)]
pub struct LocalSearch {
    pub mask: Mask,
    pub evaluations: usize,
}

/// Runs `local_steps` single-flip moves within `pop`. Greedy mode moves to the
/// best improving neighbour and stops at a local maximum; Metropolis mode
/// proposes a uniform single flip. Every evaluated model lands in the archive.
pub fn local_optimize<R: Rng + ?Sized>(
    start: &Mask,
    pop: &Population,
    target: &Target,
    cfg: &LocalKernelConfig,
    max_size: usize,
    rng: &mut R,
) -> LocalSearch {
    let mut current = start.clone();
    let mut evaluations = 0;
    if cfg.local_steps == 0 || pop.is_empty() {
        return LocalSearch {
            mask: current,
            evaluations,
        };
    }
    let mut eval = |m: &Mask| {
        evaluations += 1;
        target.log_target(&m.to_model(pop))
    };
    let mut current_lt = eval(&current);
    match cfg.local_move {
        LocalMove::Greedy => {
            for _ in 0..cfg.local_steps {
                let mut best: Option<(usize, f64)> = None;
                let ones = current.ones();
                for i in 0..current.len() {
                    if !current.get(i) && ones >= max_size {
                        continue;
                    }
                    let lt = eval(&current.flipped(i));
                    if lt > best.map_or(current_lt, |b| b.1) {
                        best = Some((i, lt));
                    }
                }
                match best {
                    Some((i, lt)) => {
                        current.flip(i);
                        current_lt = lt;
                    }
                    None => break,
                }
            }
        }
        LocalMove::Metropolis => {
            for _ in 0..cfg.local_steps {
                let i = rng.random_range(0..current.len());
                if !current.get(i) && current.ones() >= max_size {
                    continue;
                }
                let cand = current.flipped(i);
                let lt = eval(&cand);
                let log_u = rng.random::<f64>().ln();
                if lt.is_finite() && (log_u < lt - current_lt || !current_lt.is_finite()) {
                    current = cand;
                    current_lt = lt;
                }
            }
        }
    }
    LocalSearch {
        mask: current,
        evaluations,
    }
}

/// Independent per-bit flips with probability `prob`, resampled when the
/// result exceeds `max_size`, for at most `retries` attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Randomizer {
    pub prob: f64,
    pub max_size: usize,
    pub retries: usize,
    pub form: QrRatio,
}

impl Randomizer {
    pub fn sample<R: Rng + ?Sized>(&self, from: &Mask, rng: &mut R) -> Result<Mask, KernelError> {
        for _ in 0..self.retries {
            let mut out = from.clone();
            for i in 0..out.len() {
                if rng.random::<f64>() < self.prob {
                    out.flip(i);
                }
            }
            if out.ones() <= self.max_size {
                return Ok(out);
            }
        }
        Err(KernelError::RandomizeExhausted(self.retries))
    }

    /// Probability that one attempt from a mask of length `len` with
    /// `from_ones` inclusions stays within the size cap.
    pub fn attempt_acceptance(&self, len: usize, from_ones: usize) -> f64 {
        if self.max_size >= len {
            return 1.0;
        }
        let off = binomial_pmf(from_ones, self.prob);
        let on = binomial_pmf(len - from_ones, self.prob);
        let mut z = 0.0;
        for (b, pb) in off.iter().enumerate() {
            for (a, pa) in on.iter().enumerate() {
                if from_ones - b + a <= self.max_size {
                    z += pb * pa;
                }
            }
        }
        z
    }

    /// Log probability of producing a specific mask at Hamming distance
    /// `distance` from a start mask of length `len` with `from_ones`
    /// inclusions (the Hamming form returns only `distance * log prob`).
    pub fn log_density(&self, len: usize, from_ones: usize, distance: usize) -> f64 {
        let hamming = distance as f64 * self.prob.ln();
        match self.form {
            QrRatio::Hamming => hamming,
            QrRatio::Exact => {
                let z = self.attempt_acceptance(len, from_ones);
                let stay = (len - distance) as f64 * (-self.prob).ln_1p();
                let success = if z >= 1.0 {
                    0.0
                } else {
                    // log(1 - (1 - z)^retries) - log z
                    (-(self.retries as f64 * (-z).ln_1p()).exp_m1()).ln() - z.ln()
                };
                hamming + stay + success
            }
        }
    }
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for _ in 0..n {
        let mut next = vec![0.0; pmf.len() + 1];
        for (k, v) in pmf.iter().enumerate() {
            next[k] += v * (1.0 - p);
            next[k + 1] += v * p;
        }
        pmf = next;
    }
    pmf
}

/// The plain Hamming ratio `(d_back - d_fwd) * log rho`.
pub fn hamming_log_ratio(d_back: usize, d_fwd: usize, rho: f64) -> f64 {
    (d_back as f64 - d_fwd as f64) * rho.ln()
}

/// `log q_r(m | S, m_k) - log q_r(m' | S', m'_k)`. `m = None` marks a backward
/// population that does not contain the current model, which has zero reverse
/// probability.
pub fn log_qr_ratio(
    m: Option<&Mask>,
    m_k: &Mask,
    m_prime: &Mask,
    m_prime_k: &Mask,
    randomizer: &Randomizer,
) -> f64 {
    let Some(m) = m else {
        return f64::NEG_INFINITY;
    };
    let back = randomizer.log_density(m_k.len(), m_k.ones(), m.hamming(m_k));
    let fwd = randomizer.log_density(m_prime_k.len(), m_prime_k.ones(), m_prime.hamming(m_prime_k));
    back - fwd
}
