#![allow(dead_code)]

pub mod props;

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use rgmjmcmc::engine::lane_rng;
use rgmjmcmc::enumerate::{enumerate_posterior, EnumeratedPosterior};
use rgmjmcmc::experiments::gen_tiny_gaussian;
use rgmjmcmc::{
    Chain, Execution, FeatureRef, KernelKind, LocalKernelConfig, Model, ModelId, OperatorConfig,
    Population, SamplerConfig, Target,
};

/// Gaussian target over the base covariates of a small fixture.
pub struct Closed {
    pub target: Arc<Target>,
    pub base: Arc<Vec<FeatureRef>>,
    pub exact: EnumeratedPosterior,
    pub max_size: usize,
}

impl Closed {
    pub fn new(n: usize, q: usize, max_size: usize, seed: u64, gamma: Option<f64>) -> Self {
        let data = Arc::new(gen_tiny_gaussian(n, q, seed));
        let base = Arc::new(data.base_covariates());
        // The enumeration uses its own archive so the chains start cold.
        let oracle = Target::new(data.clone(), gamma);
        let exact = enumerate_posterior(&base, max_size, &oracle, Execution::Sequential).unwrap();
        Closed {
            target: Arc::new(Target::new(data, gamma)),
            base,
            exact,
            max_size,
        }
    }

    pub fn config(&self, kernel: KernelKind, local_steps: usize) -> SamplerConfig {
        SamplerConfig {
            pop_size: self.base.len(),
            max_model_size: self.max_size,
            kernel,
            generation_steps: 250,
            operators: OperatorConfig::default(),
            local: LocalKernelConfig {
                local_steps,
                ..LocalKernelConfig::default()
            },
        }
    }

    pub fn population(&self) -> Population {
        Population::new(self.base.to_vec(), 0).unwrap()
    }

    pub fn chain(&self, cfg: &SamplerConfig, start: Model, rng: ChaCha8Rng) -> Chain {
        Chain::with_model(
            self.target.clone(),
            self.base.clone(),
            cfg.clone(),
            Some(self.population()),
            start,
            rng,
        )
        .unwrap()
    }

    pub fn model(&self, id: &ModelId) -> Model {
        Model::new(
            self.base
                .iter()
                .filter(|f| id.contains(f.key()))
                .cloned()
                .collect(),
        )
    }

    pub fn exact_map(&self) -> HashMap<ModelId, f64> {
        self.exact.as_map()
    }

    /// Draws a model identity from the enumerated posterior.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> ModelId {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for m in &self.exact.models {
            acc += m.probability;
            if u < acc {
                return m.id.clone();
            }
        }
        self.exact.models.last().unwrap().id.clone()
    }

    /// Runs `chains` chains started at posterior draws for one step each and
    /// returns the goodness-of-fit p-value of the end states.
    pub fn invariance_pvalue(&self, kernel: KernelKind, chains: usize, seed: u64) -> f64 {
        let cfg = self.config(kernel, 3);
        let mut starts = lane_rng(seed, u64::MAX);
        let mut counts: HashMap<ModelId, u64> = HashMap::new();
        for c in 0..chains {
            let start = self.model(&self.draw(&mut starts));
            let mut chain = self.chain(&cfg, start, lane_rng(seed, c as u64));
            chain.step(false);
            *counts.entry(chain.model().id().clone()).or_default() += 1;
        }
        let expected: Vec<(ModelId, f64)> = self
            .exact
            .models
            .iter()
            .map(|m| (m.id.clone(), m.probability))
            .collect();
        chi_square_pvalue(&counts, &expected, chains as u64)
    }
}

/// Pearson goodness of fit. Cells with expected count below 5 are pooled.
pub fn chi_square_pvalue(counts: &HashMap<ModelId, u64>, expected: &[(ModelId, f64)], total: u64) -> f64 {
    let total_f = total as f64;
    let mut stat = 0.0;
    let mut cells = 0;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (id, p) in expected {
        let e = p * total_f;
        let o = *counts.get(id).unwrap_or(&0) as f64;
        if e < 5.0 {
            pooled_obs += o;
            pooled_exp += e;
        } else {
            stat += (o - e).powi(2) / e;
            cells += 1;
        }
    }
    let outside: u64 = counts
        .iter()
        .filter(|(id, _)| !expected.iter().any(|(e, _)| e == *id))
        .map(|(_, c)| *c)
        .sum();
    if outside > 0 {
        return 0.0;
    }
    if pooled_exp > 0.0 {
        if pooled_exp < 1e-12 {
            return if pooled_obs > 0.0 { 0.0 } else { chi_tail(stat, cells) };
        }
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    chi_tail(stat, cells)
}

fn chi_tail(stat: f64, cells: usize) -> f64 {
    if cells < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

/// `log P(specific end mask)` of the size-capped randomization, by listing
/// every flip pattern of a length-`len` mask. Only the number of ones in the
/// start mask matters, so the first `ones` bits are taken as set.
pub fn brute_force_log_qr(
    len: usize,
    ones: usize,
    distance: usize,
    prob: f64,
    max_size: usize,
    retries: usize,
) -> f64 {
    assert!(len <= 16, "brute force over 2^len patterns");
    let mut accept = 0.0;
    for pattern in 0u32..(1 << len) {
        let flips = pattern.count_ones() as usize;
        let mut after = 0;
        for i in 0..len {
            let start = i < ones;
            let flipped = pattern >> i & 1 == 1;
            if start != flipped {
                after += 1;
            }
        }
        if after <= max_size {
            accept += prob.powi(flips as i32) * (1.0 - prob).powi((len - flips) as i32);
        }
    }
    let single = prob.powi(distance as i32) * (1.0 - prob).powi((len - distance) as i32);
    let mut total = 0.0;
    let mut miss = 1.0;
    for _ in 0..retries {
        total += miss * single;
        miss *= 1.0 - accept;
    }
    total.ln()
}

/// Result of one long chain on a closed space.
pub struct LongRun {
    pub tv: f64,
    pub frequency: HashMap<ModelId, f64>,
    pub backward_evaluations: u64,
}

impl Closed {
    /// Runs one chain from the null model for `burn_in + steps` steps and
    /// compares its visit frequencies with the enumerated posterior.
    pub fn long_run(&self, kernel: KernelKind, local_steps: usize, steps: u64, burn_in: u64, seed: u64) -> LongRun {
        let cfg = self.config(kernel, local_steps);
        let mut chain = self.chain(&cfg, Model::null(), lane_rng(seed, 0));
        chain.run(burn_in + steps, burn_in, |_| {});
        let frequency = chain.estimate_frequency().unwrap().as_map();
        LongRun {
            tv: rgmjmcmc::estimate::total_variation(&frequency, &self.exact_map()),
            frequency,
            backward_evaluations: chain.backward_evaluations(),
        }
    }
}
