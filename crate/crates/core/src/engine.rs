//! Chain state and the three kernels: the reversible population-swapping
//! kernel, its delayed-acceptance variant, and the non-reversible GMJMCMC
//! baseline.
//!
//! One reversible step from `(m, S)`:
//!
//! ```text
//! forward:   S' ~ q_S(.|m)   m'_0 = jump(m)   m'_k = local(m'_0, S')   m' ~ q_r(.|S', m'_k)
//! backward:  S  ~ q_S(.|m')  m_0  = jump(m')  m_k  = local(m_0, S)
//! accept m' with  p(m'|y) q_r(m|S, m_k) / (p(m|y) q_r(m'|S', m'_k))
//! ```
//!
//! The proposal population and the local search cancel from the ratio, so
//! only the randomization density is evaluated. If `S` misses a feature of
//! `m` the reverse move has probability zero and the proposal is rejected.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::Model;
use crate::estimate::{estimate_frequency, EstimateError, FrequencyCounter, PosteriorEstimate};
use crate::feature::FeatureRef;
use crate::kernel::{
    large_jump, local_optimize, log_qr_ratio, KernelError, LocalKernelConfig, Mask, QrRatio,
    Randomizer,
};
use crate::numfmt::{f64_sig12, opt_f64_sig12};
use crate::operators::{fill_population, next_population, OperatorConfig, OperatorError, Population};
use crate::target::Target;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("population size {pop_size} is smaller than the maximal model size {max_size}")]
    PopulationTooSmall { pop_size: usize, max_size: usize },
    #[error("maximal model size must be at least 1")]
    ZeroModelSize,
    #[error("initial model `{0}` is not contained in the fixed population")]
    ModelOutsidePopulation(String),
    #[error("fixed population has {got} features, configured size is {want}")]
    FixedPopulationSize { got: usize, want: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rgmjmcmc,
    RgmjmcmcDelayed,
    GmjmcmcBaseline,
}

impl KernelKind {
    /// Whether visit frequencies estimate posterior probabilities.
    pub fn is_reversible(self) -> bool {
        !matches!(self, KernelKind::GmjmcmcBaseline)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Rgmjmcmc => "rgmjmcmc",
            KernelKind::RgmjmcmcDelayed => "rgmjmcmc_delayed",
            KernelKind::GmjmcmcBaseline => "gmjmcmc_baseline",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "rgmjmcmc" => Ok(KernelKind::Rgmjmcmc),
            "rgmjmcmc_delayed" | "delayed" | "dr" => Ok(KernelKind::RgmjmcmcDelayed),
            "gmjmcmc_baseline" | "gmjmcmc" | "baseline" => Ok(KernelKind::GmjmcmcBaseline),
            other => Err(format!("unknown kernel `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub pop_size: usize,
    pub max_model_size: usize,
    pub kernel: KernelKind,
    /// Baseline only: MJMCMC steps per population generation.
    pub generation_steps: usize,
    pub operators: OperatorConfig,
    pub local: LocalKernelConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            pop_size: 20,
            max_model_size: 10,
            kernel: KernelKind::Rgmjmcmc,
            generation_steps: 250,
            operators: OperatorConfig::default(),
            local: LocalKernelConfig::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_model_size == 0 {
            return Err(EngineError::ZeroModelSize);
        }
        if self.pop_size < self.max_model_size {
            return Err(EngineError::PopulationTooSmall {
                pop_size: self.pop_size,
                max_size: self.max_model_size,
            });
        }
        self.operators.validate()?;
        self.local.validate()?;
        Ok(())
    }

    pub fn randomizer(&self) -> Randomizer {
        self.local.randomizer(self.max_model_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    PopulationFailure,
    RandomizeFailure,
    InvalidProposal,
    InfeasibleReverse,
    Stage1,
    Stage2,
    MetropolisHastings,
}

/// One line of the step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub kernel: KernelKind,
    pub current: String,
    #[serde(with = "f64_sig12")]
    pub log_target_current: f64,
    pub proposal: Option<String>,
    #[serde(with = "opt_f64_sig12")]
    pub log_target_proposal: Option<f64>,
    pub pop_size: usize,
    pub max_model_size: usize,
    #[serde(with = "f64_sig12")]
    pub randomize_prob: f64,
    pub randomize_retries: usize,
    pub qr_ratio: QrRatio,
    /// Inclusions in `m'_k`.
    pub forward_local_size: Option<usize>,
    /// `d(m', m'_k)`.
    pub forward_distance: Option<usize>,
    /// Inclusions in `m_k`.
    pub backward_local_size: Option<usize>,
    /// `d(m, m_k)`.
    pub backward_distance: Option<usize>,
    #[serde(with = "opt_f64_sig12")]
    pub log_qr_forward: Option<f64>,
    #[serde(with = "opt_f64_sig12")]
    pub log_qr_backward: Option<f64>,
    #[serde(with = "opt_f64_sig12")]
    pub log_stage1: Option<f64>,
    #[serde(with = "opt_f64_sig12")]
    pub log_accept: Option<f64>,
    pub stage1: Option<bool>,
    pub stage2: Option<bool>,
    pub accepted: bool,
    pub reason: Option<RejectReason>,
    pub forward_evaluations: usize,
    pub backward_evaluations: usize,
    pub evolved: bool,
}

impl StepRecord {
    fn new(step: u64, kernel: KernelKind, current: &Model, lt: f64, cfg: &SamplerConfig) -> Self {
        StepRecord {
            step,
            kernel,
            current: current.id().to_string(),
            log_target_current: lt,
            proposal: None,
            log_target_proposal: None,
            pop_size: cfg.pop_size,
            max_model_size: cfg.max_model_size,
            randomize_prob: cfg.local.randomize_prob,
            randomize_retries: cfg.local.randomize_retries,
            qr_ratio: cfg.local.qr_ratio,
            forward_local_size: None,
            forward_distance: None,
            backward_local_size: None,
            backward_distance: None,
            log_qr_forward: None,
            log_qr_backward: None,
            log_stage1: None,
            log_accept: None,
            stage1: None,
            stage2: None,
            accepted: false,
            reason: None,
            forward_evaluations: 0,
            backward_evaluations: 0,
            evolved: false,
        }
    }

    fn reject(&mut self, reason: RejectReason) {
        self.accepted = false;
        self.reason = Some(reason);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("step records serialize")
    }
}

struct Forward {
    pop: Population,
    local_end: Mask,
    proposal_mask: Mask,
    proposal: Model,
    log_target: f64,
}

struct Backward {
    local_end: Mask,
    current_mask: Option<Mask>,
}

/// Per-lane chain state.
#[derive(Debug, Clone)]
pub struct Chain {
    target: Arc<Target>,
    base: Arc<Vec<FeatureRef>>,
    cfg: SamplerConfig,
    fixed: Option<Population>,
    population: Population,
    model: Model,
    model_log_target: f64,
    rng: ChaCha8Rng,
    step: u64,
    counter: FrequencyCounter,
    generation_counts: HashMap<Arc<str>, u64>,
    generation_len: usize,
    forward_evaluations: u64,
    backward_evaluations: u64,
    accepted: u64,
}

/// Lane RNG: the master seed selects the key, the lane selects the stream.
pub fn lane_rng(seed: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lane);
    rng
}

impl Chain {
    /// Starts from the null model. With `fixed = Some(pop)` every population
    /// proposal returns `pop`, which closes the model space.
    pub fn new(
        target: Arc<Target>,
        base: Arc<Vec<FeatureRef>>,
        cfg: SamplerConfig,
        fixed: Option<Population>,
        rng: ChaCha8Rng,
    ) -> Result<Self, EngineError> {
        Self::with_model(target, base, cfg, fixed, Model::null(), rng)
    }

    pub fn with_model(
        target: Arc<Target>,
        base: Arc<Vec<FeatureRef>>,
        cfg: SamplerConfig,
        fixed: Option<Population>,
        model: Model,
        mut rng: ChaCha8Rng,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        if let Some(pop) = &fixed {
            if pop.len() != cfg.pop_size {
                return Err(EngineError::FixedPopulationSize {
                    got: pop.len(),
                    want: cfg.pop_size,
                });
            }
        }
        let population = match &fixed {
            Some(pop) => {
                if Mask::of_model(&model, pop).is_none() {
                    return Err(EngineError::ModelOutsidePopulation(model.id().to_string()));
                }
                pop.clone()
            }
            None => {
                let members = fill_population(
                    model.features().to_vec(),
                    model.features().to_vec(),
                    cfg.pop_size,
                    &base,
                    &cfg.operators,
                    |f| target.admissible(f),
                    &mut rng,
                )?;
                Population::new(members, 0)?
            }
        };
        let model_log_target = target.log_target(&model);
        Ok(Chain {
            target,
            base,
            cfg,
            fixed,
            population,
            model,
            model_log_target,
            rng,
            step: 0,
            counter: FrequencyCounter::new(),
            generation_counts: HashMap::new(),
            generation_len: 0,
            forward_evaluations: 0,
            backward_evaluations: 0,
            accepted: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_log_target(&self) -> f64 {
        self.model_log_target
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn target(&self) -> &Arc<Target> {
        &self.target
    }

    pub fn counter(&self) -> &FrequencyCounter {
        &self.counter
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn forward_evaluations(&self) -> u64 {
        self.forward_evaluations
    }

    pub fn backward_evaluations(&self) -> u64 {
        self.backward_evaluations
    }

    pub fn estimate_frequency(&self) -> Result<PosteriorEstimate, EstimateError> {
        estimate_frequency(&self.counter, self.cfg.kernel.is_reversible())
    }

    /// `q_S(.|m)`: all features of `m`, then operator-generated features
    /// seeded from `m`.
    pub fn propose_population(&mut self, m: &Model) -> Result<Population, OperatorError> {
        if let Some(pop) = &self.fixed {
            return Ok(pop.clone());
        }
        let target = self.target.clone();
        let members = fill_population(
            m.features().to_vec(),
            m.features().to_vec(),
            self.cfg.pop_size,
            &self.base,
            &self.cfg.operators,
            |f| target.admissible(f),
            &mut self.rng,
        )?;
        Population::new(members, self.population.generation() + 1)
    }

    /// Jump and local search from `from` inside `pop`.
    fn search(&mut self, from: &Model, pop: &Population) -> (Mask, usize) {
        let start = Mask::of_model(from, pop).expect("population contains the start model");
        let jumped = large_jump(
            &start,
            self.cfg.local.jump_prob,
            self.cfg.max_model_size,
            &mut self.rng,
        );
        let ls = local_optimize(
            &jumped,
            pop,
            &self.target,
            &self.cfg.local,
            self.cfg.max_model_size,
            &mut self.rng,
        );
        (ls.mask, ls.evaluations)
    }

    fn forward(&mut self, rec: &mut StepRecord, pop: Option<Population>) -> Result<Forward, RejectReason> {
        let current = self.model.clone();
        let pop = match pop {
            Some(p) => p,
            None => self
                .propose_population(&current)
                .map_err(|_| RejectReason::PopulationFailure)?,
        };
        let (local_end, evals) = self.search(&current, &pop);
        rec.forward_evaluations += evals;
        let proposal_mask = self
            .cfg
            .randomizer()
            .sample(&local_end, &mut self.rng)
            .map_err(|_| RejectReason::RandomizeFailure)?;
        let proposal = proposal_mask.to_model(&pop);
        let log_target = self.target.log_target(&proposal);
        rec.forward_evaluations += 1;
        rec.proposal = Some(proposal.id().to_string());
        rec.log_target_proposal = Some(log_target);
        rec.forward_local_size = Some(local_end.ones());
        rec.forward_distance = Some(proposal_mask.hamming(&local_end));
        Ok(Forward {
            pop,
            local_end,
            proposal_mask,
            proposal,
            log_target,
        })
    }

    fn backward(
        &mut self,
        rec: &mut StepRecord,
        fwd: &Forward,
        pop: Option<Population>,
    ) -> Result<Backward, RejectReason> {
        let pop = match pop {
            Some(p) => p,
            None => self
                .propose_population(&fwd.proposal)
                .map_err(|_| RejectReason::PopulationFailure)?,
        };
        // The search runs even when the reverse move is infeasible; the
        // models it visits still enter the archive.
        let (local_end, evals) = self.search(&fwd.proposal, &pop);
        rec.backward_evaluations += evals;
        let current_mask = Mask::of_model(&self.model, &pop);
        rec.backward_local_size = Some(local_end.ones());
        rec.backward_distance = current_mask.as_ref().map(|m| m.hamming(&local_end));
        Ok(Backward {
            local_end,
            current_mask,
        })
    }

    fn log_qr_terms(&self, rec: &mut StepRecord, fwd: &Forward, bwd: &Backward) -> f64 {
        let r = self.cfg.randomizer();
        let lf = r.log_density(
            fwd.local_end.len(),
            fwd.local_end.ones(),
            fwd.proposal_mask.hamming(&fwd.local_end),
        );
        rec.log_qr_forward = Some(lf);
        if let Some(m) = &bwd.current_mask {
            rec.log_qr_backward =
                Some(r.log_density(bwd.local_end.len(), bwd.local_end.ones(), m.hamming(&bwd.local_end)));
        }
        log_qr_ratio(
            bwd.current_mask.as_ref(),
            &bwd.local_end,
            &fwd.proposal_mask,
            &fwd.local_end,
            &r,
        )
    }

    fn accept(&mut self, fwd: Forward) {
        self.model = fwd.proposal;
        self.model_log_target = fwd.log_target;
        self.population = fwd.pop;
        self.accepted += 1;
    }

    fn log_uniform(&mut self) -> f64 {
        self.rng.random::<f64>().ln()
    }

    /// Reversible step with a single Metropolis-Hastings test.
    pub fn rg_step(&mut self, rec: &mut StepRecord) {
        let fwd = match self.forward(rec, None) {
            Ok(f) => f,
            Err(r) => return rec.reject(r),
        };
        if !fwd.log_target.is_finite() {
            return rec.reject(RejectReason::InvalidProposal);
        }
        let bwd = match self.backward(rec, &fwd, None) {
            Ok(b) => b,
            Err(r) => return rec.reject(r),
        };
        let qr = self.log_qr_terms(rec, &fwd, &bwd);
        if bwd.current_mask.is_none() {
            return rec.reject(RejectReason::InfeasibleReverse);
        }
        let log_a = fwd.log_target - self.model_log_target + qr;
        rec.log_accept = Some(log_a);
        if self.log_uniform() < log_a {
            rec.accepted = true;
            self.accept(fwd);
        } else {
            rec.reject(RejectReason::MetropolisHastings);
        }
    }

    /// Delayed acceptance: the target ratio is tested before the backward
    /// search, the randomization ratio after it.
    pub fn dr_step(&mut self, rec: &mut StepRecord) {
        let fwd = match self.forward(rec, None) {
            Ok(f) => f,
            Err(r) => return rec.reject(r),
        };
        if !fwd.log_target.is_finite() {
            return rec.reject(RejectReason::InvalidProposal);
        }
        let log_r1 = fwd.log_target - self.model_log_target;
        rec.log_stage1 = Some(log_r1);
        let pass1 = log_r1 >= 0.0 || self.log_uniform() < log_r1;
        rec.stage1 = Some(pass1);
        if !pass1 {
            return rec.reject(RejectReason::Stage1);
        }
        let bwd = match self.backward(rec, &fwd, None) {
            Ok(b) => b,
            Err(r) => return rec.reject(r),
        };
        let qr = self.log_qr_terms(rec, &fwd, &bwd);
        if bwd.current_mask.is_none() {
            rec.stage2 = Some(false);
            return rec.reject(RejectReason::InfeasibleReverse);
        }
        rec.log_accept = Some(log_r1 + qr);
        let pass2 = qr >= 0.0 || self.log_uniform() < qr;
        rec.stage2 = Some(pass2);
        if pass2 {
            rec.accepted = true;
            self.accept(fwd);
        } else {
            rec.reject(RejectReason::Stage2);
        }
    }

    /// MJMCMC move inside the current population, followed by population
    /// evolution every `generation_steps` steps.
    pub fn gmjmcmc_baseline_step(&mut self, rec: &mut StepRecord) {
        let pop = self.population.clone();
        'mv: {
            let fwd = match self.forward(rec, Some(pop.clone())) {
                Ok(f) => f,
                Err(r) => {
                    rec.reject(r);
                    break 'mv;
                }
            };
            if !fwd.log_target.is_finite() {
                rec.reject(RejectReason::InvalidProposal);
                break 'mv;
            }
            let bwd = match self.backward(rec, &fwd, Some(pop)) {
                Ok(b) => b,
                Err(r) => {
                    rec.reject(r);
                    break 'mv;
                }
            };
            let qr = self.log_qr_terms(rec, &fwd, &bwd);
            let log_a = fwd.log_target - self.model_log_target + qr;
            rec.log_accept = Some(log_a);
            if self.log_uniform() < log_a {
                rec.accepted = true;
                self.accept(fwd);
            } else {
                rec.reject(RejectReason::MetropolisHastings);
            }
        }
        for f in self.model.features() {
            *self.generation_counts.entry(f.key_arc().clone()).or_default() += 1;
        }
        self.generation_len += 1;
        if self.fixed.is_none() && self.generation_len >= self.cfg.generation_steps {
            self.evolve();
            rec.evolved = true;
        }
    }

    fn evolve(&mut self) {
        let len = self.generation_len.max(1) as f64;
        let freq: HashMap<Arc<str>, f64> = self
            .population
            .features()
            .iter()
            .map(|f| {
                let c = self.generation_counts.get(f.key_arc()).copied().unwrap_or(0);
                (f.key_arc().clone(), c as f64 / len)
            })
            .collect();
        let target = self.target.clone();
        if let Ok(next) = next_population(
            &self.population,
            self.model.features(),
            &freq,
            &self.cfg.operators,
            &self.base,
            |f| target.admissible(f),
            &mut self.rng,
        ) {
            self.population = next;
        }
        self.generation_counts.clear();
        self.generation_len = 0;
    }

    /// Runs one step of the configured kernel. When `count` is set the
    /// resulting state enters the frequency counter.
    pub fn step(&mut self, count: bool) -> StepRecord {
        let mut rec = StepRecord::new(
            self.step,
            self.cfg.kernel,
            &self.model,
            self.model_log_target,
            &self.cfg,
        );
        match self.cfg.kernel {
            KernelKind::Rgmjmcmc => self.rg_step(&mut rec),
            KernelKind::RgmjmcmcDelayed => self.dr_step(&mut rec),
            KernelKind::GmjmcmcBaseline => self.gmjmcmc_baseline_step(&mut rec),
        }
        self.step += 1;
        self.forward_evaluations += rec.forward_evaluations as u64;
        self.backward_evaluations += rec.backward_evaluations as u64;
        if count {
            self.counter.record(&self.model);
        }
        rec
    }

    /// Runs `iterations` steps, counting states after the first `burn_in`.
    /// `sink` receives every step record.
    pub fn run<F: FnMut(StepRecord)>(&mut self, iterations: u64, burn_in: u64, mut sink: F) {
        for i in 0..iterations {
            let rec = self.step(i >= burn_in);
            sink(rec);
        }
    }
}
