//! Populations and the genetic operators that generate and evolve them.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature::{Feature, FeatureRef, Nonlinearity};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("operator probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("invalid operator configuration: {0}")]
    Invalid(String),
    #[error("{kind:?} needs at least {needed} pool members, got {got}")]
    InsufficientPool {
        kind: OperatorKind,
        needed: usize,
        got: usize,
    },
    #[error("{0:?} has no nonlinearities to draw from")]
    EmptyNonlinearitySet(OperatorKind),
    #[error("no base covariates available")]
    NoBaseCovariates,
    #[error("{kind:?} produced no feature within depth {max_depth} after {retries} tries")]
    DepthExceeded {
        kind: OperatorKind,
        max_depth: usize,
        retries: usize,
    },
    #[error("could only reach {reached} of {target} distinct features")]
    PopulationFill { reached: usize, target: usize },
    #[error("{protected} protected features exceed population size {size}")]
    TooManyProtected { protected: usize, size: usize },
    #[error("duplicate feature `{0}` in population")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Mutation,
    Crossover,
    Modification,
    Projection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub p_mutation: f64,
    pub p_crossover: f64,
    pub p_modification: f64,
    pub p_projection: f64,
    pub nonlinearities: Vec<Nonlinearity>,
    /// Features with inclusion frequency below this are filtered out when a
    /// population evolves.
    pub filtration_threshold: f64,
    pub max_depth: usize,
    pub max_retries: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            p_mutation: 0.2,
            p_crossover: 0.4,
            p_modification: 0.2,
            p_projection: 0.2,
            nonlinearities: Nonlinearity::NONLINEAR_SET.to_vec(),
            filtration_threshold: 0.05,
            max_depth: 5,
            max_retries: 50,
        }
    }
}

impl OperatorConfig {
    /// Products only: the configuration for binary logic features.
    pub fn logic() -> Self {
        OperatorConfig {
            p_mutation: 0.4,
            p_crossover: 0.6,
            p_modification: 0.0,
            p_projection: 0.0,
            nonlinearities: Vec::new(),
            ..OperatorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        let probs = [
            self.p_mutation,
            self.p_crossover,
            self.p_modification,
            self.p_projection,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(OperatorError::Invalid(
                "operator probabilities must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(OperatorError::ProbabilitySum(sum));
        }
        if !(self.filtration_threshold > 0.0 && self.filtration_threshold < 1.0) {
            return Err(OperatorError::Invalid(
                "filtration threshold must lie in (0, 1)".into(),
            ));
        }
        if self.max_retries == 0 {
            return Err(OperatorError::Invalid("max_retries must be positive".into()));
        }
        Ok(())
    }

    pub fn draw_kind<R: Rng + ?Sized>(&self, rng: &mut R) -> OperatorKind {
        let u: f64 = rng.random();
        if u < self.p_mutation {
            OperatorKind::Mutation
        } else if u < self.p_mutation + self.p_crossover {
            OperatorKind::Crossover
        } else if u < self.p_mutation + self.p_crossover + self.p_modification {
            OperatorKind::Modification
        } else {
            OperatorKind::Projection
        }
    }
}

/// An ordered set of distinct features forming one local search space.
#[derive(Debug, Clone)]
pub struct Population {
    features: Vec<FeatureRef>,
    generation: usize,
}

impl Population {
    pub fn new(features: Vec<FeatureRef>, generation: usize) -> Result<Self, OperatorError> {
        let mut seen = HashSet::with_capacity(features.len());
        for f in &features {
            if !seen.insert(f.key_arc().clone()) {
                return Err(OperatorError::Duplicate(f.key().to_string()));
            }
        }
        Ok(Population {
            features,
            generation,
        })
    }

    pub fn features(&self) -> &[FeatureRef] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn position(&self, key: &str) -> Option<usize> {
        self.features.iter().position(|f| f.key() == key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.position(key).is_some()
    }
}

fn pick_distinct<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}

const PROJECTION_WEIGHTS: [f64; 4] = [-1.0, -0.5, 0.5, 1.0];

/// Generates one candidate feature with the given operator. Candidates deeper
/// than `max_depth` are resampled up to `max_retries` times.
pub fn generate_replacement<R: Rng + ?Sized>(
    kind: OperatorKind,
    source_pool: &[FeatureRef],
    base_covariates: &[FeatureRef],
    cfg: &OperatorConfig,
    rng: &mut R,
) -> Result<FeatureRef, OperatorError> {
    let insufficient = |needed| OperatorError::InsufficientPool {
        kind,
        needed,
        got: source_pool.len(),
    };
    match kind {
        OperatorKind::Mutation => {
            if base_covariates.is_empty() {
                return Err(OperatorError::NoBaseCovariates);
            }
            let in_pool: HashSet<&str> = source_pool.iter().map(|f| f.key()).collect();
            let fresh: Vec<&FeatureRef> = base_covariates
                .iter()
                .filter(|f| !in_pool.contains(f.key()))
                .collect();
            let chosen = if fresh.is_empty() {
                &base_covariates[rng.random_range(0..base_covariates.len())]
            } else {
                fresh[rng.random_range(0..fresh.len())]
            };
            return Ok(chosen.clone());
        }
        OperatorKind::Crossover | OperatorKind::Projection if source_pool.len() < 2 => {
            return Err(insufficient(2));
        }
        OperatorKind::Modification if source_pool.is_empty() => return Err(insufficient(1)),
        OperatorKind::Modification | OperatorKind::Projection if cfg.nonlinearities.is_empty() => {
            return Err(OperatorError::EmptyNonlinearitySet(kind));
        }
        _ => {}
    }

    for _ in 0..cfg.max_retries {
        let candidate = match kind {
            OperatorKind::Crossover => {
                let idx = pick_distinct(source_pool.len(), 2, rng);
                Feature::product([source_pool[idx[0]].clone(), source_pool[idx[1]].clone()])
            }
            OperatorKind::Modification => {
                let g = cfg.nonlinearities[rng.random_range(0..cfg.nonlinearities.len())];
                let child = source_pool[rng.random_range(0..source_pool.len())].clone();
                Feature::unary(g, child)
            }
            OperatorKind::Projection => {
                let g = cfg.nonlinearities[rng.random_range(0..cfg.nonlinearities.len())];
                let terms = rng.random_range(2..=3).min(source_pool.len());
                let idx = pick_distinct(source_pool.len(), terms, rng);
                let terms = idx
                    .into_iter()
                    .map(|i| {
                        let w = PROJECTION_WEIGHTS[rng.random_range(0..PROJECTION_WEIGHTS.len())];
                        (w, source_pool[i].clone())
                    })
                    .collect();
                Feature::projection(g, terms)
            }
            OperatorKind::Mutation => unreachable!(),
        };
        if candidate.depth() <= cfg.max_depth {
            return Ok(candidate);
        }
    }
    Err(OperatorError::DepthExceeded {
        kind,
        max_depth: cfg.max_depth,
        retries: cfg.max_retries,
    })
}

/// Grows `members` to `size` distinct features. New features are generated
/// from `pool`, which is extended with every accepted feature. Each slot gets
/// `max_retries` attempts; `admissible` rejects candidates the caller cannot
/// use (for example features that fail to evaluate).
pub fn fill_population<R, A>(
    mut members: Vec<FeatureRef>,
    mut pool: Vec<FeatureRef>,
    size: usize,
    base_covariates: &[FeatureRef],
    cfg: &OperatorConfig,
    admissible: A,
    rng: &mut R,
) -> Result<Vec<FeatureRef>, OperatorError>
where
    R: Rng + ?Sized,
    A: Fn(&Feature) -> bool,
{
    let mut keys: HashSet<Arc<str>> = members.iter().map(|f| f.key_arc().clone()).collect();
    let mut pool_keys: HashSet<Arc<str>> = pool.iter().map(|f| f.key_arc().clone()).collect();
    while members.len() < size {
        let mut added = false;
        for _ in 0..cfg.max_retries {
            let kind = cfg.draw_kind(rng);
            let Ok(candidate) = generate_replacement(kind, &pool, base_covariates, cfg, rng) else {
                continue;
            };
            if keys.contains(candidate.key_arc()) || !admissible(&candidate) {
                continue;
            }
            keys.insert(candidate.key_arc().clone());
            if pool_keys.insert(candidate.key_arc().clone()) {
                pool.push(candidate.clone());
            }
            members.push(candidate);
            added = true;
            break;
        }
        if !added {
            return Err(OperatorError::PopulationFill {
                reached: members.len(),
                target: size,
            });
        }
    }
    Ok(members)
}

#[derive(Debug, Clone)]
pub struct Filtration {
    pub survivors: Vec<FeatureRef>,
    pub removed: usize,
}

/// Keeps features whose inclusion frequency reaches `threshold`, plus every
/// protected feature. Missing frequencies count as zero.
pub fn filtration(
    pop: &Population,
    inclusion_freq: &HashMap<Arc<str>, f64>,
    threshold: f64,
    protected: &HashSet<Arc<str>>,
) -> Filtration {
    let survivors: Vec<FeatureRef> = pop
        .features()
        .iter()
        .filter(|f| {
            protected.contains(f.key_arc())
                || inclusion_freq.get(f.key_arc()).copied().unwrap_or(0.0) >= threshold
        })
        .cloned()
        .collect();
    Filtration {
        removed: pop.len() - survivors.len(),
        survivors,
    }
}

/// Filters the current population and refills it to the same size. The
/// protected features are always present in the result.
#[allow(clippy::too_many_arguments)]
pub fn next_population<R, A>(
    current: &Population,
    protected: &[FeatureRef],
    inclusion_freq: &HashMap<Arc<str>, f64>,
    cfg: &OperatorConfig,
    base_covariates: &[FeatureRef],
    admissible: A,
    rng: &mut R,
) -> Result<Population, OperatorError>
where
    R: Rng + ?Sized,
    A: Fn(&Feature) -> bool,
{
    let size = current.len();
    if protected.len() > size {
        return Err(OperatorError::TooManyProtected {
            protected: protected.len(),
            size,
        });
    }
    let protected_keys: HashSet<Arc<str>> =
        protected.iter().map(|f| f.key_arc().clone()).collect();
    let Filtration { mut survivors, .. } = filtration(
        current,
        inclusion_freq,
        cfg.filtration_threshold,
        &protected_keys,
    );
    for p in protected {
        if !survivors.iter().any(|f| f.key() == p.key()) {
            survivors.push(p.clone());
        }
    }
    if survivors.len() > size {
        // unprotected survivors go first
        let (mut keep, extra): (Vec<_>, Vec<_>) = survivors
            .into_iter()
            .partition(|f| protected_keys.contains(f.key_arc()));
        keep.extend(extra.into_iter().take(size - protected_keys.len()));
        survivors = keep;
    }
    let members = fill_population(
        survivors,
        current.features().to_vec(),
        size,
        base_covariates,
        cfg,
        admissible,
        rng,
    )?;
    Population::new(members, current.generation() + 1)
}
