//! Posterior estimators: renormalization over the visited models and visit
//! frequencies of a reversible chain.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{ArchiveRecord, Model, ModelId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("no models with finite posterior mass to normalize over")]
    EmptyArchive,
    #[error("no post-burn-in steps recorded")]
    NoSteps,
    #[error("visit frequencies of a non-reversible kernel are not posterior estimates")]
    InvalidForKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Renormalized,
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEstimate {
    pub kind: EstimatorKind,
    /// Sorted by decreasing probability, ties by identity.
    pub models: Vec<(ModelId, f64)>,
    /// Marginal inclusion probability per canonical key.
    pub inclusion: BTreeMap<String, f64>,
}

impl PosteriorEstimate {
    pub fn probability(&self, id: &ModelId) -> f64 {
        self.models
            .iter()
            .find(|(m, _)| m == id)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn as_map(&self) -> HashMap<ModelId, f64> {
        self.models.iter().cloned().collect()
    }

    pub fn total(&self) -> f64 {
        self.models.iter().map(|(_, p)| p).sum()
    }

    fn sort(&mut self) {
        self.models
            .sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    }
}

pub fn logsumexp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalizes `exp(log_target)` over the given records. Models are summed in
/// identity order so the result does not depend on visit order.
pub fn estimate_renormalized(records: &[ArchiveRecord]) -> Result<PosteriorEstimate, EstimateError> {
    let mut finite: Vec<(&ModelId, f64)> = records
        .iter()
        .map(|r| (&r.id, r.log_target()))
        .filter(|(_, lt)| lt.is_finite())
        .collect();
    if finite.is_empty() {
        return Err(EstimateError::EmptyArchive);
    }
    finite.sort_by(|a, b| a.0.cmp(b.0));
    finite.dedup_by(|a, b| a.0 == b.0);
    let lse = logsumexp(finite.iter().map(|(_, lt)| *lt));
    let mut inclusion: BTreeMap<String, f64> = BTreeMap::new();
    let models: Vec<(ModelId, f64)> = finite
        .into_iter()
        .map(|(id, lt)| {
            let p = (lt - lse).exp();
            for k in id.keys() {
                *inclusion.entry(k.to_string()).or_default() += p;
            }
            (id.clone(), p)
        })
        .collect();
    let mut est = PosteriorEstimate {
        kind: EstimatorKind::Renormalized,
        models,
        inclusion,
    };
    est.sort();
    Ok(est)
}

/// Visit counts of chain states, per model and per feature.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyCounter {
    models: HashMap<ModelId, u64>,
    features: HashMap<Arc<str>, u64>,
    total: u64,
}

impl FrequencyCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, m: &Model) {
        *self.models.entry(m.id().clone()).or_default() += 1;
        for f in m.features() {
            *self.features.entry(f.key_arc().clone()).or_default() += 1;
        }
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, id: &ModelId) -> u64 {
        self.models.get(id).copied().unwrap_or(0)
    }

    pub fn model_counts(&self) -> &HashMap<ModelId, u64> {
        &self.models
    }

    pub fn merge(&mut self, other: &FrequencyCounter) {
        for (id, c) in &other.models {
            *self.models.entry(id.clone()).or_default() += c;
        }
        for (k, c) in &other.features {
            *self.features.entry(k.clone()).or_default() += c;
        }
        self.total += other.total;
    }

    /// Counter built directly from `(model, count)` pairs.
    pub fn from_counts<I: IntoIterator<Item = (Model, u64)>>(counts: I) -> Self {
        let mut out = FrequencyCounter::new();
        for (m, c) in counts {
            *out.models.entry(m.id().clone()).or_default() += c;
            for f in m.features() {
                *out.features.entry(f.key_arc().clone()).or_default() += c;
            }
            out.total += c;
        }
        out
    }
}

/// `W_m / W` for every visited model. `valid` is false for non-reversible
/// kernels, whose visit frequencies do not target the posterior.
pub fn estimate_frequency(
    counter: &FrequencyCounter,
    valid: bool,
) -> Result<PosteriorEstimate, EstimateError> {
    if !valid {
        return Err(EstimateError::InvalidForKernel);
    }
    if counter.total == 0 {
        return Err(EstimateError::NoSteps);
    }
    let w = counter.total as f64;
    let models = counter
        .models
        .iter()
        .map(|(id, c)| (id.clone(), *c as f64 / w))
        .collect();
    let inclusion = counter
        .features
        .iter()
        .map(|(k, c)| (k.to_string(), *c as f64 / w))
        .collect();
    let mut est = PosteriorEstimate {
        kind: EstimatorKind::Frequency,
        models,
        inclusion,
    };
    est.sort();
    Ok(est)
}

/// Total variation distance `0.5 * sum |p - q|` over the union of supports.
pub fn total_variation(p: &HashMap<ModelId, f64>, q: &HashMap<ModelId, f64>) -> f64 {
    let mut sum = 0.0;
    for (id, pv) in p {
        sum += (pv - q.get(id).copied().unwrap_or(0.0)).abs();
    }
    for (id, qv) in q {
        if !p.contains_key(id) {
            sum += qv.abs();
        }
    }
    0.5 * sum
}
