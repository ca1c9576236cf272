//! Exhaustive posterior over every model of bounded size built from a fixed
//! feature list.

use std::io::Write;

use thiserror::Error;

use crate::archive::{Model, ModelId};
use crate::estimate::logsumexp;
use crate::feature::FeatureRef;
use crate::lanes::{map_slice, Execution};
use crate::numfmt::sig12;
use crate::target::Target;

/// Refuse to enumerate more models than this.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum EnumerationError {
    #[error("model space has {count} models, more than the limit of {limit}")]
    TooLarge { count: u128, limit: u128 },
    #[error("every model has zero posterior mass")]
    Degenerate,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct EnumeratedModel {
    pub id: ModelId,
    pub size: usize,
    pub log_target: f64,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct EnumeratedPosterior {
    /// Sorted by identity.
    pub models: Vec<EnumeratedModel>,
    pub log_normalizer: f64,
    pub q: usize,
    pub max_size: usize,
}

/// `sum_{k=0}^{max_size} C(q, k)`, null model included.
pub fn model_count(q: usize, max_size: usize) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for k in 0..=max_size.min(q) {
        total += c;
        c = c * (q - k) as u128 / (k + 1) as u128;
    }
    total
}

fn subsets(q: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_size.min(q) {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |l| l + 1);
            for j in start..q {
                let mut t: Vec<usize> = s.clone();
                t.push(j);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn enumerate_posterior(
    features: &[FeatureRef],
    max_size: usize,
    target: &Target,
    exec: Execution,
) -> Result<EnumeratedPosterior, EnumerationError> {
    let count = model_count(features.len(), max_size);
    if count > ENUMERATION_LIMIT {
        return Err(EnumerationError::TooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let sets = subsets(features.len(), max_size);
    let mut scored: Vec<(ModelId, usize, f64)> = map_slice(&sets, exec, |set| {
        let m = Model::new(set.iter().map(|&j| features[j].clone()).collect());
        let lt = target.log_target(&m);
        (m.id().clone(), m.len(), lt)
    });
    scored.sort_by(|a, b| a.0.cmp(&b.0));
    let log_normalizer = logsumexp(scored.iter().map(|s| s.2));
    if !log_normalizer.is_finite() {
        return Err(EnumerationError::Degenerate);
    }
    let models = scored
        .into_iter()
        .map(|(id, size, log_target)| EnumeratedModel {
            id,
            size,
            log_target,
            probability: (log_target - log_normalizer).exp(),
        })
        .collect();
    Ok(EnumeratedPosterior {
        models,
        log_normalizer,
        q: features.len(),
        max_size,
    })
}

impl EnumeratedPosterior {
    pub fn probability(&self, id: &ModelId) -> f64 {
        self.models
            .binary_search_by(|m| m.id.cmp(id))
            .map_or(0.0, |i| self.models[i].probability)
    }

    pub fn as_map(&self) -> std::collections::HashMap<ModelId, f64> {
        self.models
            .iter()
            .map(|m| (m.id.clone(), m.probability))
            .collect()
    }

    /// Columns: `model,size,log_target,probability`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EnumerationError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "size", "log_target", "probability"])?;
        for m in &self.models {
            w.write_record([
                m.id.to_string(),
                m.size.to_string(),
                sig12(m.log_target),
                sig12(m.probability),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
