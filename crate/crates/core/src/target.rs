//! The unnormalized log posterior over models, backed by the archive.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;

use crate::archive::{Model, ModelArchive};
use crate::data::Dataset;
use crate::evidence::{log_evidence, log_prior};
use crate::feature::{Feature, FeatureError};

/// Dataset, prior weight, materialized feature columns and the model archive.
/// Shared read-mostly between lanes.
#[derive(Debug)]
pub struct Target {
    data: Arc<Dataset>,
    gamma: f64,
    columns: DashMap<Arc<str>, Option<Arc<Vec<f64>>>>,
    archive: Arc<ModelArchive>,
    computations: AtomicU64,
}

impl Target {
    /// `gamma = None` uses `log n`.
    pub fn new(data: Arc<Dataset>, gamma: Option<f64>) -> Self {
        Self::with_archive(data, gamma, Arc::new(ModelArchive::new()))
    }

    pub fn with_archive(data: Arc<Dataset>, gamma: Option<f64>, archive: Arc<ModelArchive>) -> Self {
        let gamma = gamma.unwrap_or_else(|| (data.n() as f64).ln());
        Target {
            data,
            gamma,
            columns: DashMap::new(),
            archive,
            computations: AtomicU64::new(0),
        }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn archive(&self) -> &Arc<ModelArchive> {
        &self.archive
    }

    /// Number of evidence computations performed (archive misses).
    pub fn computations(&self) -> u64 {
        self.computations.load(Ordering::Relaxed)
    }

    /// Materialized column, cached by canonical key.
    pub fn column(&self, f: &Feature) -> Result<Arc<Vec<f64>>, FeatureError> {
        if let Some(hit) = self.columns.get(f.key_arc()) {
            if let Some(col) = hit.value() {
                return Ok(col.clone());
            }
        }
        match f.evaluate(self.data.columns()) {
            Ok(col) => {
                let col = Arc::new(col);
                self.columns.insert(f.key_arc().clone(), Some(col.clone()));
                Ok(col)
            }
            Err(e) => {
                self.columns.insert(f.key_arc().clone(), None);
                Err(e)
            }
        }
    }

    /// True if the feature evaluates to a finite column.
    pub fn admissible(&self, f: &Feature) -> bool {
        if let Some(hit) = self.columns.get(f.key_arc()) {
            return hit.is_some();
        }
        self.column(f).is_ok()
    }

    pub fn log_prior(&self, m: &Model) -> f64 {
        log_prior(m.features().iter().map(|f| f.complexity()), self.gamma)
    }

    /// Log marginal likelihood, `-inf` on any evaluation failure.
    pub fn log_evidence(&self, m: &Model) -> f64 {
        let cols: Result<Vec<Arc<Vec<f64>>>, _> =
            m.features().iter().map(|f| self.column(f)).collect();
        let Ok(cols) = cols else {
            return f64::NEG_INFINITY;
        };
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        log_evidence(self.data.family(), self.data.y(), &refs).unwrap_or(f64::NEG_INFINITY)
    }

    /// `log p(m) + log p(y | m)`, served from the archive when possible.
    pub fn log_target(&self, m: &Model) -> f64 {
        if let Some(v) = self.archive.lookup(m.id()) {
            return v;
        }
        let lp = self.log_prior(m);
        let le = self.log_evidence(m);
        self.computations.fetch_add(1, Ordering::Relaxed);
        self.archive.insert(m.id().clone(), lp, le);
        lp + le
    }
}
