//! Model identities and the archive of evaluated models.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;

use crate::feature::FeatureRef;

/// Sorted set of canonical feature keys. The empty set is the intercept-only
/// model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ModelId(Vec<Arc<str>>);

impl ModelId {
    pub fn new<I>(keys: I) -> Self
    where
        I: IntoIterator<Item = Arc<str>>,
    {
        let mut keys: Vec<Arc<str>> = keys.into_iter().collect();
        keys.sort();
        keys.dedup();
        ModelId(keys)
    }

    pub fn null() -> Self {
        ModelId(Vec::new())
    }

    pub fn keys(&self) -> &[Arc<str>] {
        &self.0
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_null(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.binary_search_by(|k| k.as_ref().cmp(key)).is_ok()
    }

    /// Parses the [`Display`](fmt::Display) form back.
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        if s.is_empty() || s == "null" {
            return ModelId::null();
        }
        ModelId::new(s.split(" + ").map(|k| Arc::from(k.trim())))
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("null");
        }
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            f.write_str(k)?;
        }
        Ok(())
    }
}

/// A set of features with its identity. Features are kept sorted by key so
/// every derived quantity is independent of the order they were supplied in.
#[derive(Debug, Clone)]
pub struct Model {
    features: Vec<FeatureRef>,
    id: ModelId,
}

impl Model {
    pub fn new(mut features: Vec<FeatureRef>) -> Self {
        features.sort_by(|a, b| a.key().cmp(b.key()));
        features.dedup_by(|a, b| a.key() == b.key());
        let id = ModelId(features.iter().map(|f| f.key_arc().clone()).collect());
        Model { features, id }
    }

    pub fn null() -> Self {
        Model {
            features: Vec::new(),
            id: ModelId::null(),
        }
    }

    pub fn features(&self) -> &[FeatureRef] {
        &self.features
    }

    pub fn id(&self) -> &ModelId {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn complexity(&self) -> usize {
        self.features.iter().map(|f| f.complexity()).sum()
    }
}

#[derive(Debug)]
struct Entry {
    log_prior: f64,
    log_evidence: f64,
    order: u64,
    visits: AtomicU64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveRecord {
    pub id: ModelId,
    pub log_prior: f64,
    pub log_evidence: f64,
    pub order: u64,
    pub visits: u64,
}

impl ArchiveRecord {
    pub fn log_target(&self) -> f64 {
        self.log_prior + self.log_evidence
    }
}

/// Concurrent, append-only store of evaluated models. Concurrent inserts of
/// the same identity keep the first value; values are deterministic so the
/// race is benign.
#[derive(Debug, Default)]
pub struct ModelArchive {
    entries: DashMap<ModelId, Entry>,
    next_order: AtomicU64,
}

impl ModelArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &ModelId) -> bool {
        self.entries.contains_key(id)
    }

    /// `(log_prior, log_evidence)` if present.
    pub fn get(&self, id: &ModelId) -> Option<(f64, f64)> {
        self.entries.get(id).map(|e| (e.log_prior, e.log_evidence))
    }

    /// Looks the model up and counts a visit.
    pub fn lookup(&self, id: &ModelId) -> Option<f64> {
        self.entries.get(id).map(|e| {
            e.visits.fetch_add(1, Ordering::Relaxed);
            e.log_prior + e.log_evidence
        })
    }

    /// Inserts with a visit count of one. Returns false if the identity was
    /// already stored, in which case its visit count is incremented instead.
    pub fn insert(&self, id: ModelId, log_prior: f64, log_evidence: f64) -> bool {
        self.insert_with_visits(id, log_prior, log_evidence, 1)
    }

    fn insert_with_visits(&self, id: ModelId, log_prior: f64, log_evidence: f64, visits: u64) -> bool {
        use dashmap::mapref::entry::Entry as E;
        match self.entries.entry(id) {
            E::Occupied(o) => {
                o.get().visits.fetch_add(visits, Ordering::Relaxed);
                false
            }
            E::Vacant(v) => {
                let order = self.next_order.fetch_add(1, Ordering::Relaxed);
                v.insert(Entry {
                    log_prior,
                    log_evidence,
                    order,
                    visits: AtomicU64::new(visits),
                });
                true
            }
        }
    }

    /// Snapshot sorted by insertion order.
    pub fn records(&self) -> Vec<ArchiveRecord> {
        let mut out: Vec<ArchiveRecord> = self
            .entries
            .iter()
            .map(|e| ArchiveRecord {
                id: e.key().clone(),
                log_prior: e.log_prior,
                log_evidence: e.log_evidence,
                order: e.order,
                visits: e.visits.load(Ordering::Relaxed),
            })
            .collect();
        out.sort_by_key(|r| r.order);
        out
    }

    /// Union with another archive; visit counts add.
    pub fn merge_from(&self, other: &ModelArchive) {
        for r in other.records() {
            self.insert_with_visits(r.id, r.log_prior, r.log_evidence, r.visits);
        }
    }

    pub fn from_records<I: IntoIterator<Item = ArchiveRecord>>(records: I) -> Self {
        let archive = ModelArchive::new();
        for r in records {
            archive.insert_with_visits(r.id, r.log_prior, r.log_evidence, r.visits);
        }
        archive
    }
}
