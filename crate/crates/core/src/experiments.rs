//! Synthetic studies: the planetary mass law, Kepler's third law and a logic
//! regression with eight planted conjunctions, plus detection metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Family};
use crate::feature::{Feature, FeatureRef, Nonlinearity};
use crate::numfmt::sig12;

/// One true feature. Detecting any of `keys` counts as a single discovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub label: String,
    pub keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub entries: Vec<TruthEntry>,
    /// Detection threshold on marginal inclusion probability.
    pub threshold: f64,
}

impl GroundTruth {
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    pub fn new(entries: Vec<TruthEntry>) -> Self {
        assert!(!entries.is_empty(), "ground truth needs at least one entry");
        GroundTruth {
            entries,
            threshold: Self::DEFAULT_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        assert!(threshold > 0.0 && threshold < 1.0);
        self.threshold = threshold;
        self
    }

    /// Index of the entry a key belongs to.
    pub fn entry_of(&self, key: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.keys.iter().any(|k| k == key))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub lanes: usize,
    pub replicates: usize,
    pub labels: Vec<String>,
    pub power_per_truth: Vec<f64>,
    pub power: f64,
    pub fp: f64,
    pub fdr: f64,
}

/// Per replicate: a truth entry is detected when the summed inclusion
/// probability of its members reaches the threshold (members are the same
/// column written differently, so at most one of them sits in any model that
/// carries mass). Every other feature at or above the threshold is a false
/// positive. FDR uses `0/0 = 0`.
pub fn compute_metrics(
    inclusion: &[BTreeMap<String, f64>],
    truth: &GroundTruth,
    lanes: usize,
) -> RunMetrics {
    assert!(!inclusion.is_empty(), "need at least one replicate");
    let k = truth.entries.len();
    let mut hits = vec![0usize; k];
    let mut fp_total = 0.0;
    let mut fdr_total = 0.0;
    for rep in inclusion {
        let mut score = vec![0.0f64; k];
        let mut fp = 0usize;
        for (key, p) in rep {
            match truth.entry_of(key) {
                Some(e) => score[e] += p,
                None if *p >= truth.threshold => fp += 1,
                None => {}
            }
        }
        let found: Vec<bool> = score
            .iter()
            .map(|s| s.min(1.0) >= truth.threshold)
            .collect();
        let tp = found.iter().filter(|f| **f).count();
        for (h, f) in hits.iter_mut().zip(&found) {
            *h += *f as usize;
        }
        fp_total += fp as f64;
        if tp + fp > 0 {
            fdr_total += fp as f64 / (tp + fp) as f64;
        }
    }
    let r = inclusion.len() as f64;
    let power_per_truth: Vec<f64> = hits.iter().map(|h| *h as f64 / r).collect();
    RunMetrics {
        lanes,
        replicates: inclusion.len(),
        labels: truth.entries.iter().map(|e| e.label.clone()).collect(),
        power: power_per_truth.iter().sum::<f64>() / k as f64,
        power_per_truth,
        fp: fp_total / r,
        fdr: fdr_total / r,
    }
}

impl RunMetrics {
    /// `T,power_<label>...,power,fp,fdr`, one row per entry of `rows`.
    pub fn write_csv<W: Write>(rows: &[RunMetrics], writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        if let Some(first) = rows.first() {
            let mut header = vec!["T".to_string()];
            if first.labels.len() > 1 {
                header.extend(first.labels.iter().map(|l| format!("power_{l}")));
            }
            header.extend(["power", "fp", "fdr", "replicates"].map(String::from));
            w.write_record(&header)?;
            for m in rows {
                let mut row = vec![m.lanes.to_string()];
                if first.labels.len() > 1 {
                    row.extend(m.power_per_truth.iter().map(|p| sig12(*p)));
                }
                row.extend([sig12(m.power), sig12(m.fp), sig12(m.fdr), m.replicates.to_string()]);
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Mass,
    Kepler,
    Logic,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Mass => "mass",
            ExperimentKind::Kepler => "kepler",
            ExperimentKind::Logic => "logic",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mass" | "i" => Ok(ExperimentKind::Mass),
            "kepler" | "ii" => Ok(ExperimentKind::Kepler),
            "logic" | "iii" => Ok(ExperimentKind::Logic),
            other => Err(format!("unknown experiment `{other}`")),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn leaf(names: &[&str], name: &str) -> FeatureRef {
    let j = names.iter().position(|n| *n == name).expect("known column");
    Feature::leaf(j, name)
}

fn build(columns: Vec<Vec<f64>>, names: &[&str], y: Vec<f64>, response: &str, family: Family) -> Dataset {
    Dataset::new(
        columns,
        names.iter().map(|s| s.to_string()).collect(),
        y,
        response,
        family,
    )
    .expect("generated data is valid")
}

/// Host star: mass, radius and temperature on main-sequence scalings, so the
/// three are strongly correlated.
fn host_star(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let m = (0.35 * normal(rng)).exp();
    let r = m.powf(0.8) * (0.05 * normal(rng)).exp();
    let t = 5778.0 * m.powf(0.5) * (0.03 * normal(rng)).exp();
    (m, r, t)
}

pub const MASS_COLUMNS: [&str; 8] = ["R_p", "rho_p", "P", "a_p", "M_h", "R_h", "T_h", "e_p"];

/// Planet mass (Earth masses) from radius (Earth radii) and density
/// (g/cm^3): `M = R^3 * rho / 5.51`, with multiplicative noise.
pub fn gen_mass_data(n: usize, sigma: f64, seed: u64) -> (Dataset, GroundTruth) {
    assert!(n >= 50, "mass experiment needs n >= 50");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::with_capacity(n); MASS_COLUMNS.len()];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let r_p = (0.6 + 0.45 * normal(&mut rng)).exp();
        let rho = (1.2 + 0.45 * normal(&mut rng)).exp();
        let (m_h, r_h, t_h) = host_star(&mut rng);
        let period: f64 = rng.random_range(1f64.ln()..400f64.ln()).exp();
        let a = (m_h * (period / 365.25).powi(2)).cbrt() * (0.01 * normal(&mut rng)).exp();
        let e: f64 = rng.random_range(0.0..0.5);
        for (c, v) in cols.iter_mut().zip([r_p, rho, period, a, m_h, r_h, t_h, e]) {
            c.push(v);
        }
        y.push(r_p.powi(3) * rho / 5.51 * (1.0 + sigma * normal(&mut rng)));
    }
    let names = MASS_COLUMNS;
    let r = leaf(&names, "R_p");
    let rho = leaf(&names, "rho_p");
    let truth = GroundTruth::new(vec![TruthEntry {
        label: "Rp3rho".into(),
        keys: vec![
            Feature::product([r.clone(), r.clone(), r.clone(), rho.clone()]).key().to_string(),
            Feature::product([Feature::unary(Nonlinearity::Cube, r.clone()), rho.clone()]).key().to_string(),
            Feature::product([Feature::unary(Nonlinearity::Square, r.clone()), r, rho]).key().to_string(),
        ],
    }]);
    (build(cols, &names, y, "M_p", Family::Gaussian), truth)
}

pub const KEPLER_COLUMNS: [&str; 8] = ["P", "M_h", "R_h", "T_h", "R_p", "rho_p", "e_p", "d_h"];

/// Semi-major axis (AU) from orbital period (days) and host mass (solar
/// masses): `a = (M (P / 365.25)^2)^(1/3)`, with multiplicative noise.
pub fn gen_kepler_data(n: usize, sigma: f64, seed: u64) -> (Dataset, GroundTruth) {
    assert!(n >= 50, "kepler experiment needs n >= 50");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::with_capacity(n); KEPLER_COLUMNS.len()];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let period: f64 = rng.random_range(1f64.ln()..400f64.ln()).exp();
        let (m_h, r_h, t_h) = host_star(&mut rng);
        let r_p = (0.6 + 0.45 * normal(&mut rng)).exp();
        let rho = (1.2 + 0.45 * normal(&mut rng)).exp();
        let e: f64 = rng.random_range(0.0..0.5);
        let dist: f64 = rng.random_range(10.0..1000.0);
        for (c, v) in cols
            .iter_mut()
            .zip([period, m_h, r_h, t_h, r_p, rho, e, dist])
        {
            c.push(v);
        }
        let a = (m_h * (period / 365.25).powi(2)).cbrt();
        y.push(a * (1.0 + sigma * normal(&mut rng)));
    }
    let names = KEPLER_COLUMNS;
    let p = leaf(&names, "P");
    let entry = |label: &str, host: &str| {
        let h = leaf(&names, host);
        let plain = Feature::product([p.clone(), p.clone(), h.clone()]);
        let squared = Feature::product([Feature::unary(Nonlinearity::Square, p.clone()), h]);
        TruthEntry {
            label: label.into(),
            keys: vec![
                Feature::unary(Nonlinearity::Cbrt, plain).key().to_string(),
                Feature::unary(Nonlinearity::Cbrt, squared).key().to_string(),
            ],
        }
    };
    // F_1, F_2 and F_3 are interchangeable: any of them counts once.
    let entries = [entry("F1", "M_h"), entry("F2", "R_h"), entry("F3", "T_h")];
    let truth = GroundTruth::new(vec![TruthEntry {
        label: "F".into(),
        keys: entries.into_iter().flat_map(|e| e.keys).collect(),
    }]);
    (build(cols, &names, y, "a_p", Family::Gaussian), truth)
}

/// The eight planted conjunctions, as 1-based covariate indices.
pub const LOGIC_TREES: [&[usize]; 8] = [
    &[7],
    &[8],
    &[2, 9],
    &[18, 21],
    &[1, 3, 27],
    &[12, 20, 37],
    &[4, 10, 17, 30],
    &[11, 13, 19, 50],
];

pub const LOGIC_COVARIATES: usize = 50;
/// Common log-odds effect of each tree.
pub const LOGIC_EFFECT: f64 = 3.5;

pub fn logic_tree(tree: &[usize]) -> FeatureRef {
    Feature::product(
        tree.iter()
            .map(|&i| Feature::leaf(i - 1, format!("X{i}"))),
    )
}

/// Fifty Bernoulli(1/2) covariates and a binary response with
/// `logit = b0 + LOGIC_EFFECT * (L_1 + ... + L_8)`, `b0` centering the linear
/// predictor.
pub fn gen_logic_data(n: usize, seed: u64) -> (Dataset, GroundTruth) {
    assert!(n >= 200, "logic experiment needs n >= 200");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..LOGIC_COVARIATES)
        .map(|_| {
            (0..n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let expected: f64 = LOGIC_TREES
        .iter()
        .map(|t| 0.5f64.powi(t.len() as i32))
        .sum();
    let intercept = -LOGIC_EFFECT * expected;
    let y = (0..n)
        .map(|i| {
            let active: f64 = LOGIC_TREES
                .iter()
                .map(|t| t.iter().map(|&j| cols[j - 1][i]).product::<f64>())
                .sum();
            let eta = intercept + LOGIC_EFFECT * active;
            let p = 1.0 / (1.0 + (-eta).exp());
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let names: Vec<String> = (1..=LOGIC_COVARIATES).map(|i| format!("X{i}")).collect();
    let truth = GroundTruth::new(
        LOGIC_TREES
            .iter()
            .enumerate()
            .map(|(i, t)| TruthEntry {
                label: format!("L{}", i + 1),
                keys: vec![logic_tree(t).key().to_string()],
            })
            .collect(),
    );
    let data = Dataset::new(cols, names, y, "y", Family::Binomial).expect("valid logic data");
    (data, truth)
}

/// Gaussian fixture with a fixed candidate list, for enumeration tests:
/// `y = 0.6 x1 + 0.4 x2 + 0.3 x3 + noise` with correlated distractors.
pub fn gen_tiny_gaussian(n: usize, q: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(q);
    for j in 0..q {
        let col: Vec<f64> = (0..n)
            .map(|i| {
                let own = normal(&mut rng);
                if j >= 3 && j % 2 == 1 {
                    0.6 * cols[j - 3][i] + 0.8 * own
                } else {
                    own
                }
            })
            .collect();
        cols.push(col);
    }
    let coef = [0.6, 0.4, 0.3];
    let y = (0..n)
        .map(|i| {
            coef.iter()
                .enumerate()
                .filter(|(j, _)| *j < q)
                .map(|(j, b)| b * cols[j][i])
                .sum::<f64>()
                + noise.sample(&mut rng)
        })
        .collect();
    let names = (1..=q).map(|j| format!("X{j}")).collect();
    Dataset::new(cols, names, y, "y", Family::Gaussian).expect("valid fixture")
}
