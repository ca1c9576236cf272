//! Property checks shared by the property test target and the acceptance run.
//! Each check runs a deterministic proptest runner and reports the first
//! minimal counterexample.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rgmjmcmc::archive::ArchiveRecord;
use rgmjmcmc::engine::lane_rng;
use rgmjmcmc::enumerate::enumerate_posterior;
use rgmjmcmc::estimate::{estimate_frequency, estimate_renormalized, FrequencyCounter};
use rgmjmcmc::evidence::gaussian_log_evidence;
use rgmjmcmc::experiments::{
    compute_metrics, gen_kepler_data, gen_logic_data, gen_mass_data, gen_tiny_gaussian, GroundTruth,
    TruthEntry,
};
use rgmjmcmc::kernel::{log_qr_ratio, Randomizer};
use rgmjmcmc::operators::next_population;
use rgmjmcmc::{
    Chain, Dataset, Execution, Family, Feature, FeatureRef, Mask, Model, ModelArchive, ModelId, Nonlinearity,
    OperatorConfig, Population, QrRatio, SamplerConfig, Target,
};

pub type Check = fn(u32) -> Result<(), String>;

/// Every property with its name.
pub const ALL: &[(&str, Check)] = &[
    ("canonical-key congruence", key_congruence),
    ("boolean product oracle", boolean_products),
    ("next_population size and protection", next_population_size),
    ("gaussian evidence scale invariance", gaussian_scale_invariance),
    ("log_target exchangeability", log_target_exchangeable),
    ("q_r antisymmetry", qr_antisymmetry),
    ("Q-cap preservation", q_cap_preserved),
    ("estimator normalization", estimator_normalization),
    ("renormalized permutation invariance", renorm_permutation_invariance),
    ("merge commutativity", merge_commutativity),
    ("seed determinism", seed_determinism),
    ("metrics replicate permutation", metrics_permutation),
    ("any-of entries count once", any_of_counts_once),
    ("generators finite", generators_finite),
    ("enumeration permutation invariance", enumeration_permutation),
];

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| match e {
        TestError::Fail(why, value) => format!("{why} for {value:?}"),
        TestError::Abort(why) => format!("aborted: {why}"),
    })
}

#[derive(Debug, Clone)]
pub enum Recipe {
    Leaf(usize),
    Prod(Vec<Recipe>),
    Unary(Nonlinearity, Box<Recipe>),
    Proj(Nonlinearity, Vec<(f64, Recipe)>),
}

fn nonlinearity() -> impl Strategy<Value = Nonlinearity> {
    proptest::sample::select(Nonlinearity::NONLINEAR_SET.to_vec())
}

pub fn recipe(q: usize) -> impl Strategy<Value = Recipe> {
    let leaf = (0..q).prop_map(Recipe::Leaf);
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Recipe::Prod),
            (nonlinearity(), inner.clone()).prop_map(|(g, r)| Recipe::Unary(g, Box::new(r))),
            (
                nonlinearity(),
                proptest::collection::vec((proptest::sample::select(vec![-1.0, -0.5, 0.5, 1.0]), inner), 1..3)
            )
                .prop_map(|(g, t)| Recipe::Proj(g, t)),
        ]
    })
}

fn product_recipe(q: usize) -> impl Strategy<Value = Recipe> {
    (0..q)
        .prop_map(Recipe::Leaf)
        .prop_recursive(3, 10, 3, |inner| proptest::collection::vec(inner, 2..4).prop_map(Recipe::Prod))
}

fn leaf_name(i: usize) -> String {
    format!("X{}", i + 1)
}

pub fn build(r: &Recipe) -> FeatureRef {
    match r {
        Recipe::Leaf(i) => Feature::leaf(*i, leaf_name(*i)),
        Recipe::Prod(fs) => Feature::product(fs.iter().map(build)),
        Recipe::Unary(g, c) => Feature::unary(*g, build(c)),
        Recipe::Proj(g, ts) => Feature::projection(*g, ts.iter().map(|(w, c)| (*w, build(c))).collect()),
    }
}

/// Same feature with product factors shuffled and regrouped and projection
/// terms shuffled.
fn scrambled(r: &Recipe, rng: &mut ChaCha8Rng) -> FeatureRef {
    match r {
        Recipe::Leaf(i) => Feature::leaf(*i, leaf_name(*i)),
        Recipe::Prod(fs) => {
            let mut parts: Vec<FeatureRef> = fs.iter().map(|f| scrambled(f, rng)).collect();
            parts.shuffle(rng);
            if parts.len() > 2 {
                let tail = parts.split_off(1);
                parts.push(Feature::product(tail));
            }
            Feature::product(parts)
        }
        Recipe::Unary(g, c) => Feature::unary(*g, scrambled(c, rng)),
        Recipe::Proj(g, ts) => {
            let mut terms: Vec<(f64, FeatureRef)> = ts.iter().map(|(w, c)| (*w, scrambled(c, rng))).collect();
            terms.shuffle(rng);
            Feature::projection(*g, terms)
        }
    }
}

fn columns(q: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, n), q)
}

fn same_evaluation(a: &Feature, b: &Feature, data: &[Vec<f64>]) -> bool {
    match (a.evaluate(data), b.evaluate(data)) {
        (Ok(x), Ok(y)) => x.iter().zip(&y).all(|(u, v)| u.to_bits() == v.to_bits()),
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

pub fn key_congruence(cases: u32) -> Result<(), String> {
    let q = 4;
    let strategy = (recipe(q), recipe(q), any::<u64>(), columns(q, 12));
    run(cases, strategy, |(r1, r2, seed, data)| {
        let a = build(&r1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = scrambled(&r1, &mut rng);
        prop_assert_eq!(a.key(), b.key());
        prop_assert!(same_evaluation(&a, &b, &data), "rearranged tree evaluates differently");
        let c = build(&r2);
        if c.key() == a.key() {
            prop_assert!(same_evaluation(&a, &c, &data), "equal keys, different columns");
        }
        Ok(())
    })
}

fn leaves(r: &Recipe, out: &mut Vec<usize>) {
    match r {
        Recipe::Leaf(i) => out.push(*i),
        Recipe::Prod(fs) => fs.iter().for_each(|f| leaves(f, out)),
        Recipe::Unary(_, c) => leaves(c, out),
        Recipe::Proj(_, ts) => ts.iter().for_each(|(_, c)| leaves(c, out)),
    }
}

pub fn boolean_products(cases: u32) -> Result<(), String> {
    let q = 5;
    let n = 16;
    let strategy = (
        product_recipe(q),
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), q),
    );
    run(cases, strategy, |(r, bits)| {
        let data: Vec<Vec<f64>> = bits
            .iter()
            .map(|c| c.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect())
            .collect();
        let col = build(&r).evaluate(&data).unwrap();
        let mut used = Vec::new();
        leaves(&r, &mut used);
        for (i, v) in col.iter().enumerate() {
            let and = used.iter().all(|&j| bits[j][i]);
            prop_assert_eq!(*v, if and { 1.0 } else { 0.0 }, "row {}", i);
        }
        Ok(())
    })
}

fn base(q: usize) -> Vec<FeatureRef> {
    (0..q).map(|i| Feature::leaf(i, leaf_name(i))).collect()
}

pub fn next_population_size(cases: u32) -> Result<(), String> {
    let q = 6;
    let strategy = (
        proptest::collection::btree_set(recipe(q), 2..8),
        any::<u64>(),
        proptest::collection::vec(0.0f64..1.0, 8),
        0usize..3,
    );
    run(cases, strategy.prop_map(|(rs, seed, freq, protect)| {
        (rs.into_iter().collect::<Vec<_>>(), seed, freq, protect)
    }), |(rs, seed, freq, protect)| {
        let mut seen = HashSet::new();
        let members: Vec<FeatureRef> = rs
            .iter()
            .map(build)
            .filter(|f| seen.insert(f.key().to_string()))
            .collect();
        let pop = Population::new(members.clone(), 0).unwrap();
        let protected: Vec<FeatureRef> = members.iter().take(protect.min(members.len())).cloned().collect();
        let freqs: HashMap<Arc<str>, f64> = members
            .iter()
            .zip(&freq)
            .map(|(f, p)| (f.key_arc().clone(), *p))
            .collect();
        let cfg = OperatorConfig {
            filtration_threshold: 0.5,
            ..OperatorConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match next_population(&pop, &protected, &freqs, &cfg, &base(q), |_| true, &mut rng) {
            Ok(next) => {
                prop_assert_eq!(next.len(), pop.len());
                let keys: HashSet<&str> = next.features().iter().map(|f| f.key()).collect();
                prop_assert_eq!(keys.len(), next.len(), "duplicate keys");
                for p in &protected {
                    prop_assert!(keys.contains(p.key()), "lost protected {}", p.key());
                }
            }
            Err(e) => prop_assert!(false, "{}", e),
        }
        Ok(())
    })
}

impl PartialEq for Recipe {
    fn eq(&self, other: &Self) -> bool {
        build(self).key() == build(other).key()
    }
}
impl Eq for Recipe {}
impl PartialOrd for Recipe {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Recipe {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        build(self).key().cmp(build(other).key())
    }
}

pub fn gaussian_scale_invariance(cases: u32) -> Result<(), String> {
    let n = 30;
    let strategy = (
        1usize..4,
        any::<u64>(),
        prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        0usize..3,
    );
    run(cases, strategy, |(k, seed, c, j)| {
        let j = j % k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::StandardNormal;
        use rand_distr::Distribution;
        let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] + { let e: f64 = normal.sample(&mut rng); e }).collect();
        let mut scaled = cols.clone();
        scaled[j].iter_mut().for_each(|v| *v *= c);
        let a = gaussian_log_evidence(&y, &cols.iter().map(|c| c.as_slice()).collect::<Vec<_>>()).unwrap();
        let b = gaussian_log_evidence(&y, &scaled.iter().map(|c| c.as_slice()).collect::<Vec<_>>()).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
        Ok(())
    })
}

pub fn log_target_exchangeable(cases: u32) -> Result<(), String> {
    let strategy = (proptest::collection::btree_set(recipe(5), 1..4), any::<u64>(), any::<u64>());
    run(cases, strategy, |(rs, data_seed, shuffle_seed)| {
        let data = Arc::new(gen_tiny_gaussian(40, 5, data_seed));
        let mut feats: Vec<FeatureRef> = rs.iter().map(build).collect();
        let forward = Model::new(feats.clone());
        feats.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let shuffled = Model::new(feats);
        prop_assert_eq!(forward.id(), shuffled.id());
        let t1 = Target::new(data.clone(), None);
        let t2 = Target::new(data, None);
        let a = t1.log_target(&forward);
        let b = t2.log_target(&shuffled);
        let again = t1.log_target(&shuffled);
        prop_assert_eq!(a.to_bits(), b.to_bits());
        prop_assert_eq!(a.to_bits(), again.to_bits());
        prop_assert_eq!(t1.computations(), 1);
        Ok(())
    })
}

fn mask(len: usize) -> impl Strategy<Value = Mask> {
    proptest::collection::vec(any::<bool>(), len).prop_map(Mask::from_bits)
}

fn randomizer() -> impl Strategy<Value = Randomizer> {
    (1e-4f64..0.49, 1usize..9, 1usize..60, any::<bool>()).prop_map(|(prob, max_size, retries, exact)| Randomizer {
        prob,
        max_size,
        retries,
        form: if exact { QrRatio::Exact } else { QrRatio::Hamming },
    })
}

pub fn qr_antisymmetry(cases: u32) -> Result<(), String> {
    let strategy = (4usize..9).prop_flat_map(|s| (mask(s), mask(s), mask(s), mask(s), randomizer()));
    run(cases, strategy, |(a, b, c, d, r)| {
        prop_assume!(a.ones() <= r.max_size && c.ones() <= r.max_size);
        let fwd = log_qr_ratio(Some(&a), &b, &c, &d, &r);
        let back = log_qr_ratio(Some(&c), &d, &a, &b, &r);
        prop_assert!(fwd.is_finite());
        prop_assert!((fwd + back).abs() <= 1e-12 * (1.0 + fwd.abs()), "{} vs {}", fwd, back);
        prop_assert_eq!(log_qr_ratio(None, &b, &c, &d, &r), f64::NEG_INFINITY);
        Ok(())
    })
}

pub fn q_cap_preserved(cases: u32) -> Result<(), String> {
    let strategy = (2usize..12).prop_flat_map(|s| (mask(s), randomizer(), any::<u64>()));
    run(cases, strategy, |(m, r, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = if m.ones() > r.max_size {
            Mask::from_positions(m.len(), &(0..r.max_size.min(m.len())).collect::<Vec<_>>())
        } else {
            m
        };
        for _ in 0..20 {
            if let Ok(out) = r.sample(&start, &mut rng) {
                prop_assert!(out.ones() <= r.max_size, "{} ones > {}", out.ones(), r.max_size);
                prop_assert_eq!(out.len(), start.len());
            }
        }
        Ok(())
    })
}

fn key_pool() -> Vec<Arc<str>> {
    ["a", "b", "c", "d", "e"].iter().map(|k| Arc::from(*k)).collect()
}

fn records() -> impl Strategy<Value = Vec<ArchiveRecord>> {
    proptest::collection::vec(
        (
            proptest::collection::btree_set(0usize..5, 0..4),
            prop_oneof![9 => -60.0f64..0.0, 1 => Just(f64::NEG_INFINITY)],
            -10.0f64..0.0,
            1u64..5,
        ),
        1..20,
    )
    .prop_map(|rows| {
        let pool = key_pool();
        let mut seen = HashSet::new();
        rows.into_iter()
            .enumerate()
            .filter_map(|(i, (keys, le, lp, visits))| {
                let id = ModelId::new(keys.iter().map(|k| pool[*k].clone()));
                seen.insert(id.clone()).then_some(ArchiveRecord {
                    id,
                    log_prior: lp,
                    log_evidence: le,
                    order: i as u64,
                    visits,
                })
            })
            .collect()
    })
}

fn model_of(id: &ModelId) -> Model {
    Model::new(
        id.keys()
            .iter()
            .enumerate()
            .map(|(i, k)| Feature::leaf(i, k.clone()))
            .collect(),
    )
}

pub fn estimator_normalization(cases: u32) -> Result<(), String> {
    run(cases, (records(), proptest::collection::vec(1u64..50, 20)), |(recs, counts)| {
        if let Ok(est) = estimate_renormalized(&recs) {
            prop_assert!((est.total() - 1.0).abs() < 1e-12, "renorm total {}", est.total());
            prop_assert!(est.models.iter().all(|(_, p)| (0.0..=1.0).contains(p)));
            prop_assert!(est.inclusion.values().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
        } else {
            prop_assert!(recs.iter().all(|r| !r.log_target().is_finite()));
        }
        let counter = FrequencyCounter::from_counts(recs.iter().zip(&counts).map(|(r, c)| (model_of(&r.id), *c)));
        let est = estimate_frequency(&counter, true).unwrap();
        prop_assert!((est.total() - 1.0).abs() < 1e-12, "freq total {}", est.total());
        prop_assert!(est.models.iter().all(|(_, p)| (0.0..=1.0).contains(p)));
        Ok(())
    })
}

pub fn renorm_permutation_invariance(cases: u32) -> Result<(), String> {
    run(cases, (records(), any::<u64>()), |(recs, seed)| {
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        match (estimate_renormalized(&recs), estimate_renormalized(&shuffled)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.models.len(), b.models.len());
                for ((ia, pa), (ib, pb)) in a.models.iter().zip(&b.models) {
                    prop_assert_eq!(ia, ib);
                    prop_assert_eq!(pa.to_bits(), pb.to_bits());
                }
                prop_assert_eq!(a.inclusion, b.inclusion);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one order failed"),
        }
        Ok(())
    })
}

fn archive_view(a: &ModelArchive) -> BTreeMap<String, (u64, u64, u64)> {
    a.records()
        .into_iter()
        .map(|r| (r.id.to_string(), (r.log_prior.to_bits(), r.log_evidence.to_bits(), r.visits)))
        .collect()
}

pub fn merge_commutativity(cases: u32) -> Result<(), String> {
    let strategy = (records(), records(), proptest::collection::vec(1u64..50, 20), proptest::collection::vec(1u64..50, 20));
    run(cases, strategy, |(ra, rb, ca, cb)| {
        // Equal identities carry equal values, as they do across lanes.
        let shared: HashMap<ModelId, (f64, f64)> = ra.iter().map(|r| (r.id.clone(), (r.log_prior, r.log_evidence))).collect();
        let rb: Vec<ArchiveRecord> = rb
            .into_iter()
            .map(|mut r| {
                if let Some((lp, le)) = shared.get(&r.id) {
                    r.log_prior = *lp;
                    r.log_evidence = *le;
                }
                r
            })
            .collect();
        let ab = ModelArchive::from_records(ra.clone());
        ab.merge_from(&ModelArchive::from_records(rb.clone()));
        let ba = ModelArchive::from_records(rb.clone());
        ba.merge_from(&ModelArchive::from_records(ra.clone()));
        prop_assert_eq!(archive_view(&ab), archive_view(&ba));
        match (estimate_renormalized(&ab.records()), estimate_renormalized(&ba.records())) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.models, y.models);
                prop_assert_eq!(x.inclusion, y.inclusion);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "merge order changed estimability"),
        }
        let fa = FrequencyCounter::from_counts(ra.iter().zip(&ca).map(|(r, c)| (model_of(&r.id), *c)));
        let fb = FrequencyCounter::from_counts(rb.iter().zip(&cb).map(|(r, c)| (model_of(&r.id), *c)));
        let mut x = fa.clone();
        x.merge(&fb);
        let mut y = fb.clone();
        y.merge(&fa);
        prop_assert_eq!(&x, &y);
        let (ex, ey) = (estimate_frequency(&x, true).unwrap(), estimate_frequency(&y, true).unwrap());
        prop_assert_eq!(ex.models, ey.models);
        Ok(())
    })
}

pub fn seed_determinism(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), any::<u64>(), 0u64..4), |(data_seed, seed, lane)| {
        let data = Arc::new(gen_tiny_gaussian(40, 6, data_seed));
        let base_feats = Arc::new(data.base_covariates());
        let cfg = SamplerConfig {
            pop_size: 5,
            max_model_size: 3,
            ..SamplerConfig::default()
        };
        let trace = |shared: Option<Arc<Target>>| {
            let target = shared.unwrap_or_else(|| Arc::new(Target::new(data.clone(), None)));
            let mut chain = Chain::new(target, base_feats.clone(), cfg.clone(), None, lane_rng(seed, lane)).unwrap();
            let mut out = Vec::new();
            chain.run(15, 0, |r| out.push(r.to_json()));
            out
        };
        let warm = Arc::new(Target::new(data.clone(), None));
        let _ = trace(Some(warm.clone()));
        let first = trace(None);
        prop_assert_eq!(&first, &trace(None));
        // A warm archive from another run must not change the trajectory.
        prop_assert_eq!(&first, &trace(Some(warm)));
        let (m1, _) = gen_mass_data(50, 0.1, data_seed);
        let (m2, _) = gen_mass_data(50, 0.1, data_seed);
        prop_assert!(same_data(&m1, &m2));
        let (k1, _) = gen_kepler_data(50, 0.1, data_seed);
        let (k2, _) = gen_kepler_data(50, 0.1, data_seed);
        prop_assert!(same_data(&k1, &k2));
        let (l1, _) = gen_logic_data(200, data_seed);
        let (l2, _) = gen_logic_data(200, data_seed);
        prop_assert!(same_data(&l1, &l2));
        Ok(())
    })
}

fn same_data(a: &Dataset, b: &Dataset) -> bool {
    a.columns() == b.columns() && a.y() == b.y() && a.names() == b.names()
}

fn truth_abc() -> GroundTruth {
    GroundTruth::new(vec![
        TruthEntry {
            label: "A".into(),
            keys: vec!["a".into(), "a2".into()],
        },
        TruthEntry {
            label: "B".into(),
            keys: vec!["b".into()],
        },
    ])
}

fn inclusion_maps() -> impl Strategy<Value = Vec<BTreeMap<String, f64>>> {
    let keys = vec!["a", "a2", "b", "x", "y", "z"];
    proptest::collection::vec(
        proptest::collection::btree_map(proptest::sample::select(keys), 0.0f64..=1.0, 0..6)
            .prop_map(|m| m.into_iter().map(|(k, v)| (k.to_string(), v)).collect()),
        1..10,
    )
}

pub fn metrics_permutation(cases: u32) -> Result<(), String> {
    run(cases, (inclusion_maps(), any::<u64>()), |(reps, seed)| {
        let truth = truth_abc();
        let mut shuffled = reps.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = compute_metrics(&reps, &truth, 4);
        let b = compute_metrics(&shuffled, &truth, 4);
        prop_assert_eq!(&a.power_per_truth, &b.power_per_truth);
        prop_assert!((a.fp - b.fp).abs() < 1e-12);
        prop_assert!((a.fdr - b.fdr).abs() < 1e-12);
        prop_assert!((a.power - b.power).abs() < 1e-12);
        Ok(())
    })
}

pub fn any_of_counts_once(cases: u32) -> Result<(), String> {
    run(cases, inclusion_maps(), |reps| {
        let truth = truth_abc();
        for rep in &reps {
            let m = compute_metrics(std::slice::from_ref(rep), &truth, 1);
            prop_assert!(m.power_per_truth.iter().all(|p| *p == 0.0 || *p == 1.0));
            let fp_expected = rep
                .iter()
                .filter(|(k, p)| truth.entry_of(k).is_none() && **p >= truth.threshold)
                .count() as f64;
            prop_assert_eq!(m.fp, fp_expected);
            let tp = m.power_per_truth.iter().sum::<f64>();
            prop_assert!(tp <= truth.entries.len() as f64);
        }
        Ok(())
    })
}

pub fn generators_finite(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 0.0f64..0.5), |(seed, sigma)| {
        let sets = [
            gen_mass_data(60, sigma, seed).0,
            gen_kepler_data(60, sigma, seed).0,
            gen_logic_data(200, seed).0,
            gen_tiny_gaussian(60, 6, seed),
        ];
        for d in &sets {
            prop_assert!(d.columns().iter().flatten().all(|v| v.is_finite()));
            prop_assert!(d.y().iter().all(|v| v.is_finite()));
        }
        prop_assert_eq!(sets[2].family(), Family::Binomial);
        Ok(())
    })
}

pub fn enumeration_permutation(cases: u32) -> Result<(), String> {
    run(cases.min(64), (any::<u64>(), any::<u64>(), 1usize..4), |(data_seed, seed, max_size)| {
        let data = Arc::new(gen_tiny_gaussian(30, 5, data_seed));
        let base = data.base_covariates();
        let mut shuffled = base.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = enumerate_posterior(&base, max_size, &Target::new(data.clone(), None), Execution::Sequential).unwrap();
        let b = enumerate_posterior(&shuffled, max_size, &Target::new(data, None), Execution::Sequential).unwrap();
        prop_assert_eq!(a.as_map(), b.as_map());
        Ok(())
    })
}
