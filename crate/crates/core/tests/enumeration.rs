use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rgmjmcmc::enumerate::{enumerate_posterior, model_count};
use rgmjmcmc::experiments::gen_tiny_gaussian;
use rgmjmcmc::{Dataset, Execution, Family, ModelId, Target};

fn enumerate(data: Dataset, max_size: usize) -> (Target, rgmjmcmc::enumerate::EnumeratedPosterior) {
    let data = Arc::new(data);
    let base = data.base_covariates();
    let target = Target::new(data, None);
    let post = enumerate_posterior(&base, max_size, &target, Execution::default()).unwrap();
    (target, post)
}

#[test]
fn small_space_fills_the_archive() {
    let (target, post) = enumerate(gen_tiny_gaussian(30, 3, 1), 2);
    assert_eq!(post.models.len(), 7);
    assert_eq!(target.archive().len(), 7);
    let (_, post) = enumerate(gen_tiny_gaussian(30, 5, 1), 2);
    assert_eq!(post.models.len(), 16);
    assert_eq!(model_count(5, 2), 16);
}

/// Zellner g-prior log Bayes factor with g = n for one regressor, from the
/// sample correlation.
fn single_regressor_log_bf(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    let g = n;
    (n - 2.0) / 2.0 * (1.0 + g).ln() - (n - 1.0) / 2.0 * (1.0 + g * (1.0 - r2)).ln()
}

#[test]
fn single_covariate_is_a_two_point_softmax() {
    let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
    let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 0.8 * v + 0.3 * ((i * 7 % 5) as f64 - 2.0)).collect();
    let data = Dataset::new(vec![x.clone()], vec!["X1".into()], y.clone(), "y", Family::Gaussian).unwrap();
    let (_, post) = enumerate(data, 1);
    let lt_x1 = single_regressor_log_bf(&x, &y) - (12f64).ln();
    let p_x1 = 1.0 / (1.0 + (-lt_x1).exp());
    assert!((post.probability(&ModelId::parse("X1")) - p_x1).abs() < 1e-12);
    assert!((post.probability(&ModelId::null()) - (1.0 - p_x1)).abs() < 1e-12);
}

#[test]
fn duplicated_rows_keep_the_mode() {
    let base = gen_tiny_gaussian(60, 5, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y: Vec<f64> = (0..60)
        .map(|i| {
            let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            2.0 * base.columns()[0][i] - 1.5 * base.columns()[2][i] + 0.3 * e
        })
        .collect();
    let data = Dataset::new(base.columns().to_vec(), base.names().to_vec(), y, "y", Family::Gaussian).unwrap();
    let doubled_cols: Vec<Vec<f64>> = data.columns().iter().map(|c| [c.as_slice(), c.as_slice()].concat()).collect();
    let doubled_y = [data.y(), data.y()].concat();
    let doubled = Dataset::new(doubled_cols, data.names().to_vec(), doubled_y, "y", Family::Gaussian).unwrap();
    let (_, a) = enumerate(data, 2);
    let (_, b) = enumerate(doubled, 2);
    let mode = |p: &rgmjmcmc::enumerate::EnumeratedPosterior| {
        p.models.iter().max_by(|x, y| x.probability.total_cmp(&y.probability)).unwrap().id.clone()
    };
    assert_eq!(mode(&a), mode(&b));
    assert_eq!(mode(&a), ModelId::parse("X1 + X3"));
    for (x, y) in a.models.iter().zip(&b.models) {
        assert_eq!(x.id, y.id);
        if !x.id.is_null() {
            assert!((x.log_target - y.log_target).abs() > 1e-6, "{}", x.id);
        }
    }
}

#[test]
fn feature_order_and_execution_do_not_matter() {
    let data = Arc::new(gen_tiny_gaussian(40, 6, 3));
    let base = data.base_covariates();
    let reference = enumerate_posterior(&base, 3, &Target::new(data.clone(), None), Execution::Sequential).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let mut shuffled = base.clone();
        shuffled.shuffle(&mut rng);
        let post = enumerate_posterior(&shuffled, 3, &Target::new(data.clone(), None), Execution::Parallel).unwrap();
        assert_eq!(post.models.len(), reference.models.len());
        for (x, y) in post.models.iter().zip(&reference.models) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.probability.to_bits(), y.probability.to_bits());
        }
        assert_eq!(post.log_normalizer.to_bits(), reference.log_normalizer.to_bits());
    }
}

#[test]
fn fixture_table_lists_probabilities() {
    let (_, post) = enumerate(gen_tiny_gaussian(30, 4, 4), 2);
    let mut buf = Vec::new();
    post.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("model,size,log_target,probability"));
    assert_eq!(text.lines().count(), 12);
}
