//! Marginal likelihoods and model priors.
//!
//! Gaussian responses use the Zellner g-prior with `g = n`, which has a closed
//! form in the coefficient of determination. The value returned is the log
//! Bayes factor against the intercept-only model; the omitted constant is
//! shared by every model on the same data. Binomial responses use the BIC
//! approximation `max log L - (k + 1)/2 * log n` with a ridge-stabilized IRLS
//! fit.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::Family;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvidenceError {
    #[error("{n} observations cannot support {params} parameters")]
    TooFewObservations { n: usize, params: usize },
    #[error("IRLS did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
}

/// Relative singular value cutoff for the least squares pseudo-inverse.
pub const PINV_TOLERANCE: f64 = 1e-10;

const IRLS_MAX_ITER: usize = 100;
const SVD_MAX_ITER: usize = 10_000;
const IRLS_RIDGE: f64 = 1e-8;
const IRLS_TOL: f64 = 1e-10;

pub fn log_evidence(family: Family, y: &[f64], columns: &[&[f64]]) -> Result<f64, EvidenceError> {
    match family {
        Family::Gaussian => gaussian_log_evidence(y, columns),
        Family::Binomial => binomial_log_evidence(y, columns),
    }
}

/// `-gamma * total node count`.
pub fn log_prior<I: IntoIterator<Item = usize>>(complexities: I, gamma: f64) -> f64 {
    let nodes: usize = complexities.into_iter().sum();
    -gamma * nodes as f64
}

fn check_size(n: usize, k: usize) -> Result<(), EvidenceError> {
    if n <= k + 1 {
        return Err(EvidenceError::TooFewObservations { n, params: k + 1 });
    }
    Ok(())
}

/// Returns `(1 - R^2)` of the centered least squares fit of `y` on `columns`,
/// or 1 when the response has no variance. Centered columns are scaled to
/// unit norm before the decomposition; constant columns are dropped.
pub fn unexplained_fraction(y: &[f64], columns: &[&[f64]]) -> Result<f64, EvidenceError> {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let sst: f64 = yc.iter().map(|v| v * v).sum();
    if sst <= 0.0 || columns.is_empty() {
        return Ok(1.0);
    }
    let mut centered = Vec::with_capacity(columns.len());
    for col in columns {
        let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !scale.is_finite() {
            return Err(EvidenceError::Numerical("non-finite design column"));
        }
        if scale == 0.0 {
            continue;
        }
        let m = col.iter().map(|v| v / scale).sum::<f64>() / n as f64;
        let c: Vec<f64> = col.iter().map(|v| v / scale - m).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            centered.push(c.into_iter().map(|v| v / norm).collect::<Vec<_>>());
        }
    }
    if centered.is_empty() {
        return Ok(1.0);
    }
    let x = DMatrix::<f64>::from_fn(n, centered.len(), |i, j| centered[j][i]);
    let svd = x
        .try_svd(true, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(EvidenceError::Numerical("singular value decomposition did not converge"))?;
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax <= 0.0 {
        return Ok(1.0);
    }
    let cutoff = PINV_TOLERANCE * smax;
    let mut resid = DVector::from_vec(yc);
    let yv = resid.clone();
    for (j, s) in svd.singular_values.iter().enumerate() {
        if *s > cutoff {
            let uj = u.column(j);
            let c = uj.dot(&yv);
            resid.axpy(-c, &uj, 1.0);
        }
    }
    let sse = resid.norm_squared();
    Ok((sse / sst).clamp(0.0, 1.0))
}

pub fn gaussian_log_evidence(y: &[f64], columns: &[&[f64]]) -> Result<f64, EvidenceError> {
    let n = y.len();
    let k = columns.len();
    check_size(n, k)?;
    if k == 0 {
        return Ok(0.0);
    }
    let g = n as f64;
    let unexplained = unexplained_fraction(y, columns)?;
    let value = 0.5 * (n - 1 - k) as f64 * (1.0 + g).ln()
        - 0.5 * (n - 1) as f64 * (1.0 + g * unexplained).ln();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvidenceError::Numerical("non-finite gaussian evidence"))
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binomial cells: design rows with trial and success counts. Rows with equal
/// covariates share a cell, which leaves the likelihood unchanged.
struct Cells {
    design: Vec<Vec<f64>>,
    trials: Vec<f64>,
    successes: Vec<f64>,
}

impl Cells {
    fn ungrouped(y: &[f64], columns: &[&[f64]]) -> Self {
        let n = y.len();
        let mut design = vec![vec![1.0; n]];
        design.extend(columns.iter().map(|c| c.to_vec()));
        Cells {
            design,
            trials: vec![1.0; n],
            successes: y.to_vec(),
        }
    }

    /// Groups rows when every column is 0/1, keyed by the row's bit pattern.
    fn grouped(y: &[f64], columns: &[&[f64]]) -> Option<Self> {
        if columns.len() > 12 {
            return None;
        }
        let mut bits = vec![0u16; y.len()];
        for (j, c) in columns.iter().enumerate() {
            if !c.iter().all(|v| *v == 0.0 || *v == 1.0) {
                return None;
            }
            for (b, v) in bits.iter_mut().zip(c.iter()) {
                *b |= (*v as u16) << j;
            }
        }
        let mut index = vec![u16::MAX; 1 << columns.len()];
        let mut patterns: Vec<u16> = Vec::new();
        let mut trials = Vec::new();
        let mut successes = Vec::new();
        for (b, yi) in bits.iter().zip(y) {
            let slot = &mut index[*b as usize];
            if *slot == u16::MAX {
                *slot = patterns.len() as u16;
                patterns.push(*b);
                trials.push(0.0);
                successes.push(0.0);
            }
            trials[*slot as usize] += 1.0;
            successes[*slot as usize] += yi;
        }
        let mut design = vec![vec![1.0; patterns.len()]];
        for j in 0..columns.len() {
            design.push(patterns.iter().map(|b| ((b >> j) & 1) as f64).collect());
        }
        Some(Cells {
            design,
            trials,
            successes,
        })
    }

    fn loglik(&self, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(&self.trials)
            .zip(&self.successes)
            .map(|((e, t), s)| s * e - t * softplus(*e))
            .sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximized Bernoulli log-likelihood with an intercept.
pub fn logistic_max_loglik(y: &[f64], columns: &[&[f64]]) -> Result<f64, EvidenceError> {
    let cells = Cells::grouped(y, columns).unwrap_or_else(|| Cells::ungrouped(y, columns));
    let m = cells.trials.len();
    let p = cells.design.len();
    let design = &cells.design;

    let mut eta = vec![0.0; m];
    let mut dev = -2.0 * cells.loglik(&eta);
    let mut w = vec![0.0; m];
    let mut z = vec![0.0; m];
    let mut wcol = vec![0.0; m];
    for _ in 0..IRLS_MAX_ITER {
        for i in 0..m {
            let mu = sigmoid(eta[i]);
            let v = (mu * (1.0 - mu)).max(1e-12);
            w[i] = cells.trials[i] * v;
            z[i] = eta[i] + (cells.successes[i] / cells.trials[i] - mu) / v;
        }
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwz = DVector::<f64>::zeros(p);
        for a in 0..p {
            for ((wa, c), wi) in wcol.iter_mut().zip(&design[a]).zip(&w) {
                *wa = c * wi;
            }
            xtwz[a] = dot(&wcol, &z);
            for b in a..p {
                let s = dot(&wcol, &design[b]);
                xtwx[(a, b)] = s;
                xtwx[(b, a)] = s;
            }
            xtwx[(a, a)] += IRLS_RIDGE;
        }
        let beta = match xtwx.clone().cholesky() {
            Some(ch) => ch.solve(&xtwz),
            None => xtwx
                .try_svd(true, true, f64::EPSILON, SVD_MAX_ITER)
                .ok_or(EvidenceError::Numerical("singular value decomposition did not converge"))?
                .solve(&xtwz, PINV_TOLERANCE)
                .map_err(EvidenceError::Numerical)?,
        };
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(EvidenceError::Numerical("non-finite IRLS update"));
        }
        eta.fill(0.0);
        for (col, b) in design.iter().zip(beta.iter()) {
            for (e, c) in eta.iter_mut().zip(col) {
                *e += c * b;
            }
        }
        let new_dev = -2.0 * cells.loglik(&eta);
        let converged = (dev - new_dev).abs() < IRLS_TOL * (new_dev.abs() + 0.1);
        dev = new_dev;
        if converged {
            return Ok(-0.5 * dev);
        }
    }
    Err(EvidenceError::NoConvergence(IRLS_MAX_ITER))
}

pub fn binomial_log_evidence(y: &[f64], columns: &[&[f64]]) -> Result<f64, EvidenceError> {
    let n = y.len();
    let k = columns.len();
    check_size(n, k)?;
    let ll = logistic_max_loglik(y, columns)?;
    Ok(ll - 0.5 * (k + 1) as f64 * (n as f64).ln())
}
