//! Imputation estimators: IMPINT (simulate training and test sets from the
//! fitted covariate and label models), its monotone smoothing, and the
//! LOOCV-anchored BRIE shift.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::covariate::CovariateModel;
use crate::curve::{CurvePoint, LearningCurve, Provenance};
use crate::error::{Error, Result};
use crate::logistic::{fit_logistic, fit_rule, loocv_error, sigmoid, Dataset, FitOptions, LogisticFit};
use crate::numerics::RngStream;

pub const DEFAULT_B: usize = 1000;
pub const DEFAULT_N: usize = 5000;

const TEST_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;

/// A synthetic population: covariates from `model`, labels Bernoulli with
/// `P(Y=1|x) = π(x; β̂)`.
#[derive(Debug, Clone, Copy)]
pub struct Population<'a> {
    pub model: &'a CovariateModel,
    pub fit: &'a LogisticFit,
}

impl<'a> Population<'a> {
    pub fn new(model: &'a CovariateModel, fit: &'a LogisticFit) -> Result<Self> {
        if model.dim() != fit.n_features() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: fit.n_features(),
            });
        }
        Ok(Self { model, fit })
    }

    /// `m` labelled rows drawn sequentially (covariates, then label, per row).
    pub fn draw(&self, m: usize, rng: RngStream) -> Dataset {
        let p = self.model.dim();
        let mut r = rng.rng();
        let mut x = DMatrix::zeros(m, p);
        let mut y = Vec::with_capacity(m);
        let mut scratch = vec![0.0; 2 * p];
        let mut row = vec![0.0; p];
        for i in 0..m {
            self.model.draw_into(&mut r, &mut scratch, &mut row);
            let prob = sigmoid(self.fit.linear_predictor(&row).expect("dimensions checked"));
            y.push(u8::from(r.random::<f64>() < prob));
            for j in 0..p {
                x[(i, j)] = row[j];
            }
        }
        Dataset::new(x, y).expect("synthetic data are finite and binary")
    }

    /// `P(Y=1|x)` for every row.
    pub fn probabilities(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.fit.linear_predictors(x).iter().map(|&e| sigmoid(e)).collect()
    }
}

/// Refit options matching the imputation fit (same intercept and κ).
fn refit_options(fit: &LogisticFit) -> FitOptions {
    FitOptions {
        intercept: fit.intercept,
        kappa: fit.kappa,
    }
}

/// Per-draw error rates at size `m` against a fixed test set.
fn draw_error_rates(pop: &Population<'_>, test: &Dataset, m: usize, draws: usize, rng: RngStream) -> Result<Vec<f64>> {
    let opts = refit_options(pop.fit);
    let counts = (0..draws)
        .into_par_iter()
        .map(|b| {
            let train = pop.draw(m, rng.path(&[TRAIN_STREAM, m as u64, b as u64]));
            let rule = fit_rule(&train, &opts)?;
            Ok(rule.count_errors(test.features(), test.labels()))
        })
        .collect::<Result<Vec<usize>>>()?;
    let n = test.n() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

fn check_impint_args(pop: &Population<'_>, m: usize, draws: usize, n_test: usize) -> Result<()> {
    let p = pop.model.dim();
    if m < p + 2 {
        return Err(Error::InvalidInput(format!("imputed training size {m} must be at least p + 2 = {}", p + 2)));
    }
    if draws == 0 || n_test == 0 {
        return Err(Error::InvalidInput("B and N must be at least 1".into()));
    }
    Ok(())
}

/// IMPINT estimate `τ̂_II(m)`: the average misclassification indicator of `B`
/// rules, each fitted to an imputed training set of size `m`, over one
/// imputed test set of size `N`.
///
/// The test set comes from a sub-stream that does not depend on `m`, so
/// calls at several sizes with the same `rng` share it; training set `b`
/// at size `m` is keyed by `(m, b)`.
pub fn impint_tau(
    model: &CovariateModel,
    fit: &LogisticFit,
    m: usize,
    draws: usize,
    n_test: usize,
    rng: RngStream,
) -> Result<f64> {
    let pop = Population::new(model, fit)?;
    check_impint_args(&pop, m, draws, n_test)?;
    let test = pop.draw(n_test, rng.child(TEST_STREAM));
    let rates = draw_error_rates(&pop, &test, m, draws, rng)?;
    Ok(mean(&rates))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_error(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let mu = mean(v);
    let var = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    Some((var / v.len() as f64).sqrt())
}

/// Raw IMPINT curve at `sizes`; identical, point by point, to calling
/// [`impint_tau`] at each size with the same stream.
pub fn impint_curve(
    model: &CovariateModel,
    fit: &LogisticFit,
    sizes: &[usize],
    draws: usize,
    n_test: usize,
    rng: RngStream,
) -> Result<LearningCurve> {
    let pop = Population::new(model, fit)?;
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    for &m in &sizes {
        check_impint_args(&pop, m, draws, n_test)?;
    }
    let test = pop.draw(n_test, rng.child(TEST_STREAM));
    let points = sizes
        .iter()
        .map(|&m| {
            let rates = draw_error_rates(&pop, &test, m, draws, rng)?;
            Ok(CurvePoint {
                m,
                value: mean(&rates),
                std_error: std_error(&rates),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LearningCurve::new(points, Provenance::ImpintRaw)
}

/// Weighted antitonic regression by pool-adjacent-violators: the
/// non-increasing `f` minimizing `Σ wᵢ (vᵢ − fᵢ)²`.
pub fn pava_nonincreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (weighted mean, total weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m1, w1, l1) = blocks[blocks.len() - 1];
            let (m0, w0, l0) = blocks[blocks.len() - 2];
            if m1 <= m0 {
                break;
            }
            blocks.pop();
            let w = w0 + w1;
            *blocks.last_mut().unwrap() = ((w0 * m0 + w1 * m1) / w, w, l0 + l1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, l)| std::iter::repeat_n(m, l))
        .collect()
}

/// Monotone (non-increasing) smoothing of a raw IMPINT curve.
pub fn monotone_smooth(curve: &LearningCurve, weights: &[f64]) -> Result<LearningCurve> {
    if curve.provenance() != Provenance::ImpintRaw {
        return Err(Error::InvalidInput("monotone smoothing applies to raw IMPINT curves".into()));
    }
    if curve.is_empty() {
        return Err(Error::InvalidInput("cannot smooth an empty curve".into()));
    }
    if weights.len() != curve.len() {
        return Err(Error::DimensionMismatch {
            expected: curve.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidInput("smoothing weights must be positive".into()));
    }
    let fitted = pava_nonincreasing(&curve.values(), weights);
    let points = curve
        .points()
        .iter()
        .zip(fitted)
        .map(|(p, v)| CurvePoint { value: v, ..*p })
        .collect();
    LearningCurve::new(points, Provenance::ImpintSmoothed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrieResult {
    pub curve: LearningCurve,
    pub raw: LearningCurve,
    pub smoothed: LearningCurve,
    pub cv_error: f64,
    pub fit: LogisticFit,
}

/// BRIE: IMPINT at `target_sizes ∪ {n−1}`, smoothed, then shifted so the
/// value at `n − 1` equals the LOOCV error of `data`.
pub fn brie_curve(
    data: &Dataset,
    model: &CovariateModel,
    target_sizes: &[usize],
    draws: usize,
    n_test: usize,
    opts: &FitOptions,
    rng: RngStream,
) -> Result<BrieResult> {
    let n = data.n();
    if n < 3 {
        return Err(Error::InvalidInput(format!("BRIE needs n >= 3, got {n}")));
    }
    let fit = fit_logistic(data, opts)?;
    let anchor = n - 1;
    let mut sizes = target_sizes.to_vec();
    sizes.push(anchor);
    let raw = impint_curve(model, &fit, &sizes, draws, n_test, rng)?;
    let smoothed = monotone_smooth(&raw, &vec![1.0; raw.len()])?;
    let cv_error = loocv_error(data, opts)?;
    let curve = LearningCurve::brie(&smoothed, anchor, cv_error)?;
    Ok(BrieResult {
        curve,
        raw,
        smoothed,
        cv_error,
        fit,
    })
}
