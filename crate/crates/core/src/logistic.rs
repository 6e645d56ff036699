//! Logistic regression by Newton/IRLS, the thresholded classification rule,
//! and the direct (resampling) error estimators built on it.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky_dense, cholesky_solve, RngStream};

pub const MAX_ITERATIONS: usize = 50;
pub const SCORE_TOL: f64 = 1e-8;
pub const DIVERGENCE_NORM: f64 = 1e4;
/// Penalties tried, in order, once the unpenalized fit fails.
pub const RIDGE_LADDER: [f64; 3] = [1e-6, 1e-4, 1e-2];

/// Features plus binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<u8>,
    column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<u8>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::InvalidInput("dataset has no rows".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidInput(format!("label {bad} is not 0 or 1")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("features contain non-finite values".into()));
        }
        Ok(Self {
            features,
            labels,
            column_names: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: names.len(),
            });
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            column_names: self.column_names.clone(),
        }
    }

    /// `Some(class)` if every label is the same.
    pub fn constant_label(&self) -> Option<u8> {
        let first = self.labels[0];
        self.labels.iter().all(|&y| y == first).then_some(first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub intercept: bool,
    /// Class-1 region is `xᵀβ > kappa`.
    pub kappa: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            intercept: true,
            kappa: 0.0,
        }
    }
}

impl FitOptions {
    /// No intercept: the simulation model has none.
    pub fn no_intercept() -> Self {
        Self {
            intercept: false,
            kappa: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Coefficients; when `intercept` is set, entry 0 is the intercept.
    pub beta: DVector<f64>,
    pub intercept: bool,
    pub kappa: f64,
    pub converged: bool,
    pub ridge_lambda_used: f64,
    pub iterations: usize,
}

impl LogisticFit {
    /// A rule with known coefficients (e.g. a true generative parameter).
    pub fn from_coefficients(beta: DVector<f64>, intercept: bool, kappa: f64) -> Self {
        Self {
            beta,
            intercept,
            kappa,
            converged: true,
            ridge_lambda_used: 0.0,
            iterations: 0,
        }
    }

    /// Number of feature columns the fit expects.
    pub fn n_features(&self) -> usize {
        self.beta.len() - usize::from(self.intercept)
    }

    pub fn slopes(&self) -> nalgebra::DVectorView<'_, f64> {
        let off = usize::from(self.intercept);
        self.beta.rows(off, self.beta.len() - off)
    }

    fn offset(&self) -> f64 {
        if self.intercept {
            self.beta[0]
        } else {
            0.0
        }
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.offset() + self.slopes().iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }

    pub fn predict_prob(&self, x: &[f64]) -> Result<f64> {
        self.linear_predictor(x).map(sigmoid)
    }

    /// 1 iff `xᵀβ̂ > κ`; the boundary goes to class 0.
    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        self.linear_predictor(x).map(|eta| u8::from(eta > self.kappa))
    }

    /// Linear predictors for every row of `x`.
    pub fn linear_predictors(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut eta = x * self.slopes();
        eta.add_scalar_mut(self.offset());
        eta
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^eta)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// A fitted classifier, or the constant-class rule used when a training
/// set holds a single class.
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Linear(LogisticFit),
    Constant(u8),
}

impl Rule {
    pub fn classify_row(&self, x: &[f64]) -> Result<u8> {
        match self {
            Rule::Linear(fit) => fit.classify(x),
            Rule::Constant(c) => Ok(*c),
        }
    }

    /// Predicted classes for every row.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<u8> {
        match self {
            Rule::Linear(fit) => fit
                .linear_predictors(x)
                .iter()
                .map(|&eta| u8::from(eta > fit.kappa))
                .collect(),
            Rule::Constant(c) => vec![*c; x.nrows()],
        }
    }

    pub fn count_errors(&self, x: &DMatrix<f64>, y: &[u8]) -> usize {
        self.predict(x).iter().zip(y).filter(|(a, b)| a != b).count()
    }

    /// Error of the rule when labels follow `P(Y=1|x) = probs[i]`:
    /// `Σ πᵢ·1{ĉ=0} + (1−πᵢ)·1{ĉ=1}`, summed over rows.
    pub fn expected_errors(&self, x: &DMatrix<f64>, probs: &[f64]) -> f64 {
        self.predict(x)
            .iter()
            .zip(probs)
            .map(|(&c, &pi)| if c == 1 { 1.0 - pi } else { pi })
            .sum()
    }
}

/// Fit, falling back to the constant rule when only one class is present.
pub fn fit_rule(data: &Dataset, opts: &FitOptions) -> Result<Rule> {
    if let Some(c) = data.constant_label() {
        return Ok(Rule::Constant(c));
    }
    fit_logistic(data, opts).map(Rule::Linear)
}

struct Newton {
    beta: DVector<f64>,
    converged: bool,
    iterations: usize,
    separated: bool,
}

fn design(data: &Dataset, intercept: bool) -> DMatrix<f64> {
    if intercept {
        data.features.clone().insert_column(0, 1.0)
    } else {
        data.features.clone()
    }
}

fn penalized_loglik(z: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, lambda: f64, pen_from: usize) -> f64 {
    let eta = z * beta;
    let ll: f64 = eta.iter().zip(y).map(|(&e, &yi)| yi * e - softplus(e)).sum();
    let pen: f64 = beta.iter().skip(pen_from).map(|b| b * b).sum();
    ll - 0.5 * lambda * pen
}

/// Damped Newton ascent on `ℓ(β) − λ/2 ‖β_pen‖²`. With `lambda == 0` the
/// loop also stops early on a separation certificate: an iterate that puts
/// every training point strictly on its own side of `zᵀβ = 0` proves the
/// MLE does not exist.
fn newton(z: &DMatrix<f64>, y: &[f64], lambda: f64, pen_from: usize) -> Newton {
    let (n, k) = z.shape();
    let mut beta = DVector::<f64>::zeros(k);
    let mut ll = penalized_loglik(z, y, &beta, lambda, pen_from);
    let mut zw = DMatrix::<f64>::zeros(n, k);
    for it in 0..=MAX_ITERATIONS {
        let eta = z * &beta;
        let pi: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_iterator(n, y.iter().zip(&pi).map(|(yi, p)| yi - p));
        let mut score = z.tr_mul(&resid);
        for j in pen_from..k {
            score[j] -= lambda * beta[j];
        }
        if score.amax() < SCORE_TOL {
            return Newton {
                beta,
                converged: true,
                iterations: it,
                separated: false,
            };
        }
        if it == MAX_ITERATIONS {
            break;
        }
        for (i, p) in pi.iter().enumerate() {
            let w = p * (1.0 - p);
            for j in 0..k {
                zw[(i, j)] = z[(i, j)] * w;
            }
        }
        let mut h = z.tr_mul(&zw);
        for j in pen_from..k {
            h[(j, j)] += lambda;
        }
        let Ok(l) = cholesky_dense(&h) else {
            return Newton {
                beta,
                converged: false,
                iterations: it,
                separated: lambda == 0.0,
            };
        };
        let step = cholesky_solve(&l, &score);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cand_ll = penalized_loglik(z, y, &cand, lambda, pen_from);
            if cand_ll >= ll - 1e-12 * ll.abs() {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Newton {
                beta,
                converged: false,
                iterations: it + 1,
                separated: false,
            };
        }
        if lambda == 0.0 {
            let eta = z * &beta;
            let separates = eta
                .iter()
                .zip(y)
                .all(|(&e, &yi)| if yi > 0.5 { e > 0.0 } else { e < 0.0 });
            if separates || beta.norm() > DIVERGENCE_NORM {
                return Newton {
                    beta,
                    converged: false,
                    iterations: it + 1,
                    separated: true,
                };
            }
        }
    }
    Newton {
        beta,
        converged: false,
        iterations: MAX_ITERATIONS,
        separated: false,
    }
}

/// Maximum-likelihood logistic regression. Separation or non-convergence
/// triggers refits along [`RIDGE_LADDER`]; the intercept is never penalized.
pub fn fit_logistic(data: &Dataset, opts: &FitOptions) -> Result<LogisticFit> {
    if data.n() < 2 {
        return Err(Error::InvalidInput("logistic fit needs at least 2 rows".into()));
    }
    if let Some(class) = data.constant_label() {
        if !opts.intercept {
            return Err(Error::OneClassOnly { class });
        }
        let n = data.n() as f64;
        let level = ((n + 0.5) / 0.5).ln();
        let mut beta = DVector::zeros(data.p() + 1);
        beta[0] = if class == 1 { level } else { -level };
        return Ok(LogisticFit {
            beta,
            intercept: true,
            kappa: opts.kappa,
            converged: true,
            ridge_lambda_used: 0.0,
            iterations: 0,
        });
    }
    let z = design(data, opts.intercept);
    let y: Vec<f64> = data.labels.iter().map(|&v| f64::from(v)).collect();
    let pen_from = usize::from(opts.intercept);

    let plain = newton(&z, &y, 0.0, pen_from);
    if plain.converged && !plain.separated && plain.beta.norm() <= DIVERGENCE_NORM {
        return Ok(LogisticFit {
            beta: plain.beta,
            intercept: opts.intercept,
            kappa: opts.kappa,
            converged: true,
            ridge_lambda_used: 0.0,
            iterations: plain.iterations,
        });
    }
    let mut iterations = plain.iterations;
    let mut last = None;
    for &lambda in &RIDGE_LADDER {
        let fit = newton(&z, &y, lambda, pen_from);
        iterations += fit.iterations;
        let ok = fit.converged && fit.beta.norm() <= DIVERGENCE_NORM;
        last = Some(LogisticFit {
            beta: fit.beta,
            intercept: opts.intercept,
            kappa: opts.kappa,
            converged: ok,
            ridge_lambda_used: lambda,
            iterations,
        });
        if ok {
            break;
        }
    }
    Ok(last.expect("ridge ladder is non-empty"))
}

/// Penalized fit at a fixed `lambda`, without the escalation policy.
pub fn fit_logistic_ridge(data: &Dataset, opts: &FitOptions, lambda: f64) -> Result<LogisticFit> {
    if data.n() < 2 {
        return Err(Error::InvalidInput("logistic fit needs at least 2 rows".into()));
    }
    let z = design(data, opts.intercept);
    let y: Vec<f64> = data.labels.iter().map(|&v| f64::from(v)).collect();
    let fit = newton(&z, &y, lambda, usize::from(opts.intercept));
    Ok(LogisticFit {
        beta: fit.beta,
        intercept: opts.intercept,
        kappa: opts.kappa,
        converged: fit.converged,
        ridge_lambda_used: lambda,
        iterations: fit.iterations,
    })
}

/// Leave-one-out misclassification rate, an unbiased estimate of `τ(n−1)`.
pub fn loocv_error(data: &Dataset, opts: &FitOptions) -> Result<f64> {
    let n = data.n();
    if n < 3 {
        return Err(Error::InvalidInput(format!("LOOCV needs n >= 3, got {n}")));
    }
    let wrong = (0..n)
        .into_par_iter()
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let rule = fit_rule(&data.subset(&keep), opts)?;
            let x: Vec<f64> = data.features.row(i).iter().copied().collect();
            Ok(usize::from(rule.classify_row(&x)? != data.labels[i]))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(wrong.iter().sum::<usize>() as f64 / n as f64)
}

/// Mean hold-out error over `draws` random subsets of size `m_prime`, each
/// rule evaluated on its complement.
pub fn subsample_error(data: &Dataset, m_prime: usize, draws: usize, opts: &FitOptions, rng: RngStream) -> Result<f64> {
    let n = data.n();
    if m_prime < 2 || m_prime + 2 > n {
        return Err(Error::InvalidInput(format!(
            "subsample size must satisfy 2 <= m' <= n-2 (m'={m_prime}, n={n})"
        )));
    }
    if draws == 0 {
        return Err(Error::InvalidInput("need at least one subsample draw".into()));
    }
    let rates = (0..draws)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.child(b as u64).rng();
            let mut chosen = index::sample(&mut r, n, m_prime).into_vec();
            chosen.sort_unstable();
            let mut in_train = vec![false; n];
            for &i in &chosen {
                in_train[i] = true;
            }
            let held: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
            let rule = fit_rule(&data.subset(&chosen), opts)?;
            let test = data.subset(&held);
            Ok(rule.count_errors(test.features(), test.labels()) as f64 / held.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rates.iter().sum::<f64>() / draws as f64)
}
