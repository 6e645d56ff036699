//! Monte-Carlo harness: known generative models, oracle learning curves,
//! replicate studies of the estimators and the resampling study on a
//! fixed dataset.

mod dataset_study;
mod study;

pub use dataset_study::{dataset_study, DatasetStudyConfig, DatasetStudyRow};
pub use study::{run_mc_scenario, run_mc_study, Estimator, Quantity, Scenario, StudyConfig, StudyResult, StudyRow};

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::curve::{CurvePoint, LearningCurve, Provenance};
use crate::error::{Error, Result};
use crate::logistic::{fit_rule, sigmoid, Dataset, FitOptions};
use crate::numerics::{MvnSampler, RngStream, SymMatrix};

const TEST_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;

/// `X ~ N(0, Σ)` with `Σᵢⱼ = r^|i−j|`, `P(Y=1|x) = π(xᵀβ*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    pub p: usize,
    pub r: f64,
    pub beta_star: DVector<f64>,
    pub kappa: f64,
    sampler: MvnSampler,
}

impl GenerativeModel {
    /// The standard scenario: β* a vector of ones, κ = 0.
    pub fn new(p: usize, r: f64) -> Result<Self> {
        Self::with_beta(r, DVector::from_element(p, 1.0), 0.0)
    }

    pub fn with_beta(r: f64, beta_star: DVector<f64>, kappa: f64) -> Result<Self> {
        let p = beta_star.len();
        if p == 0 {
            return Err(Error::InvalidInput("generative model needs p >= 1".into()));
        }
        if !(r.abs() < 1.0) {
            return Err(Error::Domain(format!("correlation r must lie in (-1, 1), got {r}")));
        }
        if !kappa.is_finite() || beta_star.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("β* and κ must be finite".into()));
        }
        let sampler = MvnSampler::new(DVector::zeros(p), &SymMatrix::ar1(p, r))?;
        Ok(Self {
            p,
            r,
            beta_star,
            kappa,
            sampler,
        })
    }

    /// Harness fits: no intercept, threshold κ.
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            intercept: false,
            kappa: self.kappa,
        }
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(x.iter().zip(self.beta_star.iter()).map(|(a, b)| a * b).sum())
    }

    /// `m` labelled rows, drawn row by row, so a shorter draw from the same
    /// stream is a prefix of a longer one.
    pub fn draw(&self, m: usize, rng: RngStream) -> Dataset {
        let mut r = rng.rng();
        let mut x = nalgebra::DMatrix::zeros(m, self.p);
        let mut y = Vec::with_capacity(m);
        let mut z = vec![0.0; self.p];
        let mut row = vec![0.0; self.p];
        for i in 0..m {
            self.sampler.draw_into(&mut r, &mut z, &mut row);
            y.push(u8::from(r.random::<f64>() < self.prob(&row)));
            for j in 0..self.p {
                x[(i, j)] = row[j];
            }
        }
        Dataset::new(x, y).expect("generated data are finite and binary")
    }
}

/// Oracle learning curve by Monte Carlo. Replicate `k` draws one test set
/// of size `N` and one training sequence; the training set at size `m` is
/// the first `m` rows of that sequence. Each fitted rule is scored by its
/// exact conditional error given the test covariates,
/// `N⁻¹ Σ [π(xᵢ)·1{ĉ(xᵢ)=0} + (1−π(xᵢ))·1{ĉ(xᵢ)=1}]`.
/// The reported standard error is that of the replicate mean.
pub fn true_curve_oracle(
    gm: &GenerativeModel,
    sizes: &[usize],
    reps: usize,
    n_test: usize,
    rng: RngStream,
) -> Result<LearningCurve> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let Some(&largest) = sizes.last() else {
        return Err(Error::InvalidInput("oracle needs at least one size".into()));
    };
    if sizes[0] < gm.p + 2 {
        return Err(Error::InvalidInput(format!(
            "oracle sizes must be at least p + 2 = {}, got {}",
            gm.p + 2,
            sizes[0]
        )));
    }
    if reps == 0 || n_test == 0 {
        return Err(Error::InvalidInput("reps and N must be at least 1".into()));
    }
    let opts = gm.fit_options();
    let per_rep = (0..reps)
        .into_par_iter()
        .map(|k| {
            let test = gm.draw(n_test, rng.path(&[TEST_STREAM, k as u64]));
            let probs: Vec<f64> = (0..n_test)
                .map(|i| {
                    let row: Vec<f64> = test.features().row(i).iter().copied().collect();
                    gm.prob(&row)
                })
                .collect();
            let train = gm.draw(largest, rng.path(&[TRAIN_STREAM, k as u64]));
            sizes
                .iter()
                .map(|&m| {
                    let idx: Vec<usize> = (0..m).collect();
                    let rule = fit_rule(&train.subset(&idx), &opts)?;
                    Ok(rule.expected_errors(test.features(), &probs) / n_test as f64)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let points = sizes
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let v: Vec<f64> = per_rep.iter().map(|r| r[j]).collect();
            let (mean, sd) = mean_sd(&v);
            CurvePoint {
                m,
                value: mean,
                std_error: sd.map(|s| s / (reps as f64).sqrt()),
            }
        })
        .collect();
    LearningCurve::new(points, Provenance::Oracle)
}

/// Mean and sample SD (divisor `len − 1`; `None` for a single value).
pub(crate) fn mean_sd(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, None);
    }
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, Some((ss / (n - 1.0)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_models() {
        assert!(GenerativeModel::new(3, 1.0).is_err());
        assert!(GenerativeModel::new(0, 0.1).is_err());
        assert!(GenerativeModel::new(3, -0.99).is_ok());
    }

    #[test]
    fn draws_are_prefix_stable() {
        let gm = GenerativeModel::new(4, 0.3).unwrap();
        let s = RngStream::new(5, 5);
        let a = gm.draw(10, s);
        let b = gm.draw(25, s);
        assert_eq!(a, b.subset(&(0..10).collect::<Vec<_>>()));
    }

    #[test]
    fn null_oracle_is_half() {
        let gm = GenerativeModel::with_beta(0.2, DVector::zeros(3), 0.0).unwrap();
        let (reps, n) = (40, 2000);
        let c = true_curve_oracle(&gm, &[10, 30], reps, n, RngStream::new(1, 0)).unwrap();
        // labels are independent of x: every rule has conditional error 1/2
        let tol = 2.0 / ((reps * n) as f64).sqrt();
        for v in c.values() {
            assert!((v - 0.5).abs() < tol.max(1e-12), "{v}");
        }
    }

    #[test]
    fn oracle_rejects_small_sizes() {
        let gm = GenerativeModel::new(5, 0.1).unwrap();
        assert!(true_curve_oracle(&gm, &[6, 20], 2, 10, RngStream::new(0, 0)).is_err());
        assert!(true_curve_oracle(&gm, &[], 2, 10, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn mean_sd_divisor() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_sd(&[0.3]).1, None);
    }
}
