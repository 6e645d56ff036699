//! Dense linear algebra, sampling and Gaussian fitting shared by the
//! estimators.

mod normal;
mod rng;

pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile};
pub use rng::RngStream;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible Cholesky pivot.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// A symmetric matrix. Construction checks symmetry and then stores the
/// exactly-symmetrized average of the input and its transpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self(sym))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    /// `r^{|i-j|}` correlation with unit diagonal.
    pub fn ar1(p: usize, r: f64) -> Self {
        Self::ar1_scaled(p, 1.0, r)
    }

    /// `sigma2 * rho^{|i-j|}`.
    pub fn ar1_scaled(p: usize, sigma2: f64, rho: f64) -> Self {
        Self(DMatrix::from_fn(p, p, |i, j| {
            sigma2 * rho.powi(i.abs_diff(j) as i32)
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Add `eps` to every diagonal entry.
    pub fn add_diagonal(&self, eps: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += eps;
        }
        Self(m)
    }

    /// Extreme eigenvalues `(min, max)`.
    pub fn eigen_range(&self) -> (f64, f64) {
        let ev = SymmetricEigen::new(self.0.clone()).eigenvalues;
        (ev.min(), ev.max())
    }
}

/// Lower-triangular `L` with `L Lᵀ = S`.
pub fn cholesky(s: &SymMatrix) -> Result<DMatrix<f64>> {
    cholesky_dense(s.as_matrix())
}

/// Cholesky factorization of a matrix assumed symmetric; only the lower
/// triangle is read.
pub(crate) fn cholesky_dense(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= PIVOT_FLOOR {
            return Err(Error::NotPositiveDefinite { column: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solve `L Lᵀ x = b` given the lower factor.
pub(crate) fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let p = l.nrows();
    let mut y = b.clone();
    for i in 0..p {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Pre-factored multivariate normal, reused across many draws.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnSampler {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

impl MvnSampler {
    pub fn new(mean: DVector<f64>, cov: &SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                got: mean.len(),
            });
        }
        Ok(Self {
            mean,
            chol: cholesky(cov)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fill `out` with one draw. Consumes exactly `p` standard normals from
    /// `rng`, so row `i` of a sequential batch does not depend on the batch
    /// size.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        let p = self.dim();
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        for i in 0..p {
            let mut s = self.mean[i];
            for k in 0..=i {
                s += self.chol[(i, k)] * z[k];
            }
            out[i] = s;
        }
    }

    /// `m` i.i.d. rows.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.dim();
        let mut x = DMatrix::zeros(m, p);
        let mut z = vec![0.0; p];
        let mut row = vec![0.0; p];
        for i in 0..m {
            self.draw_into(rng, &mut z, &mut row);
            for j in 0..p {
                x[(i, j)] = row[j];
            }
        }
        x
    }
}

/// `m` rows i.i.d. `N(mean, cov)`, deterministic in the stream.
pub fn sample_mvn(mean: &DVector<f64>, cov: &SymMatrix, m: usize, rng: RngStream) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    let sampler = MvnSampler::new(mean.clone(), cov)?;
    Ok(sampler.sample(m, &mut rng.rng()))
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Plug-in covariance with divisor `n`.
pub fn plugin_covariance(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut c = x.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    c.tr_mul(&c) / n
}

/// Sufficient statistics of the structured `σ²ρ^{|i-j|}` likelihood: the
/// diagonal and first off-diagonal of the centered scatter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Stats {
    n: usize,
    diag: Vec<f64>,
    lag1: Vec<f64>,
}

impl Ar1Stats {
    pub fn from_data(x: &DMatrix<f64>, mean: &DVector<f64>) -> Self {
        let (n, p) = x.shape();
        let mut diag = vec![0.0; p];
        let mut lag1 = vec![0.0; p.saturating_sub(1)];
        for i in 0..n {
            let mut prev = x[(i, 0)] - mean[0];
            diag[0] += prev * prev;
            for j in 1..p {
                let cur = x[(i, j)] - mean[j];
                diag[j] += cur * cur;
                lag1[j - 1] += prev * cur;
                prev = cur;
            }
        }
        Self { n, diag, lag1 }
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `tr(R(ρ)⁻¹ S)`, using the tridiagonal AR(1) inverse.
    fn quad_form(&self, rho: f64) -> f64 {
        let p = self.dim();
        let ends = self.diag[0] + self.diag[p - 1];
        let inner: f64 = self.diag[1..p - 1].iter().sum();
        let cross: f64 = self.lag1.iter().sum();
        (ends + (1.0 + rho * rho) * inner - 2.0 * rho * cross) / (1.0 - rho * rho)
    }

    /// Profiled `σ̂²(ρ)`.
    pub fn sigma2(&self, rho: f64) -> f64 {
        self.quad_form(rho) / (self.n * self.dim()) as f64
    }

    /// Gaussian log-likelihood with `μ` and `σ²` profiled out.
    pub fn profile_loglik(&self, rho: f64) -> f64 {
        let p = self.dim() as f64;
        let n = self.n as f64;
        let s2 = self.sigma2(rho);
        -0.5 * n * (p * s2.ln() + (p - 1.0) * (1.0 - rho * rho).ln() + p * (1.0 + (2.0 * std::f64::consts::PI).ln()))
    }
}

/// Maximum-likelihood fit of the structured normal model.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Fit {
    pub mean: DVector<f64>,
    pub sigma2: f64,
    pub rho: f64,
    /// `ρ̂` landed on the edge of the search interval.
    pub at_boundary: bool,
}

impl Ar1Fit {
    pub fn covariance(&self) -> SymMatrix {
        SymMatrix::ar1_scaled(self.mean.len(), self.sigma2, self.rho)
    }
}

pub const RHO_LIMIT: f64 = 0.999;
const GOLDEN_TOL: f64 = 1e-5;

/// Minimize a unimodal function on `[lo, hi]` by golden-section search.
pub(crate) fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Fit `N(μ, σ²ρ^{|i-j|})`. `μ̂` is the column mean; `ρ̂` comes from a coarse
/// scan of the profile likelihood followed by golden-section refinement.
pub fn fit_mvn_ar1(x: &DMatrix<f64>) -> Result<Ar1Fit> {
    let (n, p) = x.shape();
    if n < 3 || p < 2 {
        return Err(Error::InvalidInput(format!(
            "structured normal fit needs n >= 3 and p >= 2, got n={n}, p={p}"
        )));
    }
    let mean = column_means(x);
    let stats = Ar1Stats::from_data(x, &mean);
    let pooled = stats.diag.iter().sum::<f64>() / (n * p) as f64;
    if !(pooled >= 1e-12) {
        return Err(Error::DegenerateData(format!("pooled variance {pooled:.3e}")));
    }
    let neg = |rho: f64| -stats.profile_loglik(rho);

    let steps = 200usize;
    let h = 2.0 * RHO_LIMIT / steps as f64;
    let grid = |k: usize| -RHO_LIMIT + k as f64 * h;
    let best = (0..=steps)
        .map(|k| (k, neg(grid(k))))
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::DegenerateData("profile likelihood is not finite".into()))?;
    let lo = grid(best.saturating_sub(1));
    let hi = grid((best + 1).min(steps));
    let mut rho = golden_section(neg, lo, hi, GOLDEN_TOL);
    if neg(grid(best)) < neg(rho) {
        rho = grid(best);
    }
    let sigma2 = stats.sigma2(rho);
    let at_boundary = rho.abs() > RHO_LIMIT - 2.0 * h;
    Ok(Ar1Fit {
        mean,
        sigma2,
        rho,
        at_boundary,
    })
}

/// Unrestricted Gaussian fit with the divisor-`n` covariance.
pub fn fit_mvn_full(x: &DMatrix<f64>) -> Result<(DVector<f64>, SymMatrix)> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput("empty data matrix".into()));
    }
    let mean = column_means(x);
    let cov = SymMatrix::new(plugin_covariance(x, &mean))?;
    let (min_eig, max_eig) = cov.eigen_range();
    if !(max_eig > 0.0) || min_eig < 1e-10 * max_eig {
        return Err(Error::SingularCovariance { min_eig, max_eig });
    }
    Ok((mean, cov))
}

/// Ridge jitter applied when a fitted covariance is singular: `1e-8·tr/p`,
/// with an absolute floor for all-zero spread.
pub fn ridge_jitter(cov: &SymMatrix) -> SymMatrix {
    let eps = (1e-8 * cov.trace() / cov.dim() as f64).max(1e-10);
    cov.add_diagonal(eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let s = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0])).unwrap();
        let l = cholesky(&s).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2f64.sqrt()]);
        assert!(max_abs_diff(&l, &expect) < 1e-15);
        assert!(max_abs_diff(&(&l * l.transpose()), s.as_matrix()) < 1e-14);
    }

    #[test]
    fn cholesky_ar1_zero_is_identity() {
        for p in [1, 4, 9] {
            assert_eq!(cholesky(&SymMatrix::ar1(p, 0.0)).unwrap(), DMatrix::identity(p, p));
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let s = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(matches!(cholesky(&s), Err(Error::NotPositiveDefinite { column: 1, .. })));
        let z = SymMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(cholesky(&z), Err(Error::NotPositiveDefinite { column: 0, .. })));
    }

    #[test]
    fn symmatrix_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn cholesky_solve_inverts() {
        let s = SymMatrix::ar1_scaled(5, 2.0, 0.6);
        let l = cholesky(&s).unwrap();
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        let x = cholesky_solve(&l, &b);
        assert!((s.as_matrix() * x - b).amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn cholesky_recovers_random_factor(p in 1usize..=20, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = RngStream::new(seed, 0).rng();
            let l0 = DMatrix::from_fn(p, p, |i, j| {
                if i > j { rng.random_range(-1.0..1.0) }
                else if i == j { rng.random_range(0.5..2.0) }
                else { 0.0 }
            });
            let s = SymMatrix::new(&l0 * l0.transpose()).unwrap();
            let l = cholesky(&s).unwrap();
            prop_assert!(max_abs_diff(&l, &l0) < 1e-9);
            let rec = &l * l.transpose();
            prop_assert!(max_abs_diff(&rec, s.as_matrix()) < 1e-10 * s.as_matrix().amax());
        }
    }

    #[test]
    fn sample_mvn_deterministic() {
        let cov = SymMatrix::ar1(3, 0.4);
        let mean = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = sample_mvn(&mean, &cov, 50, RngStream::new(9, 1)).unwrap();
        let b = sample_mvn(&mean, &cov, 50, RngStream::new(9, 1)).unwrap();
        assert_eq!(a, b);
        let c = sample_mvn(&mean, &cov, 80, RngStream::new(9, 1)).unwrap();
        assert_eq!(a, c.rows(0, 50).into_owned());
    }

    #[test]
    fn sample_mvn_moments() {
        let x = sample_mvn(&DVector::zeros(2), &SymMatrix::identity(2), 10_000, RngStream::new(3, 0)).unwrap();
        let mu = column_means(&x);
        assert!(mu.amax() < 3.5 / 100.0);

        let cov = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0])).unwrap();
        let x = sample_mvn(&DVector::zeros(2), &cov, 10_000, RngStream::new(4, 0)).unwrap();
        let mu = column_means(&x);
        let c = plugin_covariance(&x, &mu);
        let corr = c[(0, 1)] / (c[(0, 0)] * c[(1, 1)]).sqrt();
        assert!((corr - 0.9).abs() < 0.02, "corr = {corr}");
    }

    #[test]
    fn sample_mvn_identity_passes_ks() {
        let m = 10_000;
        let x = sample_mvn(&DVector::zeros(3), &SymMatrix::identity(3), m, RngStream::new(5, 2)).unwrap();
        // Kolmogorov–Smirnov critical value at level 1e-4.
        let crit = (-(1e-4f64 / 2.0).ln() / 2.0).sqrt() / (m as f64).sqrt();
        for col in x.column_iter() {
            let mut v: Vec<f64> = col.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            let d = v
                .iter()
                .enumerate()
                .map(|(i, &xi)| {
                    let f = std_normal_cdf(xi);
                    (f - i as f64 / m as f64).abs().max(((i + 1) as f64 / m as f64 - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(d < crit, "KS statistic {d} >= {crit}");
        }
    }

    #[test]
    fn ar1_fit_consistent() {
        let x = sample_mvn(&DVector::zeros(10), &SymMatrix::identity(10), 5000, RngStream::new(11, 0)).unwrap();
        let fit = fit_mvn_ar1(&x).unwrap();
        assert!(fit.rho.abs() < 0.03, "rho = {}", fit.rho);

        let x = sample_mvn(&DVector::zeros(15), &SymMatrix::ar1(15, 0.75), 5000, RngStream::new(12, 0)).unwrap();
        let fit = fit_mvn_ar1(&x).unwrap();
        assert!(fit.rho > 0.72 && fit.rho < 0.78, "rho = {}", fit.rho);
        assert!(fit.sigma2 > 0.95 && fit.sigma2 < 1.05, "sigma2 = {}", fit.sigma2);
        assert!(!fit.at_boundary);
    }

    #[test]
    fn ar1_fit_locally_optimal() {
        for (seed, r) in [(1u64, 0.1), (2, 0.5), (3, -0.3), (4, 0.9)] {
            let x = sample_mvn(&DVector::zeros(6), &SymMatrix::ar1(6, r), 40, RngStream::new(seed, 0)).unwrap();
            let fit = fit_mvn_ar1(&x).unwrap();
            let stats = Ar1Stats::from_data(&x, &fit.mean);
            let at = stats.profile_loglik(fit.rho);
            for d in [-0.01, 0.01] {
                let rho = (fit.rho + d).clamp(-RHO_LIMIT, RHO_LIMIT);
                assert!(at >= stats.profile_loglik(rho), "seed {seed}");
            }
        }
    }

    #[test]
    fn ar1_fit_duplicate_columns_hits_boundary() {
        let col: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = DMatrix::from_fn(20, 2, |i, _| col[i]);
        let fit = fit_mvn_ar1(&x).unwrap();
        assert!(fit.at_boundary && fit.rho > 0.99);
    }

    #[test]
    fn ar1_fit_constant_data_is_degenerate() {
        let x = DMatrix::from_element(10, 3, 2.5);
        assert!(matches!(fit_mvn_ar1(&x), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn full_fit_singular_duplicate_point() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(fit_mvn_full(&x), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn full_fit_orthogonal_columns_diagonal() {
        // centered, orthogonal columns of norm sqrt(n)
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, -1.0]);
        let (mu, cov) = fit_mvn_full(&x).unwrap();
        assert_eq!(mu, DVector::zeros(2));
        assert_eq!(cov.as_matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn full_fit_recovers_covariance() {
        let sigma = SymMatrix::ar1_scaled(4, 1.5, 0.5);
        let x = sample_mvn(&DVector::from_element(4, 1.0), &sigma, 10_000, RngStream::new(21, 0)).unwrap();
        let (_, cov) = fit_mvn_full(&x).unwrap();
        assert!(max_abs_diff(cov.as_matrix(), sigma.as_matrix()) < 0.05);
    }
}
