//! Fitted, sampleable models of the covariate distribution.
//!
//! Four kinds are offered: the structured `σ²ρ^{|i-j|}` normal, an
//! unrestricted normal, a Gaussian mixture stratified on the joint pattern
//! of binary columns, and a Gaussian copula over the empirical marginals.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    cholesky, column_means, fit_mvn_ar1, fit_mvn_full, plugin_covariance, ridge_jitter, std_normal_cdf,
    std_normal_quantile, Ar1Fit, MvnSampler, RngStream, SymMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    MvnAr1,
    MvnFull,
    GaussianMixture,
    GaussianCopula,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::MvnAr1 => "mvn-ar1",
            ModelKind::MvnFull => "mvn-full",
            ModelKind::GaussianMixture => "gm",
            ModelKind::GaussianCopula => "gc",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mvn-ar1" => Ok(ModelKind::MvnAr1),
            "mvn-full" => Ok(ModelKind::MvnFull),
            "gm" => Ok(ModelKind::GaussianMixture),
            "gc" => Ok(ModelKind::GaussianCopula),
            other => Err(Error::InvalidInput(format!(
                "unknown covariate model '{other}' (expected mvn-ar1, mvn-full, gm or gc)"
            ))),
        }
    }
}

/// Stratified Gaussian mixture: one component per observed pattern of the
/// binary columns, all sharing the pooled within-stratum covariance of the
/// remaining columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureStratification {
    pub binary_columns: Vec<usize>,
    pub continuous_columns: Vec<usize>,
    pub patterns: Vec<Vec<u8>>,
    pub means: Vec<DVector<f64>>,
    pub pooled_cov: Option<SymMatrix>,
    pub weights: Vec<f64>,
    /// Patterns seen fewer than twice, excluded from the mixture.
    pub dropped: Vec<(Vec<u8>, usize)>,
    sampler: Option<MvnSampler>,
    cumulative: Vec<f64>,
}

/// Gaussian copula with empirical margins.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaModel {
    /// Each column's observed values, sorted ascending.
    pub sorted_columns: Vec<Vec<f64>>,
    pub latent_corr: SymMatrix,
    /// The score correlation needed an eigenvalue floor.
    pub projected: bool,
    sampler: MvnSampler,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateModel {
    MvnAr1 {
        fit: Ar1Fit,
        sampler: MvnSampler,
    },
    MvnFull {
        mean: DVector<f64>,
        cov: SymMatrix,
        jittered: bool,
        sampler: MvnSampler,
    },
    GaussianMixture(MixtureStratification),
    GaussianCopula(CopulaModel),
}

const PSD_FLOOR: f64 = 1e-6;

impl CovariateModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            CovariateModel::MvnAr1 { .. } => ModelKind::MvnAr1,
            CovariateModel::MvnFull { .. } => ModelKind::MvnFull,
            CovariateModel::GaussianMixture(_) => ModelKind::GaussianMixture,
            CovariateModel::GaussianCopula(_) => ModelKind::GaussianCopula,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovariateModel::MvnAr1 { sampler, .. } | CovariateModel::MvnFull { sampler, .. } => sampler.dim(),
            CovariateModel::GaussianMixture(g) => g.binary_columns.len() + g.continuous_columns.len(),
            CovariateModel::GaussianCopula(c) => c.sorted_columns.len(),
        }
    }

    /// Fill `out` (length `dim`) with one draw; `scratch` needs length
    /// `2 * dim`. Each call consumes a fixed pattern of randomness, so a
    /// sequential batch is a prefix of any longer batch.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut [f64], out: &mut [f64]) {
        match self {
            CovariateModel::MvnAr1 { sampler, .. } | CovariateModel::MvnFull { sampler, .. } => {
                sampler.draw_into(rng, &mut scratch[..sampler.dim()], out)
            }
            CovariateModel::GaussianMixture(g) => {
                let u: f64 = rng.random();
                let k = g
                    .cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(g.cumulative.len() - 1);
                for (&col, &v) in g.binary_columns.iter().zip(&g.patterns[k]) {
                    out[col] = f64::from(v);
                }
                if let Some(s) = &g.sampler {
                    let q = g.continuous_columns.len();
                    let (z, cont) = scratch[..2 * q].split_at_mut(q);
                    s.draw_into(rng, z, cont);
                    for (j, &col) in g.continuous_columns.iter().enumerate() {
                        out[col] = g.means[k][j] + cont[j];
                    }
                }
            }
            CovariateModel::GaussianCopula(c) => {
                let p = c.sorted_columns.len();
                let (z, latent) = scratch[..2 * p].split_at_mut(p);
                c.sampler.draw_into(rng, z, latent);
                for (j, col) in c.sorted_columns.iter().enumerate() {
                    out[j] = inverse_empirical(col, std_normal_cdf(latent[j]));
                }
            }
        }
    }

    /// `m` rows drawn sequentially from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.dim();
        let mut x = DMatrix::zeros(m, p);
        let mut scratch = vec![0.0; 2 * p];
        let mut row = vec![0.0; p];
        for i in 0..m {
            self.draw_into(rng, &mut scratch, &mut row);
            for j in 0..p {
                x[(i, j)] = row[j];
            }
        }
        x
    }
}

/// Left-continuous empirical quantile: the `⌈u·n⌉`-th order statistic.
fn inverse_empirical(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let k = ((u * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Fit a covariate model of the requested kind to the rows of `x`.
pub fn fit_covariate_model(kind: ModelKind, x: &DMatrix<f64>, binary_columns: Option<&[usize]>) -> Result<CovariateModel> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput("empty covariate matrix".into()));
    }
    match kind {
        ModelKind::MvnAr1 => {
            let fit = fit_mvn_ar1(x)?;
            let sampler = MvnSampler::new(fit.mean.clone(), &fit.covariance())?;
            Ok(CovariateModel::MvnAr1 { fit, sampler })
        }
        ModelKind::MvnFull => {
            let (n, p) = x.shape();
            if n <= p {
                return Err(Error::InvalidInput(format!(
                    "unrestricted normal needs n > p (n={n}, p={p})"
                )));
            }
            let (mean, cov, jittered) = match fit_mvn_full(x) {
                Ok((m, c)) => (m, c, false),
                Err(Error::SingularCovariance { .. }) => {
                    let mean = column_means(x);
                    let raw = SymMatrix::new(plugin_covariance(x, &mean))?;
                    log::warn!("unrestricted covariance is singular; adding ridge jitter");
                    (mean, ridge_jitter(&raw), true)
                }
                Err(e) => return Err(e),
            };
            let sampler = MvnSampler::new(mean.clone(), &cov)?;
            Ok(CovariateModel::MvnFull {
                mean,
                cov,
                jittered,
                sampler,
            })
        }
        ModelKind::GaussianMixture => {
            let cols = binary_columns
                .ok_or_else(|| Error::InvalidInput("Gaussian mixture needs binary columns".into()))?;
            fit_mixture(x, cols).map(CovariateModel::GaussianMixture)
        }
        ModelKind::GaussianCopula => fit_copula(x).map(CovariateModel::GaussianCopula),
    }
}

/// `m` draws from a fitted model.
pub fn sample_covariates(model: &CovariateModel, m: usize, rng: RngStream) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    Ok(model.sample(m, &mut rng.rng()))
}

fn fit_mixture(x: &DMatrix<f64>, binary: &[usize]) -> Result<MixtureStratification> {
    let (n, p) = x.shape();
    let mut binary_columns = binary.to_vec();
    binary_columns.sort_unstable();
    binary_columns.dedup();
    if binary_columns.is_empty() {
        return Err(Error::InvalidInput("Gaussian mixture needs at least one binary column".into()));
    }
    if let Some(&c) = binary_columns.iter().find(|&&c| c >= p) {
        return Err(Error::InvalidInput(format!("binary column {c} out of range (p={p})")));
    }
    for &c in &binary_columns {
        if x.column(c).iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput(format!("column {c} is not 0/1-valued")));
        }
    }
    let continuous_columns: Vec<usize> = (0..p).filter(|c| !binary_columns.contains(c)).collect();

    let mut strata: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let pat = binary_columns.iter().map(|&c| x[(i, c)] as u8).collect();
        strata.entry(pat).or_default().push(i);
    }
    let mut dropped = Vec::new();
    strata.retain(|pat, rows| {
        if rows.len() < 2 {
            log::warn!("dropping binary pattern {pat:?} with {} observation(s)", rows.len());
            dropped.push((pat.clone(), rows.len()));
            false
        } else {
            true
        }
    });
    if strata.is_empty() {
        let (pattern, count) = dropped.into_iter().next().expect("n >= 1");
        return Err(Error::EmptyStratum { pattern, count });
    }

    let kept: usize = strata.values().map(Vec::len).sum();
    let q = continuous_columns.len();
    let mut patterns = Vec::new();
    let mut means = Vec::new();
    let mut weights = Vec::new();
    let mut scatter = DMatrix::<f64>::zeros(q, q);
    for (pat, rows) in &strata {
        let block = x.select_rows(rows).select_columns(&continuous_columns);
        let mu = column_means(&block);
        if q > 0 {
            scatter += plugin_covariance(&block, &mu) * rows.len() as f64;
        }
        patterns.push(pat.clone());
        means.push(mu);
        weights.push(rows.len() as f64 / kept as f64);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let mut cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0;
    }

    let (pooled_cov, sampler) = if q > 0 {
        let mut cov = SymMatrix::new(scatter / kept as f64)?;
        let (lo, hi) = cov.eigen_range();
        if !(hi > 0.0) || lo < 1e-10 * hi {
            cov = ridge_jitter(&cov);
        }
        let mut tries = 0;
        let sampler = loop {
            match MvnSampler::new(DVector::zeros(q), &cov) {
                Ok(s) => break s,
                Err(Error::NotPositiveDefinite { .. }) if tries < 6 => {
                    cov = ridge_jitter(&cov.add_diagonal(1e-8 * (cov.trace() / q as f64).max(1.0) * 100f64.powi(tries)));
                    tries += 1;
                }
                Err(e) => return Err(e),
            }
        };
        (Some(cov), Some(sampler))
    } else {
        (None, None)
    };

    Ok(MixtureStratification {
        binary_columns,
        continuous_columns,
        patterns,
        means,
        pooled_cov,
        weights,
        dropped,
        sampler,
        cumulative,
    })
}

/// Average ranks (1-based) with ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Normal scores `Φ⁻¹(rank / (n + 1))` of one column.
pub fn normal_scores(values: &[f64]) -> Vec<f64> {
    let n1 = values.len() as f64 + 1.0;
    average_ranks(values)
        .into_iter()
        .map(|r| std_normal_quantile(r / n1).expect("rank/(n+1) lies in (0, 1)"))
        .collect()
}

fn fit_copula(x: &DMatrix<f64>) -> Result<CopulaModel> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::InvalidInput("copula needs at least 2 rows".into()));
    }
    let mut scores = DMatrix::<f64>::zeros(n, p);
    let mut sorted_columns = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        for (i, s) in normal_scores(&col).into_iter().enumerate() {
            scores[(i, j)] = s;
        }
        let mut sorted = col;
        sorted.sort_by(f64::total_cmp);
        sorted_columns.push(sorted);
    }
    let mu = column_means(&scores);
    let cov = plugin_covariance(&scores, &mu);
    let sd: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    let corr = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if sd[i] > 0.0 && sd[j] > 0.0 {
            cov[(i, j)] / (sd[i] * sd[j])
        } else {
            0.0
        }
    });
    let (latent_corr, projected) = project_correlation(corr)?;
    let sampler = MvnSampler::new(DVector::zeros(p), &latent_corr)?;
    Ok(CopulaModel {
        sorted_columns,
        latent_corr,
        projected,
        sampler,
    })
}

/// Floor eigenvalues at `PSD_FLOOR` and rescale to unit diagonal when the
/// matrix is not comfortably positive definite.
fn project_correlation(corr: DMatrix<f64>) -> Result<(SymMatrix, bool)> {
    let p = corr.nrows();
    let sym = SymMatrix::new(corr)?;
    let (lo, _) = sym.eigen_range();
    if lo >= PSD_FLOOR && cholesky(&sym).is_ok() {
        return Ok((sym, false));
    }
    let eig = SymmetricEigen::new(sym.into_matrix());
    let vals = eig.eigenvalues.map(|v| v.max(PSD_FLOOR));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..p).map(|i| rebuilt[(i, i)].sqrt()).collect();
    let scaled = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rebuilt[(i, j)] / (d[i] * d[j]) });
    Ok((SymMatrix::new(scaled)?, true))
}
