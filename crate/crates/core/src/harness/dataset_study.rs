use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariate::{fit_covariate_model, ModelKind};
use crate::error::{Error, Result};
use crate::impint::Population;
use crate::logistic::{fit_logistic, fit_rule, loocv_error, Dataset, FitOptions};
use crate::numerics::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStudyConfig {
    pub model_kinds: Vec<ModelKind>,
    pub n_list: Vec<usize>,
    pub multipliers: Vec<usize>,
    pub reps: usize,
    /// Synthetic test-set size per replicate and model kind.
    pub n_test: usize,
    /// Binary columns for the mixture model; required when it is listed.
    pub binary_columns: Option<Vec<usize>>,
}

impl DatasetStudyConfig {
    pub fn new(model_kinds: Vec<ModelKind>, n_list: Vec<usize>, reps: usize) -> Self {
        Self {
            model_kinds,
            n_list,
            multipliers: vec![1, 2, 3],
            reps,
            n_test: 5000,
            binary_columns: None,
        }
    }
}

/// Averages over replicates for one `(kind, n)` pair. `tau[i]` and
/// `gain[i]` belong to `multipliers[i]`; `gain[i] = τ̂_II(n) − τ̂_II(k·n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStudyRow {
    pub kind: ModelKind,
    pub n: usize,
    pub cv: f64,
    pub multipliers: Vec<usize>,
    pub tau: Vec<f64>,
    pub gain: Vec<f64>,
}

/// Per replicate: CV error, then per kind the error at each multiplier.
struct Draw {
    cv: f64,
    tau: Vec<Vec<f64>>,
}

const SUBSAMPLE_STREAM: u64 = 0;
const TEST_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

fn one_replicate(data: &Dataset, cfg: &DatasetStudyConfig, n: usize, rng: RngStream) -> Result<Draw> {
    let opts = FitOptions::default();
    let mut r = rng.child(SUBSAMPLE_STREAM).rng();
    let mut idx = index::sample(&mut r, data.n(), n).into_vec();
    idx.sort_unstable();
    let sub = data.subset(&idx);
    let cv = loocv_error(&sub, &opts)?;
    let fit = fit_logistic(&sub, &opts)?;
    let largest = n * cfg.multipliers.iter().copied().max().unwrap_or(1);
    let mut tau = Vec::with_capacity(cfg.model_kinds.len());
    for (k, &kind) in cfg.model_kinds.iter().enumerate() {
        let model = fit_covariate_model(kind, sub.features(), cfg.binary_columns.as_deref())?;
        let pop = Population::new(&model, &fit)?;
        let test = pop.draw(cfg.n_test, rng.path(&[TEST_STREAM, k as u64]));
        let probs = pop.probabilities(test.features());
        // nested training sets: size k·n uses the first k·n rows
        let train = pop.draw(largest, rng.path(&[TRAIN_STREAM, k as u64]));
        let errs = cfg
            .multipliers
            .iter()
            .map(|&mult| {
                let rows: Vec<usize> = (0..n * mult).collect();
                let rule = fit_rule(&train.subset(&rows), &opts)?;
                Ok(rule.expected_errors(test.features(), &probs) / cfg.n_test as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        tau.push(errs);
    }
    Ok(Draw { cv, tau })
}

/// Resampling study on a fixed dataset: for each `n`, repeatedly subsample
/// `n` rows, fit the label model (with intercept) and each covariate model,
/// and measure how the error of rules trained on synthetic sets of size
/// `k·n` drops relative to size `n`. Test errors are exact expectations
/// under the fitted label model, given a synthetic test sample.
pub fn dataset_study(data: &Dataset, cfg: &DatasetStudyConfig, rng: RngStream) -> Result<Vec<DatasetStudyRow>> {
    if cfg.model_kinds.is_empty() || cfg.n_list.is_empty() || cfg.multipliers.is_empty() {
        return Err(Error::InvalidInput("model kinds, sizes and multipliers must be non-empty".into()));
    }
    if cfg.reps == 0 || cfg.n_test == 0 {
        return Err(Error::InvalidInput("reps and N must be at least 1".into()));
    }
    if cfg.multipliers.contains(&0) {
        return Err(Error::InvalidInput("multipliers must be positive".into()));
    }
    let base = cfg.multipliers.iter().position(|&k| k == 1).ok_or_else(|| {
        Error::InvalidInput("multipliers must include 1 (gains are relative to size n)".into())
    })?;
    let p = data.p();
    for &n in &cfg.n_list {
        if n > data.n() {
            return Err(Error::OutOfRange {
                size: n,
                lo: 3,
                hi: data.n(),
            });
        }
        if n < p + 3 {
            return Err(Error::InvalidInput(format!("subsample size {n} is too small for p = {p}")));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.n_list.len()).flat_map(|i| (0..cfg.reps).map(move |k| (i, k))).collect();
    let draws = jobs
        .par_iter()
        .map(|&(i, k)| one_replicate(data, cfg, cfg.n_list[i], rng.path(&[i as u64, k as u64])))
        .collect::<Result<Vec<Draw>>>()?;
    let reps = cfg.reps as f64;
    let mut rows = Vec::new();
    for (kk, &kind) in cfg.model_kinds.iter().enumerate() {
        for (i, &n) in cfg.n_list.iter().enumerate() {
            let block = &draws[i * cfg.reps..(i + 1) * cfg.reps];
            let cv = block.iter().map(|d| d.cv).sum::<f64>() / reps;
            let tau: Vec<f64> = (0..cfg.multipliers.len())
                .map(|j| block.iter().map(|d| d.tau[kk][j]).sum::<f64>() / reps)
                .collect();
            let gain: Vec<f64> = (0..cfg.multipliers.len())
                .map(|j| block.iter().map(|d| d.tau[kk][base] - d.tau[kk][j]).sum::<f64>() / reps)
                .collect();
            rows.push(DatasetStudyRow {
                kind,
                n,
                cv,
                multipliers: cfg.multipliers.clone(),
                tau,
                gain,
            });
        }
    }
    Ok(rows)
}
