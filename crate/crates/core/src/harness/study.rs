use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_sd, true_curve_oracle, GenerativeModel};
use crate::covariate::{fit_covariate_model, ModelKind};
use crate::curve::{delta_estimate, LearningCurve};
use crate::error::{Error, Result};
use crate::impint::brie_curve;
use crate::numerics::RngStream;
use crate::subex::{default_schedule, subex_curve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Brie,
    Subex,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Brie => "brie",
            Estimator::Subex => "subex",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "brie" => Ok(Estimator::Brie),
            "subex" => Ok(Estimator::Subex),
            other => Err(Error::InvalidInput(format!("unknown estimator `{other}` (expected brie or subex)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Tau,
    Delta,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Tau => "tau",
            Quantity::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub p: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenarios: Vec<Scenario>,
    pub n: usize,
    pub target_sizes: Vec<usize>,
    pub estimators: Vec<Estimator>,
    pub model_kind: ModelKind,
    pub replicates: usize,
    /// Imputed training sets per size.
    pub b: usize,
    /// Imputed test-set size.
    pub n_test: usize,
    pub subex_draws: usize,
    pub oracle_reps: usize,
    pub oracle_n_test: usize,
    pub master_seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidInput(format!("n must be at least 3, got {}", self.n)));
        }
        if self.scenarios.is_empty() {
            return Err(Error::InvalidInput("no scenarios".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidInput("no estimators".into()));
        }
        if self.target_sizes.is_empty() {
            return Err(Error::InvalidInput("no target sizes".into()));
        }
        if self.replicates == 0 || self.b == 0 || self.n_test == 0 || self.subex_draws == 0 {
            return Err(Error::InvalidInput("replicates, B, N and SUBEX draws must be at least 1".into()));
        }
        if self.oracle_reps == 0 || self.oracle_n_test == 0 {
            return Err(Error::InvalidInput("oracle reps and N must be at least 1".into()));
        }
        for s in &self.scenarios {
            let smallest = self.target_sizes.iter().copied().min().unwrap_or(0).min(self.n - 1);
            if smallest < s.p + 2 {
                return Err(Error::InvalidInput(format!(
                    "scenario p={}: sizes down to {smallest} are below p + 2 ({})",
                    s.p,
                    s.p + 2
                )));
            }
        }
        Ok(())
    }

    /// Target sizes plus `n`, sorted.
    fn sizes(&self) -> Vec<usize> {
        let mut s = self.target_sizes.clone();
        s.push(self.n);
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// One table cell: the replicate mean and SD of `τ̂(m_to)` or of
/// `δ̂(m_from, m_to)`, next to the oracle truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub p: usize,
    pub r: f64,
    pub estimator: Estimator,
    pub quantity: Quantity,
    pub m_from: Option<usize>,
    pub m_to: usize,
    pub truth: f64,
    pub mean: f64,
    pub sd: Option<f64>,
    /// Per-replicate estimates in replicate order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    /// Oracle curve per scenario, in scenario order.
    pub truths: Vec<LearningCurve>,
}

impl StudyResult {
    pub fn row(&self, p: usize, r: f64, estimator: Estimator, quantity: Quantity, m_to: usize) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|x| x.p == p && x.r == r && x.estimator == estimator && x.quantity == quantity && x.m_to == m_to)
    }
}

/// Per replicate and estimator: `τ̂` at every size, then `δ̂(n, m)`.
struct ReplicateOutput {
    tau: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

const ORACLE_STREAM: u64 = 0;
const DATA_STREAM: u64 = 0;
const BRIE_STREAM: u64 = 1;
const SUBEX_STREAM: u64 = 2;

/// Replicate `k` of scenario `s` draws from stream `k + 1`, sub-stream `s`;
/// the oracle uses stream 0.
fn replicate_stream(seed: u64, scenario: usize, k: usize) -> RngStream {
    RngStream::new(seed, k as u64 + 1).child(scenario as u64)
}

fn run_replicate(cfg: &StudyConfig, gm: &GenerativeModel, sizes: &[usize], rng: RngStream) -> Result<ReplicateOutput> {
    let data = gm.draw(cfg.n, rng.child(DATA_STREAM));
    let opts = gm.fit_options();
    let targets: Vec<usize> = sizes.iter().copied().filter(|&m| m != cfg.n).collect();
    let mut out = ReplicateOutput {
        tau: Vec::new(),
        delta: Vec::new(),
    };
    for &est in &cfg.estimators {
        let curve = match est {
            Estimator::Brie => {
                let model = fit_covariate_model(cfg.model_kind, data.features(), None)?;
                brie_curve(&data, &model, sizes, cfg.b, cfg.n_test, &opts, rng.child(BRIE_STREAM))?.curve
            }
            Estimator::Subex => {
                let schedule = default_schedule(cfg.n);
                subex_curve(&data, sizes, &schedule, cfg.subex_draws, &opts, rng.child(SUBEX_STREAM))?.curve
            }
        };
        let reported: Vec<f64> = sizes
            .iter()
            .map(|&m| {
                let i = curve.sizes().binary_search(&m).expect("curve covers its sizes");
                curve.reported()[i].0.value
            })
            .collect();
        let delta = targets
            .iter()
            .map(|&m| Ok(delta_estimate(&curve, cfg.n, m)?.value))
            .collect::<Result<Vec<f64>>>()?;
        out.tau.push(reported);
        out.delta.push(delta);
    }
    Ok(out)
}

/// Rows and oracle curve for scenario `s` of `cfg`; what [`run_mc_study`]
/// produces for that scenario.
pub fn run_mc_scenario(cfg: &StudyConfig, s: usize) -> Result<(Vec<StudyRow>, LearningCurve)> {
    cfg.validate()?;
    let sc = *cfg
        .scenarios
        .get(s)
        .ok_or_else(|| Error::InvalidInput(format!("scenario index {s} out of range")))?;
    let sizes = cfg.sizes();
    let targets: Vec<usize> = sizes.iter().copied().filter(|&m| m != cfg.n).collect();
    let gm = GenerativeModel::new(sc.p, sc.r)?;
    let oracle = true_curve_oracle(
        &gm,
        &sizes,
        cfg.oracle_reps,
        cfg.oracle_n_test,
        RngStream::new(cfg.master_seed, ORACLE_STREAM).child(s as u64),
    )?;
    let reps = (0..cfg.replicates)
        .into_par_iter()
        .map(|k| {
            run_replicate(cfg, &gm, &sizes, replicate_stream(cfg.master_seed, s, k)).inspect_err(|e| {
                log::error!("scenario (p={}, r={}) replicate {k} failed: {e}", sc.p, sc.r);
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let truth_at = |m: usize| oracle.value_at(m).map(|v| v.0);
    let mut rows = Vec::new();
    for (e, &est) in cfg.estimators.iter().enumerate() {
        for (j, &m) in sizes.iter().enumerate() {
            let values: Vec<f64> = reps.iter().map(|r| r.tau[e][j]).collect();
            let (mean, sd) = mean_sd(&values);
            rows.push(StudyRow {
                p: sc.p,
                r: sc.r,
                estimator: est,
                quantity: Quantity::Tau,
                m_from: None,
                m_to: m,
                truth: truth_at(m)?,
                mean,
                sd,
                values,
            });
        }
        for (j, &m) in targets.iter().enumerate() {
            let values: Vec<f64> = reps.iter().map(|r| r.delta[e][j]).collect();
            let (mean, sd) = mean_sd(&values);
            rows.push(StudyRow {
                p: sc.p,
                r: sc.r,
                estimator: est,
                quantity: Quantity::Delta,
                m_from: Some(cfg.n),
                m_to: m,
                truth: truth_at(cfg.n)? - truth_at(m)?,
                mean,
                sd,
                values,
            });
        }
    }
    Ok((rows, oracle))
}

/// Monte-Carlo study of the configured estimators over every scenario.
/// Replicates run in parallel; results are reduced in replicate order, so
/// the output does not depend on the thread count. Any replicate failure
/// aborts the study.
pub fn run_mc_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut truths = Vec::new();
    for s in 0..cfg.scenarios.len() {
        let (r, t) = run_mc_scenario(cfg, s)?;
        rows.extend(r);
        truths.push(t);
    }
    Ok(StudyResult { rows, truths })
}
