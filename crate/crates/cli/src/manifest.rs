use std::fs;
use std::path::{Path, PathBuf};

use lcurve::harness::{Estimator, StudyConfig};
use lcurve::ModelKind;
use serde::{Deserialize, Serialize};

use crate::config::TruthConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    /// Absolute path of the input table.
    pub data: PathBuf,
    pub label: String,
    pub model: ModelKind,
    pub binary_cols: Vec<String>,
    pub sizes: Vec<usize>,
    pub b: usize,
    pub n_test: usize,
    pub master_seed: u64,
    pub estimators: Vec<Estimator>,
    pub subex_draws: usize,
    pub self_study: bool,
    pub self_study_reps: usize,
    pub allow_ill_posed: bool,
}

/// Fully resolved inputs of a run; enough to repeat it without the
/// original config file or flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Resolved {
    Truth(TruthConfig),
    Simulate(StudyConfig),
    Estimate(EstimateConfig),
}

impl Resolved {
    pub fn name(&self) -> &'static str {
        match self {
            Resolved::Truth(_) => "truth",
            Resolved::Simulate(_) => "simulate",
            Resolved::Estimate(_) => "estimate",
        }
    }

    pub fn master_seed(&self) -> u64 {
        match self {
            Resolved::Truth(c) => c.master_seed,
            Resolved::Simulate(c) => c.master_seed,
            Resolved::Estimate(c) => c.master_seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Resolved,
    pub master_seed: u64,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
    pub timings: Vec<Timing>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(e.line(), "manifest", e.to_string()))
    }
}
