//! Line-oriented `key = value` configuration. Keys before the first
//! `[scenario]` header are global; each `[scenario]` block holds `p` and
//! `r`. `#` starts a comment.

use std::collections::BTreeMap;
use std::str::FromStr;

use lcurve::harness::{Estimator, Scenario, StudyConfig};
use lcurve::impint::{DEFAULT_B, DEFAULT_N};
use lcurve::subex::DEFAULT_DRAWS;
use lcurve::ModelKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug, Default)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

#[derive(Debug, Default)]
pub struct RawConfig {
    global: Section,
    scenarios: Vec<Section>,
}

pub fn parse(text: &str) -> CliResult<RawConfig> {
    let mut cfg = RawConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            if content != "[scenario]" {
                return Err(CliError::config(line, content, "unknown section (only [scenario] is allowed)"));
            }
            cfg.scenarios.push(Section {
                line,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(CliError::config(line, content, "expected `key = value`"));
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(CliError::config(line, "", "empty key"));
        }
        let section = cfg.scenarios.last_mut().unwrap_or(&mut cfg.global);
        if section.entries.insert(k.clone(), Entry { line, value: v }).is_some() {
            return Err(CliError::config(line, k, "duplicate key"));
        }
    }
    Ok(cfg)
}

impl Section {
    fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        for (k, e) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(CliError::config(e.line, k, format!("unknown key (allowed: {})", allowed.join(", "))));
            }
        }
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|e| {
                e.value
                    .parse::<T>()
                    .map_err(|err| CliError::config(e.line, key, format!("cannot parse `{}`: {err}", e.value)))
            })
            .transpose()
    }

    fn require<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::config(self.line, key, "missing required key"))
    }

    fn sizes(&self, key: &str) -> CliResult<Option<Vec<usize>>> {
        self.entries
            .get(key)
            .map(|e| parse_sizes(&e.value).map_err(|m| CliError::config(e.line, key, m)))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|e| {
                e.value
                    .split(',')
                    .map(|t| t.trim().parse::<T>().map_err(|err| CliError::config(e.line, key, err.to_string())))
                    .collect()
            })
            .transpose()
    }
}

/// `75, 100, 150` or a range `50:200:10` (inclusive, step optional), or a
/// mix of both.
pub fn parse_sizes(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim) {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a size"));
        let parts: Vec<&str> = tok.split(':').collect();
        match parts.as_slice() {
            [one] => out.push(num(one)?),
            [a, b] | [a, b, _] => {
                let (lo, hi) = (num(a)?, num(b)?);
                let step = if parts.len() == 3 { num(parts[2])? } else { 1 };
                if step == 0 || lo > hi {
                    return Err(format!("bad range `{tok}`"));
                }
                out.extend((lo..=hi).step_by(step));
            }
            _ => return Err(format!("bad size token `{tok}`")),
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err("sizes must be positive".into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn scenarios(cfg: &RawConfig) -> CliResult<Vec<Scenario>> {
    if cfg.scenarios.is_empty() {
        return Err(CliError::config(0, "[scenario]", "no scenarios defined"));
    }
    cfg.scenarios
        .iter()
        .map(|s| {
            s.check_keys(&["p", "r"])?;
            let p: usize = s.require("p")?;
            let r: f64 = s.require("r")?;
            if p == 0 {
                return Err(CliError::config(s.entries["p"].line, "p", "must be at least 1"));
            }
            if !(r.abs() < 1.0) {
                return Err(CliError::config(s.entries["r"].line, "r", "must lie in (-1, 1)"));
            }
            Ok(Scenario { p, r })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthConfig {
    pub scenarios: Vec<Scenario>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub n_test: usize,
    pub master_seed: u64,
}

pub fn truth_config(text: &str, default_seed: u64) -> CliResult<TruthConfig> {
    let raw = parse(text)?;
    raw.global.check_keys(&["sizes", "reps", "N", "seed"])?;
    let scenarios = scenarios(&raw)?;
    let sizes = raw
        .global
        .sizes("sizes")?
        .ok_or_else(|| CliError::config(0, "sizes", "missing required key"))?;
    let cfg = TruthConfig {
        scenarios,
        sizes,
        reps: raw.global.get("reps")?.unwrap_or(500),
        n_test: raw.global.get("N")?.unwrap_or(DEFAULT_N),
        master_seed: raw.global.get("seed")?.unwrap_or(default_seed),
    };
    for s in &cfg.scenarios {
        if cfg.sizes[0] < s.p + 2 {
            return Err(CliError::config(0, "sizes", format!("sizes must be at least p + 2 = {}", s.p + 2)));
        }
    }
    Ok(cfg)
}

pub fn study_config(text: &str, default_seed: u64) -> CliResult<StudyConfig> {
    let raw = parse(text)?;
    let g = &raw.global;
    g.check_keys(&[
        "n",
        "sizes",
        "estimators",
        "model",
        "replicates",
        "B",
        "N",
        "subex_draws",
        "oracle_reps",
        "oracle_N",
        "seed",
    ])?;
    let scenarios = scenarios(&raw)?;
    let estimators: Vec<Estimator> = g.list("estimators")?.unwrap_or_else(|| vec![Estimator::Brie, Estimator::Subex]);
    let cfg = StudyConfig {
        scenarios,
        n: g.require("n")?,
        target_sizes: g
            .sizes("sizes")?
            .ok_or_else(|| CliError::config(0, "sizes", "missing required key"))?,
        estimators,
        model_kind: g.get::<ModelKind>("model")?.unwrap_or(ModelKind::MvnAr1),
        replicates: g.get("replicates")?.unwrap_or(100),
        b: g.get("B")?.unwrap_or(DEFAULT_B),
        n_test: g.get("N")?.unwrap_or(DEFAULT_N),
        subex_draws: g.get("subex_draws")?.unwrap_or(DEFAULT_DRAWS),
        oracle_reps: g.get("oracle_reps")?.unwrap_or(500),
        oracle_n_test: g.get("oracle_N")?.unwrap_or(DEFAULT_N),
        master_seed: g.get("seed")?.unwrap_or(default_seed),
    };
    if cfg.replicates == 0 {
        let line = g.entries.get("replicates").map_or(0, |e| e.line);
        return Err(CliError::config(line, "replicates", "must be at least 1"));
    }
    cfg.validate().map_err(|e| CliError::config(0, "", e.to_string()))?;
    Ok(cfg)
}
