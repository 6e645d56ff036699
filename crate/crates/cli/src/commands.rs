use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use lcurve::csvio;
use lcurve::curve::{CurvePoint, LearningCurve};
use lcurve::harness::{dataset_study, run_mc_scenario, true_curve_oracle, DatasetStudyConfig, GenerativeModel, StudyResult};
use lcurve::impint::brie_curve;
use lcurve::logistic::{fit_logistic, Dataset, FitOptions};
use lcurve::subex::{default_schedule, subex_curve};
use lcurve::covariate::fit_covariate_model;
use lcurve::harness::Estimator;
use lcurve::{delta_estimate, ModelKind, RngStream};
use serde::Serialize;

use crate::config::TruthConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{EstimateConfig, Resolved, RunManifest, Timing};

struct Run<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
    timings: Vec<Timing>,
}

impl Run<'_> {
    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let f = File::create(self.dir.join(name)).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn time(&mut self, label: String, since: Instant) {
        let seconds = since.elapsed().as_secs_f64();
        log::info!("{label}: {seconds:.2}s");
        self.timings.push(Timing { label, seconds });
    }
}

/// Run a resolved command, writing its outputs and manifest into `dir`.
pub fn execute(cfg: Resolved, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let start = Instant::now();
    let mut run = Run {
        dir,
        outputs: Vec::new(),
        timings: Vec::new(),
    };
    match &cfg {
        Resolved::Truth(c) => truth(c, &mut run)?,
        Resolved::Simulate(c) => simulate(c, &mut run)?,
        Resolved::Estimate(c) => estimate(c, &mut run)?,
    }
    RunManifest {
        command: cfg.name().to_string(),
        master_seed: cfg.master_seed(),
        config: cfg,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        timings: run.timings,
        outputs: run.outputs,
    }
    .write(dir)
}

fn scenario_label(p: usize, r: f64) -> String {
    format!("p{p}_r{r}")
}

fn truth(c: &TruthConfig, run: &mut Run<'_>) -> CliResult<()> {
    for (s, sc) in c.scenarios.iter().enumerate() {
        let t = Instant::now();
        let gm = GenerativeModel::new(sc.p, sc.r)?;
        let curve = true_curve_oracle(&gm, &c.sizes, c.reps, c.n_test, RngStream::new(c.master_seed, 0).child(s as u64))?;
        let label = scenario_label(sc.p, sc.r);
        csvio::write_curve(run.create(&format!("truth_{label}.csv"))?, &curve)?;
        run.time(label, t);
    }
    Ok(())
}

fn simulate(c: &lcurve::harness::StudyConfig, run: &mut Run<'_>) -> CliResult<()> {
    let mut res = StudyResult {
        rows: Vec::new(),
        truths: Vec::new(),
    };
    for (s, sc) in c.scenarios.iter().enumerate() {
        let t = Instant::now();
        let (rows, truth) = run_mc_scenario(c, s)?;
        res.rows.extend(rows);
        res.truths.push(truth);
        run.time(scenario_label(sc.p, sc.r), t);
    }
    csvio::write_study(run.create("study.csv")?, &res)?;
    Ok(())
}

fn load_dataset(c: &EstimateConfig) -> CliResult<Dataset> {
    let f = File::open(&c.data).map_err(|e| CliError::Data(format!("{}: {e}", c.data.display())))?;
    let data = csvio::read_dataset(f, &c.label).map_err(|e| CliError::Data(e.to_string()))?;
    if data.p() >= data.n() && !c.allow_ill_posed {
        return Err(CliError::Data(format!(
            "p = {} is not below n = {}; pass --allow-ill-posed to continue",
            data.p(),
            data.n()
        )));
    }
    Ok(data)
}

fn binary_indices(c: &EstimateConfig, data: &Dataset) -> CliResult<Option<Vec<usize>>> {
    if c.binary_cols.is_empty() {
        if c.model == ModelKind::GaussianMixture {
            return Err(CliError::config(0, "--binary-cols", "the gm model needs at least one binary column"));
        }
        return Ok(None);
    }
    let names = data.column_names().unwrap_or_default();
    c.binary_cols
        .iter()
        .map(|b| {
            names
                .iter()
                .position(|n| n == b)
                .ok_or_else(|| CliError::Data(format!("binary column `{b}` is not a feature column")))
        })
        .collect::<CliResult<Vec<_>>>()
        .map(Some)
}

#[derive(Serialize)]
struct DeltaRow {
    estimator: Estimator,
    n: usize,
    m: usize,
    delta: f64,
    interpolated: bool,
}

#[derive(Serialize)]
struct Summary {
    n: usize,
    p: usize,
    model: ModelKind,
    cv_error: Option<f64>,
    coefficients: Vec<(String, f64)>,
    ridge_lambda_used: f64,
    converged: bool,
    deltas: Vec<DeltaRow>,
}

/// Points of `curve` at the requested sizes, values as reported.
fn at_sizes(curve: &LearningCurve, sizes: &[usize]) -> Vec<CurvePoint> {
    curve
        .reported()
        .into_iter()
        .map(|(p, _)| p)
        .filter(|p| sizes.contains(&p.m))
        .collect()
}

fn estimate(c: &EstimateConfig, run: &mut Run<'_>) -> CliResult<()> {
    let data = load_dataset(c)?;
    let (n, p) = (data.n(), data.p());
    if c.estimators.is_empty() {
        return Err(CliError::config(0, "--estimators", "no estimators selected"));
    }
    let binary = binary_indices(c, &data)?;
    let opts = FitOptions::default();
    let root = RngStream::new(c.master_seed, 0);
    let mut sizes = c.sizes.clone();
    sizes.push(n);
    sizes.sort_unstable();
    sizes.dedup();

    let fit = fit_logistic(&data, &opts)?;
    let mut names = vec!["(intercept)".to_string()];
    names.extend(data.column_names().unwrap_or_default().iter().cloned());
    let mut summary = Summary {
        n,
        p,
        model: c.model,
        cv_error: None,
        coefficients: names.into_iter().zip(fit.beta.iter().copied()).collect(),
        ridge_lambda_used: fit.ridge_lambda_used,
        converged: fit.converged,
        deltas: Vec::new(),
    };
    let delta_rows = |est: Estimator, curve: &LearningCurve, rows: &mut Vec<DeltaRow>| -> CliResult<()> {
        for &m in c.sizes.iter().filter(|&&m| m != n) {
            let d = delta_estimate(curve, n, m)?;
            rows.push(DeltaRow {
                estimator: est,
                n,
                m,
                delta: d.value,
                interpolated: d.interpolated,
            });
        }
        Ok(())
    };
    for &est in &c.estimators {
        let t = Instant::now();
        match est {
            Estimator::Brie => {
                if let Some(&m) = sizes.iter().find(|&&m| m < p + 2) {
                    return Err(CliError::config(0, "--sizes", format!("size {m} is below p + 2 = {}", p + 2)));
                }
                let model = fit_covariate_model(c.model, data.features(), binary.as_deref())?;
                let res = brie_curve(&data, &model, &sizes, c.b, c.n_test, &opts, root.child(1))?;
                summary.cv_error = Some(res.cv_error);
                csvio::write_points(run.create("brie.csv")?, &at_sizes(&res.curve, &c.sizes))?;
                delta_rows(est, &res.curve, &mut summary.deltas)?;
            }
            Estimator::Subex => {
                let res = subex_curve(&data, &sizes, &default_schedule(n), c.subex_draws, &opts, root.child(2))?;
                csvio::write_points(run.create("subex.csv")?, &at_sizes(&res.curve, &c.sizes))?;
                delta_rows(est, &res.curve, &mut summary.deltas)?;
            }
        }
        run.time(est.to_string(), t);
    }
    let mut w = run.create("delta.csv")?;
    {
        use std::io::Write;
        writeln!(w, "estimator,n,m,delta,interpolated")?;
        for d in &summary.deltas {
            writeln!(w, "{},{},{},{},{}", d.estimator, d.n, d.m, d.delta, d.interpolated)?;
        }
        w.flush()?;
    }
    if c.self_study {
        let t = Instant::now();
        let n_list: Vec<usize> = c.sizes.iter().copied().filter(|&m| m <= n).collect();
        if n_list.is_empty() {
            return Err(CliError::config(0, "--sizes", "self-study needs sizes not above n"));
        }
        let mut cfg = DatasetStudyConfig::new(vec![c.model], n_list, c.self_study_reps);
        cfg.n_test = c.n_test;
        cfg.binary_columns = binary;
        let rows = dataset_study(&data, &cfg, root.child(3))?;
        csvio::write_dataset_study(run.create("self_study.csv")?, &rows)?;
        run.time("self-study".into(), t);
    }
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(run.dir.join("summary.json"), text + "\n")?;
    run.outputs.push("summary.json".into());
    Ok(())
}
