use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::LinearMdp;

use super::aggregate::{mean_std, AgentSummary};
use super::config::ExperimentConfig;
use super::run::{ExperimentResult, RunRecord};

/// Overrides the output directory of `run`.
pub const OUT_DIR_ENV: &str = "VBMLE_OUT_DIR";

pub const REGRET_CURVES: &str = "regret_curves.csv";
pub const THETA_DISTANCE: &str = "theta_distance.csv";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const SUPERMARTINGALE: &str = "supermartingale.csv";
pub const SUMMARY: &str = "summary.csv";
pub const STEPS: &str = "steps.csv";
pub const FAILURES: &str = "failures.csv";
pub const TIMING: &str = "timing.csv";
pub const PLOTDATA: &str = "plotdata.json";
pub const CONFIG: &str = "config.json";
pub const ENVIRONMENT: &str = "environment.json";

/// CSV writer whose first line is `# config_hash=<hash>`.
struct HashedCsv {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl HashedCsv {
    fn create(dir: &Path, name: &str, hash: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(file, "# config_hash={hash}").map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header).map_err(|e| Error::csv(&path, e))?;
        Ok(Self { path, writer })
    }

    fn row<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| Error::csv(&self.path, e))
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.path)
    }
}

/// Reads the `config_hash` comment of a file written by this module.
pub fn read_config_hash(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .map(str::to_string)
        .ok_or_else(|| Error::Format(format!("{}: missing config_hash line", path.display())))
}

#[derive(Serialize)]
struct Series<'a> {
    label: &'a str,
    metric: &'static str,
    t: Vec<usize>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Serialize)]
struct PlotData<'a> {
    config_hash: &'a str,
    bin_width: usize,
    series: Vec<Series<'a>>,
}

fn binned<'a>(label: &'a str, metric: &'static str, records: &[&RunRecord], horizon: usize, bin: usize, value: impl Fn(&RunRecord, usize) -> Option<f64>) -> Option<Series<'a>> {
    let mut s = Series {
        label,
        metric,
        t: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
    };
    let mut t = bin;
    loop {
        let t_end = t.min(horizon);
        let xs: Vec<f64> = records.iter().filter_map(|r| value(r, t_end)).collect();
        if !xs.is_empty() {
            let (m, d) = mean_std(&xs);
            s.t.push(t_end);
            s.mean.push(m);
            s.std.push(d);
        }
        if t_end == horizon {
            break;
        }
        t += bin;
    }
    (!s.t.is_empty()).then_some(s)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// Writes the result files into `dir` and returns their paths. Everything except
/// `timing.csv` is a deterministic function of the config.
pub fn emit_outputs(
    result: &ExperimentResult,
    summaries: &[AgentSummary],
    config: &ExperimentConfig,
    mdp: &LinearMdp,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if result.agents.iter().all(|a| a.successes().next().is_none()) {
        return Err(Error::EmptyInput("no successful trials to write"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = config.hash(mdp)?;
    let mut paths = Vec::new();

    let mut regret = HashedCsv::create(dir, REGRET_CURVES, &hash, &["agent", "trial", "t", "cumulative_regret"])?;
    let mut theta = HashedCsv::create(dir, THETA_DISTANCE, &hash, &["agent", "trial", "t", "theta_sq_distance"])?;
    let mut diag = HashedCsv::create(
        dir,
        DIAGNOSTICS,
        &hash,
        &["agent", "trial", "kind", "t", "realized", "bound", "satisfied", "slack"],
    )?;
    let mut mart = HashedCsv::create(dir, SUPERMARTINGALE, &hash, &["agent", "trial", "t", "x", "m"])?;
    let mut steps = config
        .record_steps
        .then(|| {
            HashedCsv::create(
                dir,
                STEPS,
                &hash,
                &[
                    "agent",
                    "trial",
                    "t",
                    "state",
                    "action",
                    "next_state",
                    "regret_increment",
                    "optimization_calls",
                    "bonus_evaluations",
                    "regression_solves",
                    "solver_iterations",
                    "warnings",
                ],
            )
        })
        .transpose()?;
    let mut failures = HashedCsv::create(dir, FAILURES, &hash, &["agent", "trial", "error"])?;
    let mut timing = HashedCsv::create(dir, TIMING, &hash, &["agent", "trial", "mean_step_seconds", "total_seconds"])?;

    for a in &result.agents {
        for (i, e) in a.failures() {
            failures.row([a.label.as_str(), &i.to_string(), e])?;
        }
        for r in a.successes() {
            let trial = r.trial.to_string();
            for s in &r.steps {
                let t = s.t.to_string();
                regret.row([a.label.as_str(), &trial, &t, &s.cumulative_regret.to_string()])?;
                if let Some(d) = s.theta_sq_distance {
                    theta.row([a.label.as_str(), &trial, &t, &d.to_string()])?;
                }
                if let Some(w) = steps.as_mut() {
                    w.row([
                        a.label.clone(),
                        trial.clone(),
                        t,
                        s.state.to_string(),
                        s.action.to_string(),
                        s.next_state.to_string(),
                        s.regret_increment.to_string(),
                        s.counts.optimization_calls.to_string(),
                        s.counts.bonus_evaluations.to_string(),
                        s.counts.regression_solves.to_string(),
                        s.solver_iterations.to_string(),
                        s.warnings.to_string(),
                    ])?;
                }
            }
            for d in &r.diagnostics {
                diag.row([
                    a.label.clone(),
                    trial.clone(),
                    d.kind.name().to_string(),
                    d.t.to_string(),
                    d.realized.to_string(),
                    d.bound.to_string(),
                    d.satisfied.to_string(),
                    d.slack.to_string(),
                ])?;
            }
            for p in &r.supermartingale {
                mart.row([a.label.clone(), trial.clone(), p.t.to_string(), p.x.to_string(), p.m.to_string()])?;
            }
            let total: f64 = r.steps.iter().map(|s| s.seconds).sum();
            timing.row([a.label.clone(), trial.clone(), r.mean_step_seconds().to_string(), total.to_string()])?;
        }
    }
    paths.push(regret.finish()?);
    paths.push(theta.finish()?);
    paths.push(diag.finish()?);
    paths.push(mart.finish()?);
    if let Some(w) = steps {
        paths.push(w.finish()?);
    }
    paths.push(failures.finish()?);
    paths.push(timing.finish()?);
    paths.push(write_summary(dir, &hash, summaries)?);

    let bin = (config.horizon / 100).max(1);
    let mut series = Vec::new();
    for a in &result.agents {
        let records: Vec<&RunRecord> = a.successes().collect();
        series.extend(binned(&a.label, "cumulative_regret", &records, config.horizon, bin, |r, t| r.regret_at(t)));
        series.extend(binned(&a.label, "theta_sq_distance", &records, config.horizon, bin, |r, t| {
            r.steps.get(t - 1).and_then(|s| s.theta_sq_distance)
        }));
    }
    let plot = PlotData {
        config_hash: &hash,
        bin_width: bin,
        series,
    };
    paths.push(write_json(dir, PLOTDATA, &plot)?);
    paths.push(write_text(dir, CONFIG, &serde_json::to_string_pretty(config)?)?);
    paths.push(write_text(dir, ENVIRONMENT, &mdp.to_json()?)?);
    Ok(paths)
}

pub fn write_summary(dir: &Path, hash: &str, summaries: &[AgentSummary]) -> Result<PathBuf> {
    let mut w = HashedCsv::create(
        dir,
        SUMMARY,
        hash,
        &[
            "agent",
            "kind",
            "completed_trials",
            "failed_trials",
            "t",
            "mean_cumulative_regret",
            "std_cumulative_regret",
            "mean_optimization_calls_per_step",
            "mean_bonus_evaluations_per_step",
            "mean_regression_solves_per_step",
            "deterministic_violations",
            "ellipsoid_coverage",
        ],
    )?;
    for s in summaries {
        for c in &s.regret {
            w.row([
                s.label.clone(),
                s.kind.name().to_string(),
                s.completed_trials.to_string(),
                s.failed_trials.to_string(),
                c.t.to_string(),
                c.mean.to_string(),
                c.std.to_string(),
                s.mean_optimization_calls_per_step.to_string(),
                s.mean_bonus_evaluations_per_step.to_string(),
                s.mean_regression_solves_per_step.to_string(),
                s.deterministic_violations.to_string(),
                fmt_opt(s.ellipsoid_coverage),
            ])?;
        }
    }
    w.finish()
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    write_text(dir, name, &serde_json::to_string_pretty(value)?)
}

/// Opens a CSV written by this module, skipping the hash comment.
pub fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}
