//! Seeded multi-trial experiments: agent-environment interaction, regret, aggregation,
//! output files, and re-checking of recorded runs.

pub mod aggregate;
pub mod config;
pub mod output;
pub mod presets;
pub mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::agents::ComputeCounts;
use crate::diagnostics::{value_bound_check, BoundKind, BoundReport};
use crate::error::{Error, Result};
use crate::likelihood::TransitionHistory;
use crate::mdp::LinearMdp;
use crate::planning::solve_optimal;

pub use aggregate::{aggregate, mean_std, AgentSummary, CheckpointStat};
pub use config::{EnvironmentSource, ExperimentConfig, CONFIG_FORMAT_VERSION};
pub use output::{emit_outputs, OUT_DIR_ENV};
pub use run::{run_experiment, run_trial, AgentRuns, ExperimentResult, RunRecord, StepRecord};

/// Version of the output file set.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub result: ExperimentResult,
    pub summaries: Vec<AgentSummary>,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
}

/// Runs `config`, aggregates, and writes the output files to `out_dir` when given.
pub fn execute(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    config.validate()?;
    let mdp = config.load_environment()?;
    let result = run_experiment(&mdp, config)?;
    let checkpoints = config.effective_checkpoints();
    let summaries = result
        .agents
        .iter()
        .filter(|a| a.successes().next().is_some())
        .map(|a| aggregate(a, &checkpoints))
        .collect::<Result<Vec<_>>>()?;
    let files = match out_dir {
        Some(dir) => emit_outputs(&result, &summaries, config, &mdp, dir)?,
        None => Vec::new(),
    };
    Ok(ExperimentReport {
        config_hash: config.hash(&mdp)?,
        result,
        summaries,
        files,
    })
}

/// A recorded run read back from its output directory.
pub struct RecordedRun {
    pub config: ExperimentConfig,
    pub mdp: LinearMdp,
    /// Keyed by `(agent, trial)`.
    pub records: BTreeMap<(String, usize), RunRecord>,
}

impl RecordedRun {
    /// Loads `config.json`, `environment.json`, `steps.csv` and `diagnostics.csv`.
    pub fn load(dir: &Path) -> Result<Self> {
        let config = ExperimentConfig::from_path(&dir.join(output::CONFIG))?;
        let env_path = dir.join(output::ENVIRONMENT);
        let text = std::fs::read_to_string(&env_path).map_err(|e| Error::io(&env_path, e))?;
        let mdp = LinearMdp::from_json(&text)?;
        let mut records: BTreeMap<(String, usize), RunRecord> = BTreeMap::new();
        let steps_path = dir.join(output::STEPS);
        let mut reader = output::csv_reader(&steps_path)?;
        for row in reader.records() {
            let row = row.map_err(|e| Error::csv(&steps_path, e))?;
            let field = |i: usize| -> Result<&str> {
                row.get(i).ok_or_else(|| Error::Format(format!("{}: short row", steps_path.display())))
            };
            let num = |i: usize| -> Result<u64> {
                field(i)?.parse().map_err(|_| Error::Format(format!("{}: bad integer {:?}", steps_path.display(), row.get(i))))
            };
            let agent = field(0)?.to_string();
            let trial = num(1)? as usize;
            let (t, state, action, next_state) = (num(2)? as usize, num(3)? as usize, num(4)? as usize, num(5)? as usize);
            if state >= mdp.num_states() || next_state >= mdp.num_states() || action >= mdp.num_actions() {
                return Err(Error::Format(format!("{}: transition out of range at t={t}", steps_path.display())));
            }
            let increment: f64 = field(6)?
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad regret increment", steps_path.display())))?;
            let rec = records.entry((agent.clone(), trial)).or_insert_with(|| RunRecord {
                agent,
                trial,
                seed: config.seed.wrapping_add(trial as u64),
                steps: Vec::new(),
                history: TransitionHistory::new(mdp.dim()),
                diagnostics: Vec::new(),
                supermartingale: Vec::new(),
                warnings: Vec::new(),
            });
            let cumulative = rec.final_regret() + increment;
            rec.history.push(&mdp, state, action, next_state);
            rec.steps.push(StepRecord {
                t,
                state,
                action,
                next_state,
                regret_increment: increment,
                cumulative_regret: cumulative,
                theta_sq_distance: None,
                counts: ComputeCounts {
                    optimization_calls: num(7)?,
                    bonus_evaluations: num(8)?,
                    regression_solves: num(9)?,
                },
                solver_iterations: num(10)? as usize,
                warnings: num(11)? as usize,
                seconds: 0.0,
            });
        }
        let diag_path = dir.join(output::DIAGNOSTICS);
        let mut reader = output::csv_reader(&diag_path)?;
        for row in reader.records() {
            let row = row.map_err(|e| Error::csv(&diag_path, e))?;
            let bad = || Error::Format(format!("{}: malformed row {row:?}", diag_path.display()));
            let key = (row.get(0).ok_or_else(bad)?.to_string(), row.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?);
            let kind: BoundKind = serde_json::from_value(serde_json::Value::String(row.get(2).ok_or_else(bad)?.to_string()))
                .map_err(|_| bad())?;
            let t: usize = row.get(3).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let realized: f64 = row.get(4).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let bound: f64 = row.get(5).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if let Some(r) = records.get_mut(&key) {
                r.diagnostics.push(BoundReport::new(kind, t, realized, bound));
            }
        }
        Ok(Self { config, mdp, records })
    }

    /// Recomputes the deterministic bounds from the recorded transitions.
    pub fn check(&self) -> Result<Vec<(String, usize, BoundReport)>> {
        let optimal = solve_optimal(&self.mdp, self.mdp.theta_star().as_slice())?;
        let mut out = Vec::new();
        for ((agent, trial), rec) in &self.records {
            let (reports, _) = run::history_diagnostics(&self.mdp, &self.config, &rec.history)?;
            for r in reports.into_iter().chain(rec.diagnostics.iter().cloned()) {
                if r.kind.is_deterministic() {
                    out.push((agent.clone(), *trial, r));
                }
            }
            let mut v = value_bound_check(&optimal.value, self.mdp.gamma());
            v.t = rec.steps.len();
            out.push((agent.clone(), *trial, v));
        }
        Ok(out)
    }

    pub fn summarize(&self) -> Result<Vec<AgentSummary>> {
        let checkpoints = self.config.effective_checkpoints();
        self.config
            .agents
            .iter()
            .filter_map(|a| {
                let label = a.label();
                let recs: Vec<&RunRecord> = self.records.iter().filter(|((l, _), _)| *l == label).map(|(_, r)| r).collect();
                (!recs.is_empty()).then(|| {
                    let failed = self.config.trials.saturating_sub(recs.len());
                    aggregate::summarize_records(&label, a.kind, &recs, failed, &checkpoints)
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentConfig, AgentKind};
    use crate::mdp::MixtureSpec;
    use sha2::{Digest, Sha256};

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            EnvironmentSource::Generate(MixtureSpec::new(3, 2, 3, 7)),
            vec![AgentConfig::new(AgentKind::VbmleExact), AgentConfig::new(AgentKind::Uclk)],
        );
        c.horizon = 30;
        c.trials = 2;
        c.checkpoints = vec![10, 20];
        c
    }

    fn digest(path: &Path) -> String {
        hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
    }

    #[test]
    fn outputs_are_reproducible_and_checkable() {
        let c = small();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = execute(&c, Some(a.path())).unwrap();
        let mut c2 = c.clone();
        c2.threads = Some(1);
        execute(&c2, Some(b.path())).unwrap();
        for f in [output::REGRET_CURVES, output::THETA_DISTANCE, output::DIAGNOSTICS, output::SUMMARY, output::STEPS] {
            assert_eq!(digest(&a.path().join(f)), digest(&b.path().join(f)), "{f}");
            assert_eq!(output::read_config_hash(&a.path().join(f)).unwrap(), ra.config_hash);
        }
        let mut rows = output::csv_reader(&a.path().join(output::REGRET_CURVES)).unwrap();
        assert_eq!(rows.records().count(), 2 * 2 * 30);

        let recorded = RecordedRun::load(a.path()).unwrap();
        assert_eq!(recorded.records.len(), 4);
        let checks = recorded.check().unwrap();
        assert!(!checks.is_empty() && checks.iter().all(|(_, _, r)| r.satisfied));
        let again = recorded.summarize().unwrap();
        for (x, y) in again.iter().zip(&ra.summaries) {
            assert_eq!(x.label, y.label);
            for (p, q) in x.regret.iter().zip(&y.regret) {
                assert!((p.mean - q.mean).abs() < 1e-9 && (p.std - q.std).abs() < 1e-9);
            }
            assert_eq!(x.mean_optimization_calls_per_step, y.mean_optimization_calls_per_step);
        }
    }

    #[test]
    fn single_trial_horizon_three_has_three_rows() {
        let mut c = small();
        c.agents.truncate(1);
        c.trials = 1;
        c.horizon = 3;
        let dir = tempfile::tempdir().unwrap();
        execute(&c, Some(dir.path())).unwrap();
        let mut rows = output::csv_reader(&dir.path().join(output::REGRET_CURVES)).unwrap();
        assert_eq!(rows.records().count(), 3);
    }

    #[test]
    fn empty_results_are_not_written() {
        let c = small();
        let mdp = c.load_environment().unwrap();
        let empty = ExperimentResult { agents: vec![] };
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_outputs(&empty, &[], &c, &mdp, dir.path()).is_err());
    }
}
