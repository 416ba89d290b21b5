use serde::Serialize;

use crate::agents::AgentKind;
use crate::error::{Error, Result};

use super::run::{AgentRuns, RunRecord};

/// Mean and sample standard deviation (`n - 1` denominator; 0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckpointStat {
    pub t: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentSummary {
    pub label: String,
    pub kind: AgentKind,
    pub completed_trials: usize,
    pub failed_trials: usize,
    /// Cumulative regret at each checkpoint; the last entry is the horizon.
    pub regret: Vec<CheckpointStat>,
    pub mean_optimization_calls_per_step: f64,
    pub mean_bonus_evaluations_per_step: f64,
    pub mean_regression_solves_per_step: f64,
    /// Wall-clock seconds per decision, warm-up step excluded. Not reproducible.
    pub mean_step_seconds: f64,
    pub deterministic_violations: usize,
    /// Fraction of (trial, checkpoint) pairs inside the confidence ellipsoid.
    pub ellipsoid_coverage: Option<f64>,
}

impl AgentSummary {
    pub fn final_regret(&self) -> &CheckpointStat {
        self.regret.last().expect("at least the horizon checkpoint")
    }
}

pub fn summarize_records(
    label: &str,
    kind: AgentKind,
    records: &[&RunRecord],
    failed: usize,
    checkpoints: &[usize],
) -> Result<AgentSummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no successful trials to aggregate"));
    }
    let horizon = records.iter().map(|r| r.steps.len()).min().unwrap_or(0);
    let mut cps: Vec<usize> = checkpoints.iter().copied().filter(|&t| t >= 1 && t <= horizon).collect();
    cps.push(horizon);
    cps.sort_unstable();
    cps.dedup();
    let regret = cps
        .iter()
        .map(|&t| {
            let xs: Vec<f64> = records.iter().map(|r| r.regret_at(t).unwrap_or(0.0)).collect();
            let (mean, std) = mean_std(&xs);
            CheckpointStat { t, mean, std }
        })
        .collect();
    let steps: usize = records.iter().map(|r| r.steps.len()).sum();
    let per_step = |f: &dyn Fn(&RunRecord) -> u64| records.iter().map(|r| f(r)).sum::<u64>() as f64 / steps.max(1) as f64;
    let mut inside = 0usize;
    let mut ellipsoid = 0usize;
    let mut violations = 0usize;
    for r in records {
        for d in &r.diagnostics {
            if d.kind.is_deterministic() {
                violations += usize::from(!d.satisfied);
            } else {
                ellipsoid += 1;
                inside += usize::from(d.satisfied);
            }
        }
    }
    Ok(AgentSummary {
        label: label.to_string(),
        kind,
        completed_trials: records.len(),
        failed_trials: failed,
        regret,
        mean_optimization_calls_per_step: per_step(&|r| r.total_counts().optimization_calls),
        mean_bonus_evaluations_per_step: per_step(&|r| r.total_counts().bonus_evaluations),
        mean_regression_solves_per_step: per_step(&|r| r.total_counts().regression_solves),
        mean_step_seconds: records.iter().map(|r| r.mean_step_seconds()).sum::<f64>() / records.len() as f64,
        deterministic_violations: violations,
        ellipsoid_coverage: (ellipsoid > 0).then(|| inside as f64 / ellipsoid as f64),
    })
}

/// Per-agent summary of the successful trials.
pub fn aggregate(runs: &AgentRuns, checkpoints: &[usize]) -> Result<AgentSummary> {
    let records: Vec<&RunRecord> = runs.successes().collect();
    summarize_records(&runs.label, runs.config.kind, &records, runs.failures().count(), checkpoints)
}
