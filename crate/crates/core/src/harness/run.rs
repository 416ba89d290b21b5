use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::agents::{build_agent, AgentConfig, ComputeCounts, PolicyView};
use crate::diagnostics::{
    elliptical_potential_check, ftl_delta_reports, mle_ellipsoid_report, supermartingale_trace, value_bound_check,
    BoundParams, BoundReport, SupermartingalePoint,
};
use crate::error::{Error, Result};
use crate::likelihood::{MleOptions, MleTrace, Regularizer, TransitionHistory};
use crate::mdp::{LinearMdp, DEFAULT_ZERO_THRESHOLD};
use crate::planning::{OptimalSolution, TabularModel, ValueFunction};
use crate::rng::{TrialRng, ENV_STREAM};
use crate::simplex::ParamVector;

use super::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    /// `V*(s_t; theta*) - V^{pi_t}(s_t; theta*)`.
    pub regret_increment: f64,
    pub cumulative_regret: f64,
    /// `||theta_t - theta*||^2` for agents that keep an estimate.
    pub theta_sq_distance: Option<f64>,
    pub counts: ComputeCounts,
    pub solver_iterations: usize,
    pub warnings: usize,
    /// Wall-clock seconds spent in the agent's decision.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub agent: String,
    pub trial: usize,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub history: TransitionHistory,
    pub diagnostics: Vec<BoundReport>,
    pub supermartingale: Vec<SupermartingalePoint>,
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn final_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative_regret)
    }

    pub fn regret_at(&self, t: usize) -> Option<f64> {
        self.steps.get(t.checked_sub(1)?).map(|s| s.cumulative_regret)
    }

    pub fn total_counts(&self) -> ComputeCounts {
        let mut c = ComputeCounts::default();
        for s in &self.steps {
            c += s.counts;
        }
        c
    }

    /// Mean decision time per step, excluding the first (warm-up) step when possible.
    pub fn mean_step_seconds(&self) -> f64 {
        let timed = if self.steps.len() > 1 { &self.steps[1..] } else { &self.steps[..] };
        timed.iter().map(|s| s.seconds).sum::<f64>() / timed.len().max(1) as f64
    }
}

/// Exact values of the true model, with policy evaluations cached by policy.
struct TrueModel {
    model: TabularModel,
    optimal: OptimalSolution,
    cache: HashMap<Vec<usize>, Vec<f64>>,
    uniform: Option<Vec<f64>>,
}

impl TrueModel {
    fn new(mdp: &LinearMdp) -> Result<Self> {
        let model = TabularModel::new(mdp, mdp.theta_star().as_slice());
        Ok(Self {
            optimal: model.solve_optimal()?,
            model,
            cache: HashMap::new(),
            uniform: None,
        })
    }

    fn policy_value(&mut self, policy: &PolicyView, state: usize) -> Result<f64> {
        match policy {
            PolicyView::Deterministic(p) => {
                if let Some(v) = self.cache.get(&p.actions) {
                    return Ok(v[state]);
                }
                let v = self.model.evaluate(p)?.values;
                let out = v[state];
                self.cache.insert(p.actions.clone(), v);
                Ok(out)
            }
            PolicyView::UniformRandom => {
                if self.uniform.is_none() {
                    let na = self.model.num_actions;
                    let probs = vec![vec![1.0 / na as f64; na]; self.model.num_states];
                    self.uniform = Some(self.model.evaluate_stochastic(&probs)?.values);
                }
                Ok(self.uniform.as_ref().expect("set above")[state])
            }
        }
    }
}

/// Runs one agent for `config.horizon` steps against the true model. Deterministic given
/// `seed` apart from the recorded wall-clock times.
pub fn run_trial(
    mdp: &LinearMdp,
    config: &ExperimentConfig,
    agent_config: &AgentConfig,
    trial: usize,
    seed: u64,
) -> Result<RunRecord> {
    let label = agent_config.label();
    let wrap = |step: usize, e: Error| Error::Trial {
        agent: label.clone(),
        trial,
        step,
        source: Box::new(e),
    };
    let mut truth = TrueModel::new(mdp).map_err(|e| wrap(0, e))?;
    let mut env = TrialRng::stream(seed, ENV_STREAM);
    let mut agent = build_agent(agent_config, mdp, seed)?;
    let theta_star = mdp.theta_star().as_slice();
    let mut history = TransitionHistory::new(mdp.dim());
    let mut steps = Vec::with_capacity(config.horizon);
    let mut warnings = Vec::new();
    let mut cumulative = 0.0;
    let mut q_max = f64::NEG_INFINITY;
    let mut state = mdp.sample_initial_state(&mut env);
    for t in 1..=config.horizon {
        let start = Instant::now();
        let decision = agent.act(state, t).map_err(|e| wrap(t, e))?;
        let seconds = start.elapsed().as_secs_f64();
        let v_pi = truth.policy_value(&decision.policy, state).map_err(|e| wrap(t, e))?;
        let increment = truth.optimal.value.values[state] - v_pi;
        cumulative += increment;
        if let Some(q) = &decision.q {
            q_max = q.values.iter().copied().fold(q_max, f64::max);
        }
        for w in &decision.stats.warnings {
            warnings.push(format!("step {t}: {w}"));
        }
        let next_state = mdp.sample_transition(theta_star, state, decision.action, &mut env);
        agent.observe(state, decision.action, next_state).map_err(|e| wrap(t, e))?;
        history.push(mdp, state, decision.action, next_state);
        steps.push(StepRecord {
            t,
            state,
            action: decision.action,
            next_state,
            regret_increment: increment,
            cumulative_regret: cumulative,
            theta_sq_distance: decision
                .theta
                .as_ref()
                .map(|th| th.iter().zip(theta_star).map(|(a, b)| (a - b) * (a - b)).sum()),
            counts: decision.counts,
            solver_iterations: decision.stats.iterations,
            warnings: decision.stats.warnings.len(),
            seconds,
        });
        state = next_state;
    }
    let (diagnostics, supermartingale) = if config.diagnostics {
        trial_diagnostics(mdp, config, &history, &truth.optimal.value, q_max).map_err(|e| wrap(config.horizon, e))?
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(RunRecord {
        agent: label,
        trial,
        seed,
        steps,
        history,
        diagnostics,
        supermartingale,
        warnings,
    })
}

pub fn bound_params(mdp: &LinearMdp, lambda: f64, delta: f64) -> BoundParams {
    BoundParams {
        dim: mdp.dim(),
        lambda,
        feature_norm: mdp.feature_norm_bound(),
        p_min: mdp.assess_feasibility(DEFAULT_ZERO_THRESHOLD).p_min,
        delta,
    }
}

/// Diagnostics of a recorded history: the deterministic lemmas, the confidence ellipsoid of
/// the running MLE at every checkpoint and the supermartingale path. The likelihood uses
/// `lambda = 1` with the concave sign.
pub fn history_diagnostics(
    mdp: &LinearMdp,
    config: &ExperimentConfig,
    history: &TransitionHistory,
) -> Result<(Vec<BoundReport>, Vec<SupermartingalePoint>)> {
    let reg = Regularizer::new(1.0);
    let params = bound_params(mdp, reg.lambda, config.delta);
    let checkpoints = config.effective_checkpoints();
    let trace = MleTrace::compute(history, reg, &ParamVector::uniform(mdp.dim()), MleOptions::default())?;
    let mut reports = vec![elliptical_potential_check(history, params.lambda, params.feature_norm, params.dim)?];
    reports.extend(ftl_delta_reports(history, &trace, reg, &params, &checkpoints)?);
    reports.extend(mle_ellipsoid_report(mdp.theta_star(), history, &trace, &params, &checkpoints)?);
    let path = supermartingale_trace(history, &trace, mdp.theta_star(), reg)?;
    Ok((reports, path))
}

fn trial_diagnostics(
    mdp: &LinearMdp,
    config: &ExperimentConfig,
    history: &TransitionHistory,
    optimal: &ValueFunction,
    q_max: f64,
) -> Result<(Vec<BoundReport>, Vec<SupermartingalePoint>)> {
    let (mut reports, path) = history_diagnostics(mdp, config, history)?;
    let mut value = value_bound_check(optimal, mdp.gamma());
    if q_max.is_finite() {
        // the agent's own values are maxima of its Q-tables
        let own = value_bound_check(&ValueFunction { values: vec![q_max] }, mdp.gamma());
        if own.slack < value.slack {
            value = own;
        }
    }
    value.t = config.horizon;
    reports.push(value);
    Ok((reports, path))
}

/// Trial outcome: a record, or the error that stopped it.
pub type TrialOutcome = std::result::Result<RunRecord, String>;

#[derive(Clone, Debug)]
pub struct AgentRuns {
    pub config: AgentConfig,
    pub label: String,
    /// Indexed by trial.
    pub trials: Vec<TrialOutcome>,
}

impl AgentRuns {
    pub fn successes(&self) -> impl Iterator<Item = &RunRecord> {
        self.trials.iter().filter_map(|t| t.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &String)> {
        self.trials.iter().enumerate().filter_map(|(i, t)| t.as_ref().err().map(|e| (i, e)))
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub agents: Vec<AgentRuns>,
}

impl ExperimentResult {
    pub fn failed_trials(&self) -> usize {
        self.agents.iter().map(|a| a.failures().count()).sum()
    }

    pub fn agent(&self, label: &str) -> Option<&AgentRuns> {
        self.agents.iter().find(|a| a.label == label)
    }
}

/// Runs every agent for `config.trials` trials; trial `i` uses seed `config.seed + i`.
/// Trials run on a pool of `config.threads` workers (all cores when unset); results are
/// ordered by agent and trial regardless of scheduling.
pub fn run_experiment(mdp: &LinearMdp, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.agents.len())
        .flat_map(|a| (0..config.trials).map(move |i| (a, i)))
        .collect();
    let run = |&(a, i): &(usize, usize)| -> TrialOutcome {
        let seed = config.seed.wrapping_add(i as u64);
        run_trial(mdp, config, &config.agents[a], i, seed).map_err(|e| e.to_string())
    };
    let outcomes: Vec<TrialOutcome> = match config.threads {
        Some(1) => jobs.iter().map(run).collect(),
        threads => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| jobs.par_iter().map(run).collect())
        }
    };
    let mut outcomes = outcomes.into_iter();
    let agents = config
        .agents
        .iter()
        .map(|c| AgentRuns {
            config: c.clone(),
            label: c.label(),
            trials: outcomes.by_ref().take(config.trials).collect(),
        })
        .collect();
    let result = ExperimentResult { agents };
    for a in &result.agents {
        for (i, e) in a.failures() {
            log::warn!("agent {} trial {i} failed: {e}", a.label);
        }
    }
    Ok(result)
}
