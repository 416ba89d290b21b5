use crate::error::Result;
use crate::likelihood::{feasible_start, solve_mle_terms, LikelihoodTerms, MleSolution, Regularizer};
use crate::mdp::LinearMdp;
use crate::optim::{projected_gradient_ascent, AscentOptions, Evaluation, Objective};
use crate::planning::{value_gradient_with, OptimalSolution, Policy, TabularModel};
use crate::rng::TrialRng;
use crate::simplex::{dot, ParamVector};

use super::{
    alpha_schedule, transition, Agent, AgentConfig, ComputeCounts, Decision, PolicyView, SolverStats,
};

/// `l(theta) + alpha * V*(state; theta)`.
struct ValueBiased<'a> {
    mdp: &'a LinearMdp,
    terms: &'a LikelihoodTerms,
    reg: Regularizer,
    alpha: f64,
    state: usize,
    /// Optimal policy of the last evaluated point; seeds the next policy iteration.
    policy: Policy,
}

impl ValueBiased<'_> {
    fn optimal(&mut self, theta: &[f64]) -> Result<(TabularModel, OptimalSolution)> {
        let model = TabularModel::new(self.mdp, theta);
        let sol = model.policy_iteration_from(self.policy.clone())?;
        self.policy = sol.policy.clone();
        Ok((model, sol))
    }
}

impl Objective for ValueBiased<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Option<Evaluation>> {
        let Some(mut lik) = self.terms.evaluate(x, self.reg) else {
            return Ok(None);
        };
        if self.alpha == 0.0 {
            return Ok(Some(lik));
        }
        let (model, sol) = self.optimal(x)?;
        let v = sol.value.values[self.state];
        let g = value_gradient_with(self.mdp, &model, &sol.policy, &sol.value, self.state)?;
        for (a, b) in lik.gradient.iter_mut().zip(&g) {
            *a += self.alpha * b;
        }
        lik.value += self.alpha * v;
        lik.extra = v;
        Ok(Some(lik))
    }

    fn increase(&mut self, x: &[f64], fx: &Evaluation, y: &[f64], fy: &Evaluation) -> f64 {
        self.terms.increase(x, y, self.reg) + self.alpha * (fy.extra - fx.extra)
    }
}

#[derive(Clone, Debug)]
pub struct ExactStep {
    pub theta: ParamVector,
    pub action: usize,
    /// Planning solution under `theta` at full tolerance.
    pub solution: OptimalSolution,
    /// `l(theta) + alpha V*(state; theta)`.
    pub objective: f64,
    pub mle: MleSolution,
    /// Final objective of each start, in order: warm start, MLE, random starts.
    pub start_objectives: Vec<f64>,
    pub stats: SolverStats,
}

/// One step of value-biased estimation: approximately maximizes
/// `l_t(theta) + alpha V*(state; theta)` over the simplex by projected gradient ascent from
/// the warm start, from the MLE and from `config.vbmle_extra_starts` random points, keeping
/// the best. The action is greedy at `state` under the returned parameter.
pub fn vbmle_step_exact(
    mdp: &LinearMdp,
    terms: &LikelihoodTerms,
    state: usize,
    alpha: f64,
    config: &AgentConfig,
    warm_start: &ParamVector,
    mle_warm_start: &ParamVector,
    rng: &mut TrialRng,
) -> Result<ExactStep> {
    let reg = config.regularizer();
    let mle = solve_mle_terms(terms, reg, mle_warm_start, config.mle_options())?;
    let mut starts = vec![warm_start.clone(), mle.theta.clone()];
    for _ in 0..config.vbmle_extra_starts {
        starts.push(ParamVector::from_projected(rng.simplex_point(mdp.dim())));
    }
    let initial_policy = TabularModel::new(mdp, mle.theta.as_slice())
        .policy_iteration_from(Policy {
            actions: vec![0; mdp.num_states()],
        })?
        .policy;
    let mut objective = ValueBiased {
        mdp,
        terms,
        reg,
        alpha,
        state,
        policy: initial_policy,
    };
    let options = config.vbmle_ascent();
    let mut best: Option<(ParamVector, f64)> = None;
    let mut stats = SolverStats {
        converged: true,
        ..SolverStats::default()
    };
    let mut start_objectives = Vec::with_capacity(starts.len());
    for (i, start) in starts.iter().enumerate() {
        if terms.evaluate(start.as_slice(), reg).is_none() {
            start_objectives.push(f64::NEG_INFINITY);
            continue;
        }
        let out = projected_gradient_ascent(&mut objective, start, &options)?;
        stats.iterations += out.iterations;
        if !out.converged {
            stats.converged = false;
            stats.warnings.push(format!(
                "value-biased ascent from start {i} stopped after {} iterations with residual {:e}",
                out.iterations, out.residual
            ));
        }
        start_objectives.push(out.value);
        if best.as_ref().is_none_or(|(_, v)| out.value > *v) {
            best = Some((out.point, out.value));
        }
    }
    let (theta, value) = best.expect("the MLE start is always feasible");
    let solution = TabularModel::new(mdp, theta.as_slice()).policy_iteration_from(objective.policy.clone())?;
    let action = solution.q.greedy_action(state);
    stats.objective = Some(value);
    Ok(ExactStep {
        theta,
        action,
        solution,
        objective: value,
        mle,
        start_objectives,
        stats,
    })
}

/// `l(theta) + alpha <bias, theta>`; concave when the regularizer is.
struct LinearlyBiased<'a> {
    terms: &'a LikelihoodTerms,
    reg: Regularizer,
    alpha: f64,
    bias: Vec<f64>,
}

impl Objective for LinearlyBiased<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Option<Evaluation>> {
        let Some(mut lik) = self.terms.evaluate(x, self.reg) else {
            return Ok(None);
        };
        lik.value += self.alpha * dot(&self.bias, x);
        for (g, b) in lik.gradient.iter_mut().zip(&self.bias) {
            *g += self.alpha * b;
        }
        Ok(Some(lik))
    }

    fn increase(&mut self, x: &[f64], _fx: &Evaluation, y: &[f64], _fy: &Evaluation) -> f64 {
        let lin: f64 = self.bias.iter().zip(x.iter().zip(y)).map(|(b, (p, q))| b * (q - p)).sum();
        self.terms.increase(x, y, self.reg) + self.alpha * lin
    }
}

#[derive(Clone, Debug)]
pub struct ApproxStep {
    pub theta: ParamVector,
    pub action: usize,
    pub solution: OptimalSolution,
    /// Action whose successor features define the bias.
    pub anchor_action: usize,
    /// `sum_s' phi(s'|state, anchor) V_prev(s')`.
    pub bias: Vec<f64>,
    pub objective: f64,
    pub stats: SolverStats,
}

/// One step of the approximated estimator: the value bias is replaced by the linear term
/// `alpha <sum_s' phi(s'|state, a) V_prev(s'), theta>`, with `a` greedy at `state` under
/// `prev_theta` and `V_prev = V*(.; prev_theta)`.
pub fn vbmle_step_approx(
    mdp: &LinearMdp,
    terms: &LikelihoodTerms,
    state: usize,
    alpha: f64,
    config: &AgentConfig,
    prev_value: &[f64],
    prev_theta: &ParamVector,
) -> Result<ApproxStep> {
    let prev_model = TabularModel::new(mdp, prev_theta.as_slice());
    let anchor_action = prev_model.q_from_values(prev_value).greedy_action(state);
    let mut bias = vec![0.0; mdp.dim()];
    for (sn, v) in prev_value.iter().enumerate() {
        for (b, f) in bias.iter_mut().zip(mdp.phi(state, anchor_action, sn)) {
            *b += f * v;
        }
    }
    let reg = config.regularizer();
    let start = feasible_start(terms, reg, prev_theta)?;
    let mut objective = LinearlyBiased {
        terms,
        reg,
        alpha,
        bias,
    };
    let options = AscentOptions {
        tolerance: config.mle_tolerance,
        max_iters: config.mle_max_iters,
        ..AscentOptions::default()
    };
    let out = projected_gradient_ascent(&mut objective, &start, &options)?;
    let mut stats = SolverStats {
        iterations: out.iterations,
        objective: Some(out.value),
        converged: out.converged,
        warnings: Vec::new(),
    };
    if !out.converged {
        stats.warnings.push(format!(
            "biased likelihood ascent stopped after {} iterations with residual {:e}",
            out.iterations, out.residual
        ));
    }
    let solution = TabularModel::new(mdp, out.point.as_slice()).solve_optimal()?;
    Ok(ApproxStep {
        action: solution.q.greedy_action(state),
        theta: out.point,
        solution,
        anchor_action,
        bias: objective.bias,
        objective: out.value,
        stats,
    })
}

pub struct VbmleExactAgent<'a> {
    mdp: &'a LinearMdp,
    config: AgentConfig,
    label: String,
    rng: TrialRng,
    terms: LikelihoodTerms,
    theta: ParamVector,
    mle: ParamVector,
}

impl<'a> VbmleExactAgent<'a> {
    pub fn new(mdp: &'a LinearMdp, config: AgentConfig, label: String, rng: TrialRng) -> Self {
        let d = mdp.dim();
        Self {
            mdp,
            config,
            label,
            rng,
            terms: LikelihoodTerms::default(),
            theta: ParamVector::uniform(d),
            mle: ParamVector::uniform(d),
        }
    }
}

impl Agent for VbmleExactAgent<'_> {
    fn label(&self) -> &str {
        &self.label
    }

    fn act(&mut self, state: usize, t: usize) -> Result<Decision> {
        let alpha = alpha_schedule(t, self.config.alpha_exponent);
        let step = vbmle_step_exact(
            self.mdp,
            &self.terms,
            state,
            alpha,
            &self.config,
            &self.theta,
            &self.mle,
            &mut self.rng,
        )?;
        self.theta = step.theta.clone();
        self.mle = step.mle.theta;
        Ok(Decision {
            action: step.action,
            policy: PolicyView::Deterministic(step.solution.policy),
            theta: Some(step.theta.into_inner()),
            q: Some(step.solution.q),
            counts: ComputeCounts {
                optimization_calls: 1,
                ..ComputeCounts::default()
            },
            stats: step.stats,
        })
    }

    fn observe(&mut self, state: usize, action: usize, next_state: usize) -> Result<()> {
        self.terms.push(&transition(self.mdp, state, action, next_state));
        Ok(())
    }
}

pub struct VbmleApproxAgent<'a> {
    mdp: &'a LinearMdp,
    config: AgentConfig,
    label: String,
    terms: LikelihoodTerms,
    theta: ParamVector,
    value: Vec<f64>,
}

impl<'a> VbmleApproxAgent<'a> {
    pub fn new(mdp: &'a LinearMdp, config: AgentConfig, label: String) -> Result<Self> {
        let theta = ParamVector::uniform(mdp.dim());
        let value = TabularModel::new(mdp, theta.as_slice()).solve_optimal()?.value.values;
        Ok(Self {
            mdp,
            config,
            label,
            terms: LikelihoodTerms::default(),
            theta,
            value,
        })
    }
}

impl Agent for VbmleApproxAgent<'_> {
    fn label(&self) -> &str {
        &self.label
    }

    fn act(&mut self, state: usize, t: usize) -> Result<Decision> {
        let alpha = alpha_schedule(t, self.config.alpha_exponent);
        let step = vbmle_step_approx(self.mdp, &self.terms, state, alpha, &self.config, &self.value, &self.theta)?;
        self.theta = step.theta.clone();
        self.value = step.solution.value.values.clone();
        Ok(Decision {
            action: step.action,
            policy: PolicyView::Deterministic(step.solution.policy),
            theta: Some(step.theta.into_inner()),
            q: Some(step.solution.q),
            counts: ComputeCounts {
                optimization_calls: 1,
                ..ComputeCounts::default()
            },
            stats: step.stats,
        })
    }

    fn observe(&mut self, state: usize, action: usize, next_state: usize) -> Result<()> {
        self.terms.push(&transition(self.mdp, state, action, next_state));
        Ok(())
    }
}
