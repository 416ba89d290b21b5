//! Exact planning under a candidate mixture weight: value iteration, greedy policies,
//! policy evaluation by dense linear solve, and the gradient of a policy's value with
//! respect to the mixture weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::LinearMdp;

pub const DEFAULT_VI_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_VI_MAX_SWEEPS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Q(s, a)`, row-major `(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub num_actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    /// Lowest-index maximizer of `Q(s, .)`.
    pub fn greedy_action(&self, s: usize) -> usize {
        argmax_first(self.row(s))
    }
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Deterministic stationary policy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<usize>,
}

impl Policy {
    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }
}

/// Stopping rule for value iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stopping {
    /// Stop once the sup-norm change of a sweep is below `tolerance`; error after `max_sweeps`.
    Tolerance { tolerance: f64, max_sweeps: usize },
    /// Run exactly this many sweeps.
    Sweeps(usize),
}

impl Default for Stopping {
    fn default() -> Self {
        Stopping::Tolerance {
            tolerance: DEFAULT_VI_TOLERANCE,
            max_sweeps: DEFAULT_VI_MAX_SWEEPS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ValueIterationOutput {
    pub value: ValueFunction,
    /// Q-table of the last sweep.
    pub q: QTable,
    pub sweeps: usize,
    /// Sup-norm residual of the last sweep.
    pub residual: f64,
    /// Residual of every sweep, in order.
    pub residuals: Vec<f64>,
}

/// Tabular view of a mixture MDP under one parameter vector.
#[derive(Clone, Debug)]
pub struct TabularModel {
    pub num_states: usize,
    pub num_actions: usize,
    /// Row-major `(s, a, s')`.
    pub transitions: Vec<f64>,
    pub reward: Vec<f64>,
    pub gamma: f64,
}

impl TabularModel {
    pub fn new(mdp: &LinearMdp, theta: &[f64]) -> Self {
        Self {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            transitions: mdp.transition_tensor(theta),
            reward: mdp.rewards().to_vec(),
            gamma: mdp.gamma(),
        }
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn value_bound(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    /// One Bellman backup: `Q(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) V(s')`.
    pub fn q_from_values(&self, values: &[f64]) -> QTable {
        let mut q = Vec::with_capacity(self.num_states * self.num_actions);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let ev: f64 = self.row(s, a).iter().zip(values).map(|(p, v)| p * v).sum();
                q.push(self.reward[s * self.num_actions + a] + self.gamma * ev);
            }
        }
        QTable {
            num_actions: self.num_actions,
            values: q,
        }
    }

    /// Value iteration started from `init`.
    pub fn value_iteration_from(&self, init: Vec<f64>, stopping: Stopping) -> Result<ValueIterationOutput> {
        let (max_sweeps, tolerance) = match stopping {
            Stopping::Tolerance { tolerance, max_sweeps } => (max_sweeps.max(1), Some(tolerance)),
            Stopping::Sweeps(n) => (n.max(1), None),
        };
        let mut v = init;
        let mut residuals = Vec::new();
        let mut q;
        let mut sweeps = 0;
        loop {
            q = self.q_from_values(&v);
            let next: Vec<f64> = (0..self.num_states)
                .map(|s| q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let residual = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            sweeps += 1;
            residuals.push(residual);
            if tolerance.is_some_and(|tol| residual <= tol) {
                break;
            }
            if sweeps >= max_sweeps {
                if tolerance.is_some() {
                    return Err(Error::NonConvergence {
                        what: "value iteration",
                        iterations: sweeps,
                        residual,
                    });
                }
                break;
            }
        }
        Ok(ValueIterationOutput {
            value: ValueFunction { values: v },
            q,
            sweeps,
            residual: *residuals.last().unwrap(),
            residuals,
        })
    }

    /// Value iteration from `V = 1/(1-gamma)`.
    pub fn value_iteration(&self, stopping: Stopping) -> Result<ValueIterationOutput> {
        self.value_iteration_from(vec![self.value_bound(); self.num_states], stopping)
    }

    /// `I - gamma * P_pi` for an action distribution per state.
    fn policy_system(&self, action_probs: &dyn Fn(usize, usize) -> f64) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.num_states;
        let mut m = DMatrix::<f64>::identity(n, n);
        let mut r = DVector::<f64>::zeros(n);
        for s in 0..n {
            for a in 0..self.num_actions {
                let w = action_probs(s, a);
                if w == 0.0 {
                    continue;
                }
                r[s] += w * self.reward[s * self.num_actions + a];
                for (sn, p) in self.row(s, a).iter().enumerate() {
                    m[(s, sn)] -= self.gamma * w * p;
                }
            }
        }
        (m, r)
    }

    /// Exact `V^pi` via `(I - gamma P_pi) V = r_pi`.
    pub fn evaluate(&self, policy: &Policy) -> Result<ValueFunction> {
        let (m, r) = self.policy_system(&|s, a| if policy.actions[s] == a { 1.0 } else { 0.0 });
        solve(m, r, "policy evaluation")
    }

    /// Exact value of a stochastic policy given as per-state action probabilities.
    pub fn evaluate_stochastic(&self, action_probs: &[Vec<f64>]) -> Result<ValueFunction> {
        let (m, r) = self.policy_system(&|s, a| action_probs[s][a]);
        solve(m, r, "policy evaluation")
    }

    /// `V*` and an optimal policy: value iteration to `1e-10` followed by policy-iteration
    /// polishing so that the returned values are those of an exactly evaluated policy.
    pub fn solve_optimal_from(&self, init: Vec<f64>, tolerance: f64) -> Result<OptimalSolution> {
        let vi = self.value_iteration_from(
            init,
            Stopping::Tolerance {
                tolerance,
                max_sweeps: DEFAULT_VI_MAX_SWEEPS,
            },
        )?;
        self.policy_iteration_from(greedy_policy(&vi.q))
    }

    /// Policy iteration started from `policy`; exact up to the linear solves.
    pub fn policy_iteration_from(&self, mut policy: Policy) -> Result<OptimalSolution> {
        let mut value = self.evaluate(&policy)?;
        let mut q = self.q_from_values(&value.values);
        for _ in 0..100 {
            let mut changed = false;
            for s in 0..self.num_states {
                let cur = policy.actions[s];
                let best = q.greedy_action(s);
                if q.get(s, best) > q.get(s, cur) + 1e-12 {
                    policy.actions[s] = best;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            value = self.evaluate(&policy)?;
            q = self.q_from_values(&value.values);
        }
        Ok(OptimalSolution {
            policy: greedy_policy(&q),
            value,
            q,
        })
    }

    pub fn solve_optimal(&self) -> Result<OptimalSolution> {
        self.solve_optimal_from(vec![self.value_bound(); self.num_states], DEFAULT_VI_TOLERANCE)
    }
}

fn solve(m: DMatrix<f64>, r: DVector<f64>, what: &'static str) -> Result<ValueFunction> {
    let x = m.lu().solve(&r).ok_or(Error::Singular(what))?;
    Ok(ValueFunction {
        values: x.iter().copied().collect(),
    })
}

/// Optimal values, their Q-table and the lowest-index greedy policy.
#[derive(Clone, Debug)]
pub struct OptimalSolution {
    pub value: ValueFunction,
    pub q: QTable,
    pub policy: Policy,
}

pub fn value_iteration(mdp: &LinearMdp, theta: &[f64], stopping: Stopping) -> Result<ValueIterationOutput> {
    TabularModel::new(mdp, theta).value_iteration(stopping)
}

/// Per state, the lowest-index action among the maximizers of `Q(s, .)`.
pub fn greedy_policy(q: &QTable) -> Policy {
    Policy {
        actions: (0..q.num_states()).map(|s| q.greedy_action(s)).collect(),
    }
}

pub fn policy_evaluation(mdp: &LinearMdp, theta: &[f64], policy: &Policy) -> Result<ValueFunction> {
    TabularModel::new(mdp, theta).evaluate(policy)
}

pub fn solve_optimal(mdp: &LinearMdp, theta: &[f64]) -> Result<OptimalSolution> {
    TabularModel::new(mdp, theta).solve_optimal()
}

/// `J = sum_s mu0(s) V(s)`.
pub fn mean_value(value: &ValueFunction, mu0: &[f64]) -> f64 {
    value.values.iter().zip(mu0).map(|(v, p)| v * p).sum()
}

/// Gradient of `V^pi(start; theta)` with respect to `theta`, with `pi` held fixed.
///
/// `g_k = gamma * w^T Phi_k V^pi` where `(I - gamma P_pi)^T w = e_start` and
/// `Phi_k(s) = sum_s' phi(s'|s,pi(s))[k] V^pi(s')`.
pub fn value_gradient(mdp: &LinearMdp, theta: &[f64], policy: &Policy, start_state: usize) -> Result<Vec<f64>> {
    let model = TabularModel::new(mdp, theta);
    let value = model.evaluate(policy)?;
    value_gradient_with(mdp, &model, policy, &value, start_state)
}

/// [`value_gradient`] reusing an already built model and evaluated `V^pi`.
pub(crate) fn value_gradient_with(
    mdp: &LinearMdp,
    model: &TabularModel,
    policy: &Policy,
    value: &ValueFunction,
    start_state: usize,
) -> Result<Vec<f64>> {
    let n = model.num_states;
    let (m, _) = model.policy_system(&|s, a| if policy.actions[s] == a { 1.0 } else { 0.0 });
    let mut e = DVector::<f64>::zeros(n);
    e[start_state] = 1.0;
    let w = m
        .transpose()
        .lu()
        .solve(&e)
        .ok_or(Error::Singular("value gradient"))?;
    let d = mdp.dim();
    let mut g = vec![0.0; d];
    for s in 0..n {
        if w[s] == 0.0 {
            continue;
        }
        let a = policy.actions[s];
        for (sn, v) in value.values.iter().enumerate() {
            let phi = mdp.phi(s, a, sn);
            for k in 0..d {
                g[k] += model.gamma * w[s] * phi[k] * v;
            }
        }
    }
    Ok(g)
}
