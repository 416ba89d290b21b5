use crate::error::Result;
use crate::mdp::LinearMdp;
use crate::planning::{solve_optimal, OptimalSolution};

use super::{Agent, ComputeCounts, Decision, PolicyView, SolverStats};

/// Knows the true parameter and plays its optimal policy.
pub struct OracleAgent {
    label: String,
    theta: Vec<f64>,
    solution: OptimalSolution,
}

impl OracleAgent {
    pub fn new(mdp: &LinearMdp, label: String) -> Result<Self> {
        let theta = mdp.theta_star().as_slice().to_vec();
        Ok(Self {
            solution: solve_optimal(mdp, &theta)?,
            theta,
            label,
        })
    }
}

impl Agent for OracleAgent {
    fn label(&self) -> &str {
        &self.label
    }

    fn act(&mut self, state: usize, _t: usize) -> Result<Decision> {
        Ok(Decision {
            action: self.solution.q.greedy_action(state),
            policy: PolicyView::Deterministic(self.solution.policy.clone()),
            theta: Some(self.theta.clone()),
            q: Some(self.solution.q.clone()),
            counts: ComputeCounts::default(),
            stats: SolverStats {
                converged: true,
                ..SolverStats::default()
            },
        })
    }

    fn observe(&mut self, _state: usize, _action: usize, _next_state: usize) -> Result<()> {
        Ok(())
    }
}
