use crate::error::Result;
use crate::likelihood::{solve_mle_terms, LikelihoodTerms, MleSolution};
use crate::mdp::LinearMdp;
use crate::planning::{OptimalSolution, TabularModel};
use crate::simplex::ParamVector;

use super::{transition, Agent, AgentConfig, ComputeCounts, Decision, PolicyView, SolverStats};

#[derive(Clone, Debug)]
pub struct CeStep {
    pub mle: MleSolution,
    pub action: usize,
    pub solution: OptimalSolution,
}

/// Certainty equivalence: act optimally for the maximum-likelihood estimate.
pub fn ce_mle_step(
    mdp: &LinearMdp,
    terms: &LikelihoodTerms,
    state: usize,
    config: &AgentConfig,
    warm_start: &ParamVector,
) -> Result<CeStep> {
    let mle = solve_mle_terms(terms, config.regularizer(), warm_start, config.mle_options())?;
    let solution = TabularModel::new(mdp, mle.theta.as_slice()).solve_optimal()?;
    Ok(CeStep {
        action: solution.q.greedy_action(state),
        mle,
        solution,
    })
}

pub struct CeMleAgent<'a> {
    mdp: &'a LinearMdp,
    config: AgentConfig,
    label: String,
    terms: LikelihoodTerms,
    theta: ParamVector,
}

impl<'a> CeMleAgent<'a> {
    pub fn new(mdp: &'a LinearMdp, config: AgentConfig, label: String) -> Self {
        Self {
            theta: ParamVector::uniform(mdp.dim()),
            mdp,
            config,
            label,
            terms: LikelihoodTerms::default(),
        }
    }
}

impl Agent for CeMleAgent<'_> {
    fn label(&self) -> &str {
        &self.label
    }

    fn act(&mut self, state: usize, _t: usize) -> Result<Decision> {
        let step = ce_mle_step(self.mdp, &self.terms, state, &self.config, &self.theta)?;
        self.theta = step.mle.theta.clone();
        Ok(Decision {
            action: step.action,
            policy: PolicyView::Deterministic(step.solution.policy),
            theta: Some(step.mle.theta.into_inner()),
            q: Some(step.solution.q),
            counts: ComputeCounts {
                optimization_calls: 1,
                ..ComputeCounts::default()
            },
            stats: SolverStats {
                iterations: step.mle.iterations,
                objective: Some(step.mle.objective),
                converged: true,
                warnings: Vec::new(),
            },
        })
    }

    fn observe(&mut self, state: usize, action: usize, next_state: usize) -> Result<()> {
        self.terms.push(&transition(self.mdp, state, action, next_state));
        Ok(())
    }
}
