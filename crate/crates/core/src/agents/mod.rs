//! Learning agents behind one contract: observe the state, emit an action, ingest the
//! resulting transition.

mod ce;
mod oracle;
mod random;
mod uclk;
mod vbmle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{MleOptions, Regularizer, RegularizerSign, Transition, DEFAULT_LAMBDA};
use crate::mdp::LinearMdp;
use crate::optim::AscentOptions;
use crate::planning::{Policy, QTable};
use crate::rng::{TrialRng, AGENT_STREAM};

pub use ce::{ce_mle_step, CeMleAgent, CeStep};
pub use oracle::OracleAgent;
pub use random::{uniform_random_step, UniformRandomAgent};
pub use uclk::{uclk_step, BonusMode, ConfidenceRegion, UclkAgent, UclkState, UclkStep};
pub use vbmle::{vbmle_step_approx, vbmle_step_exact, ApproxStep, ExactStep, VbmleApproxAgent, VbmleExactAgent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    VbmleExact,
    VbmleApprox,
    CeMle,
    Uclk,
    UniformRandom,
    /// Plays an optimal policy of the true model.
    Oracle,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::VbmleExact => "vbmle_exact",
            AgentKind::VbmleApprox => "vbmle_approx",
            AgentKind::CeMle => "ce_mle",
            AgentKind::Uclk => "uclk",
            AgentKind::UniformRandom => "uniform_random",
            AgentKind::Oracle => "oracle",
        }
    }
}

fn default_alpha_exponent() -> f64 {
    0.5
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_uclk_radius() -> f64 {
    1.0
}
fn default_uclk_sweeps() -> usize {
    20
}
fn default_mle_tolerance() -> f64 {
    MleOptions::default().tolerance
}
fn default_mle_max_iters() -> usize {
    MleOptions::default().max_iters
}
fn default_vbmle_tolerance() -> f64 {
    1e-7
}
fn default_vbmle_max_iters() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Defaults to the kind's name.
    #[serde(default)]
    pub label: Option<String>,
    /// `alpha(t) = t^alpha_exponent`.
    #[serde(default = "default_alpha_exponent")]
    pub alpha_exponent: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub regularizer_sign: RegularizerSign,
    #[serde(default = "default_uclk_radius")]
    pub uclk_radius: f64,
    #[serde(default = "default_uclk_sweeps")]
    pub uclk_sweeps: usize,
    #[serde(default)]
    pub uclk_bonus: BonusMode,
    #[serde(default = "default_mle_tolerance")]
    pub mle_tolerance: f64,
    #[serde(default = "default_mle_max_iters")]
    pub mle_max_iters: usize,
    /// Projected-gradient residual at which the value-biased ascent stops.
    #[serde(default = "default_vbmle_tolerance")]
    pub vbmle_tolerance: f64,
    #[serde(default = "default_vbmle_max_iters")]
    pub vbmle_max_iters: usize,
    /// Random restarts on top of the warm start and the MLE.
    #[serde(default)]
    pub vbmle_extra_starts: usize,
}

impl AgentConfig {
    pub fn new(kind: AgentKind) -> Self {
        Self {
            kind,
            label: None,
            alpha_exponent: default_alpha_exponent(),
            lambda: default_lambda(),
            regularizer_sign: RegularizerSign::default(),
            uclk_radius: default_uclk_radius(),
            uclk_sweeps: default_uclk_sweeps(),
            uclk_bonus: BonusMode::default(),
            mle_tolerance: default_mle_tolerance(),
            mle_max_iters: default_mle_max_iters(),
            vbmle_tolerance: default_vbmle_tolerance(),
            vbmle_max_iters: default_vbmle_max_iters(),
            vbmle_extra_starts: 0,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn regularizer(&self) -> Regularizer {
        Regularizer {
            lambda: self.lambda,
            sign: self.regularizer_sign,
        }
    }

    pub fn mle_options(&self) -> MleOptions {
        MleOptions {
            tolerance: self.mle_tolerance,
            max_iters: self.mle_max_iters,
        }
    }

    pub(crate) fn vbmle_ascent(&self) -> AscentOptions {
        AscentOptions {
            tolerance: self.vbmle_tolerance,
            max_iters: self.vbmle_max_iters,
            ..AscentOptions::default()
        }
    }

    /// Checks ranges; `pointer` prefixes the JSON pointer of any offending field.
    pub fn validate(&self, pointer: &str) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("{pointer}/{field}"), msg));
        if !(self.alpha_exponent >= 0.0 && self.alpha_exponent.is_finite()) {
            return bad("alpha_exponent", format!("must be finite and >= 0, got {}", self.alpha_exponent));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("must be finite and >= 0, got {}", self.lambda));
        }
        if self.kind == AgentKind::Uclk && !(self.lambda > 0.0) {
            return bad("lambda", "uclk needs a positive ridge parameter".into());
        }
        if !(self.uclk_radius >= 0.0 && self.uclk_radius.is_finite()) {
            return bad("uclk_radius", format!("must be finite and >= 0, got {}", self.uclk_radius));
        }
        if self.uclk_sweeps == 0 {
            return bad("uclk_sweeps", "must be at least 1".into());
        }
        if !(self.mle_tolerance > 0.0) {
            return bad("mle_tolerance", "must be positive".into());
        }
        if !(self.vbmle_tolerance > 0.0) {
            return bad("vbmle_tolerance", "must be positive".into());
        }
        if self.mle_max_iters == 0 {
            return bad("mle_max_iters", "must be at least 1".into());
        }
        if self.vbmle_max_iters == 0 {
            return bad("vbmle_max_iters", "must be at least 1".into());
        }
        Ok(())
    }
}

/// `alpha(t) = t^exponent`.
pub fn alpha_schedule(t: usize, exponent: f64) -> f64 {
    (t as f64).powf(exponent)
}

/// The stationary policy an agent would follow from the current step on.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicyView {
    Deterministic(Policy),
    UniformRandom,
}

/// Work done by one decision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeCounts {
    /// Optimization problems solved; UCLK counts each bonus maximization.
    pub optimization_calls: u64,
    pub bonus_evaluations: u64,
    pub regression_solves: u64,
}

impl std::ops::AddAssign for ComputeCounts {
    fn add_assign(&mut self, o: Self) {
        self.optimization_calls += o.optimization_calls;
        self.bonus_evaluations += o.bonus_evaluations;
        self.regression_solves += o.regression_solves;
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    /// Objective at the returned parameter, for agents that optimize one.
    pub objective: Option<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Decision {
    pub action: usize,
    pub policy: PolicyView,
    /// Current parameter estimate, if the agent keeps one.
    pub theta: Option<Vec<f64>>,
    /// The Q-table the action is greedy in.
    pub q: Option<QTable>,
    pub counts: ComputeCounts,
    pub stats: SolverStats,
}

pub trait Agent: Send {
    fn label(&self) -> &str;

    /// Decision at state `state` of step `t >= 1`.
    fn act(&mut self, state: usize, t: usize) -> Result<Decision>;

    fn observe(&mut self, state: usize, action: usize, next_state: usize) -> Result<()>;
}

pub(crate) fn transition(mdp: &LinearMdp, state: usize, action: usize, next_state: usize) -> Transition {
    Transition {
        state,
        action,
        next_state,
        feature: mdp.phi(state, action, next_state).to_vec(),
    }
}

/// Builds the agent described by `config` for one trial; its randomness comes from the
/// agent stream of `seed`.
pub fn build_agent<'a>(config: &AgentConfig, mdp: &'a LinearMdp, seed: u64) -> Result<Box<dyn Agent + 'a>> {
    config.validate("")?;
    let label = config.label();
    let rng = TrialRng::stream(seed, AGENT_STREAM);
    Ok(match config.kind {
        AgentKind::VbmleExact => Box::new(VbmleExactAgent::new(mdp, config.clone(), label, rng)),
        AgentKind::VbmleApprox => Box::new(VbmleApproxAgent::new(mdp, config.clone(), label)?),
        AgentKind::CeMle => Box::new(CeMleAgent::new(mdp, config.clone(), label)),
        AgentKind::Uclk => Box::new(UclkAgent::new(mdp, config.clone(), label)?),
        AgentKind::UniformRandom => Box::new(UniformRandomAgent::new(mdp.num_actions(), label, rng)),
        AgentKind::Oracle => Box::new(OracleAgent::new(mdp, label)?),
    })
}
