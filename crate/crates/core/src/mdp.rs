//! Linear mixture MDPs: `P(s'|s,a) = <phi(s'|s,a), theta>` where coordinate `k` of
//! `phi(s'|s,a)` is the probability assigned by the `k`-th base kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{TrialRng, RNG_ALGORITHM};
use crate::simplex::{dot, norm, ParamVector};

pub const ENV_FORMAT_VERSION: &str = "vbmle-env/1";
pub const DEFAULT_P_FLOOR: f64 = 0.05;
pub const DEFAULT_ZERO_THRESHOLD: f64 = 1e-12;
pub const DEFAULT_GAMMA: f64 = 0.9;

const STOCHASTIC_TOL: f64 = 1e-9;

/// A finite discounted MDP whose dynamics are a convex mixture of `dim` known base kernels.
///
/// `theta_star` is the true mixture. Agents receive the whole struct but only read the
/// features, rewards, discount and initial distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentDocument", into = "EnvironmentDocument")]
pub struct LinearMdp {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    /// Row-major `(s, a, s', k)`.
    features: Vec<f64>,
    theta_star: ParamVector,
    /// Row-major `(s, a)`.
    reward: Vec<f64>,
    gamma: f64,
    mu0: Vec<f64>,
    seed: Option<u64>,
}

impl LinearMdp {
    /// Builds and validates an MDP. `features` is row-major `(s, a, s', k)`, `reward` row-major `(s, a)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        dim: usize,
        features: Vec<f64>,
        theta_star: ParamVector,
        reward: Vec<f64>,
        gamma: f64,
        mu0: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || dim == 0 {
            return Err(Error::InvalidDimension(format!(
                "|S|={num_states}, |A|={num_actions}, d={dim} must all be positive"
            )));
        }
        let n_feat = num_states * num_actions * num_states * dim;
        if features.len() != n_feat {
            return Err(Error::InvalidDimension(format!(
                "feature tensor has {} entries, expected {n_feat}",
                features.len()
            )));
        }
        if theta_star.dim() != dim {
            return Err(Error::InvalidDimension(format!(
                "theta* has dimension {}, expected {dim}",
                theta_star.dim()
            )));
        }
        if reward.len() != num_states * num_actions {
            return Err(Error::InvalidDimension(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                num_states * num_actions
            )));
        }
        if mu0.len() != num_states {
            return Err(Error::InvalidDimension(format!(
                "mu0 has {} entries, expected {num_states}",
                mu0.len()
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} not in (0, 1)")));
        }
        if reward.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidArgument("rewards must lie in [0, 1]".into()));
        }
        if mu0.iter().any(|&p| !(p > 0.0)) || (mu0.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidArgument(
                "mu0 must be strictly positive and sum to 1".into(),
            ));
        }
        if features.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidArgument("feature entries must be nonnegative".into()));
        }
        let mdp = Self {
            num_states,
            num_actions,
            dim,
            features,
            theta_star,
            reward,
            gamma,
            mu0,
            seed: None,
        };
        for s in 0..num_states {
            for a in 0..num_actions {
                for k in 0..dim {
                    let total: f64 = (0..num_states).map(|sn| mdp.phi(s, a, sn)[k]).sum();
                    if (total - 1.0).abs() > STOCHASTIC_TOL {
                        return Err(Error::InvalidArgument(format!(
                            "base kernel {k} row ({s},{a}) sums to {total}"
                        )));
                    }
                }
            }
        }
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn theta_star(&self) -> &ParamVector {
        &self.theta_star
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} not in (0, 1)")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Feature vector `phi(s'|s,a)`.
    pub fn phi(&self, s: usize, a: usize, s_next: usize) -> &[f64] {
        let start = ((s * self.num_actions + a) * self.num_states + s_next) * self.dim;
        &self.features[start..start + self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// `(<phi(s'|s,a), theta>)_{s'}`.
    pub fn transition_distribution(&self, theta: &[f64], s: usize, a: usize) -> Vec<f64> {
        (0..self.num_states)
            .map(|sn| dot(self.phi(s, a, sn), theta))
            .collect()
    }

    /// Full tabular transition tensor under `theta`, row-major `(s, a, s')`.
    pub fn transition_tensor(&self, theta: &[f64]) -> Vec<f64> {
        self.features
            .chunks_exact(self.dim)
            .map(|phi| dot(phi, theta))
            .collect()
    }

    /// Samples `s' ~ P(.|s,a;theta)` by inverse CDF over state index order.
    pub fn sample_transition(&self, theta: &[f64], s: usize, a: usize, rng: &mut TrialRng) -> usize {
        rng.categorical(&self.transition_distribution(theta, s, a))
    }

    pub fn sample_initial_state(&self, rng: &mut TrialRng) -> usize {
        rng.categorical(&self.mu0)
    }

    /// `L = max ||phi(s'|s,a)||_2`.
    pub fn feature_norm_bound(&self) -> f64 {
        self.features
            .chunks_exact(self.dim)
            .map(norm)
            .fold(0.0, f64::max)
    }

    /// Zero-transition set and smallest nonzero probability of the true model.
    pub fn assess_feasibility(&self, zero_threshold: f64) -> FeasibilityReport {
        let mut zero_set = Vec::new();
        let mut p_min = f64::INFINITY;
        let mut max_row_sum_error: f64 = 0.0;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.transition_distribution(self.theta_star.as_slice(), s, a);
                max_row_sum_error = max_row_sum_error.max((row.iter().sum::<f64>() - 1.0).abs());
                for k in 0..self.dim {
                    let total: f64 = (0..self.num_states).map(|sn| self.phi(s, a, sn)[k]).sum();
                    max_row_sum_error = max_row_sum_error.max((total - 1.0).abs());
                }
                for (sn, &p) in row.iter().enumerate() {
                    if p <= zero_threshold {
                        zero_set.push((s, a, sn));
                    } else {
                        p_min = p_min.min(p);
                    }
                }
            }
        }
        let min_entry = self.features.iter().copied().fold(f64::INFINITY, f64::min);
        let is_feasible = p_min.is_finite()
            && min_entry >= 0.0
            && max_row_sum_error <= STOCHASTIC_TOL
            && self.mu0.iter().all(|&p| p > 0.0);
        FeasibilityReport {
            is_feasible,
            p_min,
            zero_set_size: zero_set.len(),
            zero_set,
            max_row_sum_error,
            min_entry,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub is_feasible: bool,
    pub p_min: f64,
    pub zero_set_size: usize,
    pub zero_set: Vec<(usize, usize, usize)>,
    pub max_row_sum_error: f64,
    pub min_entry: f64,
}

/// Parameters of the random mixture generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub seed: u64,
    #[serde(default = "default_p_floor")]
    pub p_floor: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_p_floor() -> f64 {
    DEFAULT_P_FLOOR
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl MixtureSpec {
    pub fn new(num_states: usize, num_actions: usize, dim: usize, seed: u64) -> Self {
        Self {
            num_states,
            num_actions,
            dim,
            seed,
            p_floor: DEFAULT_P_FLOOR,
            gamma: DEFAULT_GAMMA,
        }
    }

    /// Samples `dim` row-stochastic base kernels with entries `>= p_floor`, a uniform
    /// `theta*` on the simplex, uniform rewards and a uniform initial distribution.
    pub fn generate(&self) -> Result<LinearMdp> {
        let (ns, na, d) = (self.num_states, self.num_actions, self.dim);
        if ns < 2 || na < 1 || d < 2 {
            return Err(Error::InvalidDimension(format!(
                "need |S| >= 2, |A| >= 1, d >= 2 (got {ns}, {na}, {d})"
            )));
        }
        if !(self.p_floor >= 0.0 && self.p_floor < 1.0 / ns as f64) {
            return Err(Error::InvalidDimension(format!(
                "p_floor = {} must lie in [0, 1/|S|)",
                self.p_floor
            )));
        }
        let mut rng = TrialRng::new(self.seed);
        let mut features = vec![0.0; ns * na * ns * d];
        let slack = 1.0 - ns as f64 * self.p_floor;
        for k in 0..d {
            for s in 0..ns {
                for a in 0..na {
                    let row = rng.simplex_point(ns);
                    for (sn, w) in row.into_iter().enumerate() {
                        features[((s * na + a) * ns + sn) * d + k] = self.p_floor + slack * w;
                    }
                }
            }
        }
        let theta_star = ParamVector::new(rng.simplex_point(d))?;
        let reward: Vec<f64> = (0..ns * na).map(|_| rng.uniform()).collect();
        let mu0 = vec![1.0 / ns as f64; ns];
        let mut mdp = LinearMdp::new(ns, na, d, features, theta_star, reward, self.gamma, mu0)?;
        mdp.seed = Some(self.seed);
        Ok(mdp)
    }
}

/// Convenience wrapper over [`MixtureSpec::generate`] with the default discount.
pub fn generate_mixture_mdp(
    num_states: usize,
    num_actions: usize,
    dim: usize,
    seed: u64,
    p_floor: f64,
) -> Result<LinearMdp> {
    MixtureSpec {
        p_floor,
        ..MixtureSpec::new(num_states, num_actions, dim, seed)
    }
    .generate()
}

/// On-disk form of a [`LinearMdp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentDocument {
    pub format_version: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    /// Flattened row-major `(s, a, s', k)`.
    pub features: Vec<f64>,
    pub theta_star: Vec<f64>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub mu0: Vec<f64>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub rng: Option<String>,
}

impl From<LinearMdp> for EnvironmentDocument {
    fn from(mdp: LinearMdp) -> Self {
        let reward = mdp
            .reward
            .chunks_exact(mdp.num_actions)
            .map(|r| r.to_vec())
            .collect();
        Self {
            format_version: ENV_FORMAT_VERSION.to_string(),
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            dim: mdp.dim,
            features: mdp.features,
            theta_star: mdp.theta_star.into_inner(),
            reward,
            gamma: mdp.gamma,
            mu0: mdp.mu0,
            seed: mdp.seed,
            rng: mdp.seed.map(|_| RNG_ALGORITHM.to_string()),
        }
    }
}

impl TryFrom<EnvironmentDocument> for LinearMdp {
    type Error = Error;

    fn try_from(doc: EnvironmentDocument) -> Result<Self> {
        if doc.format_version != ENV_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported environment format {:?} (expected {ENV_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.reward.iter().any(|r| r.len() != doc.num_actions) {
            return Err(Error::InvalidDimension("reward rows must have |A| entries".into()));
        }
        let reward = doc.reward.into_iter().flatten().collect();
        let mut mdp = LinearMdp::new(
            doc.num_states,
            doc.num_actions,
            doc.dim,
            doc.features,
            ParamVector::new(doc.theta_star)?,
            reward,
            doc.gamma,
            doc.mu0,
        )?;
        mdp.seed = doc.seed;
        Ok(mdp)
    }
}
