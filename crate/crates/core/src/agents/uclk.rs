//! Optimistic value-targeted regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::GramMatrix;
use crate::mdp::LinearMdp;
use crate::planning::{greedy_policy, QTable};
use crate::simplex::dot;

use super::{Agent, AgentConfig, ComputeCounts, Decision, PolicyView, SolverStats};

/// How the optimistic next-state value `max <phi_V, theta>` is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusMode {
    /// Exact maximum over the simplex intersected with the confidence ellipsoid.
    #[default]
    Constrained,
    /// `<phi_V, theta_hat> + radius ||phi_V||_{Sigma^{-1}}`.
    ClosedForm,
}

/// One face of the simplex restricted to the confidence ellipsoid.
///
/// Points of the face's affine hull are `e_{f0} + sum_j z_j (e_{fj} - e_{f0})`.
#[derive(Clone, Debug)]
struct Face {
    support: Vec<usize>,
    h_inv: DMatrix<f64>,
    /// Minimizer of the ellipsoid's quadratic over the affine hull, in `z` coordinates.
    center: DVector<f64>,
    /// `radius^2` minus the quadratic's value at `center`; negative when the slice is empty.
    slack: f64,
}

/// `{theta : ||theta - center||_Sigma <= radius}` intersected with the simplex.
#[derive(Clone, Debug)]
pub struct ConfidenceRegion {
    dim: usize,
    center: Vec<f64>,
    radius: f64,
    faces: Vec<Face>,
    vertices_inside: Vec<usize>,
    /// `Sigma`-closest simplex point to `center`.
    projection: Vec<f64>,
    nonempty: bool,
}

const FEASIBILITY_TOL: f64 = 1e-12;

impl ConfidenceRegion {
    pub fn new(gram: &DMatrix<f64>, center: &[f64], radius: f64) -> Result<Self> {
        let d = center.len();
        if gram.nrows() != d || gram.ncols() != d {
            return Err(Error::InvalidDimension(format!(
                "gram matrix is {}x{}, center has {d} entries",
                gram.nrows(),
                gram.ncols()
            )));
        }
        let m = DVector::from_column_slice(center);
        let quad = |x: &DVector<f64>| {
            let diff = x - &m;
            diff.dot(&(gram * &diff))
        };
        let r2 = radius * radius;
        let mut faces = Vec::new();
        let mut vertices_inside = Vec::new();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << d) {
            let support: Vec<usize> = (0..d).filter(|k| mask >> k & 1 == 1).collect();
            if support.len() == 1 {
                let mut e = DVector::zeros(d);
                e[support[0]] = 1.0;
                let q = quad(&e);
                if q <= r2 * (1.0 + 1e-12) {
                    vertices_inside.push(support[0]);
                }
                if best.as_ref().is_none_or(|(b, _)| q < *b) {
                    best = Some((q, e.iter().copied().collect()));
                }
                continue;
            }
            let n = basis(d, &support);
            let mut base = DVector::zeros(d);
            base[support[0]] = 1.0;
            let h = n.transpose() * gram * &n;
            let Some(chol) = h.clone().cholesky() else {
                return Err(Error::Singular("confidence region face"));
            };
            let h_inv = chol.inverse();
            let g = n.transpose() * (gram * (&base - &m));
            let center = -(&h_inv * &g);
            let min_quad = quad(&base) + g.dot(&center);
            let point = &base + &n * &center;
            if point.iter().all(|x| *x >= -FEASIBILITY_TOL) && best.as_ref().is_none_or(|(b, _)| min_quad < *b) {
                best = Some((min_quad, point.iter().map(|x| x.max(0.0)).collect()));
            }
            faces.push(Face {
                support,
                h_inv,
                center,
                slack: r2 - min_quad,
            });
        }
        let (min_quad, projection) = best.expect("every simplex vertex is a candidate");
        Ok(Self {
            dim: d,
            center: center.to_vec(),
            radius,
            faces,
            vertices_inside,
            nonempty: min_quad <= r2 * (1.0 + 1e-12),
            projection,
        })
    }

    pub fn is_empty(&self) -> bool {
        !self.nonempty
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Simplex point closest to the center in the ellipsoid metric.
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    /// `max <c, theta>` over the region; over the empty region, `<c, projection>`.
    pub fn max_linear(&self, c: &[f64]) -> f64 {
        let mut best = dot(c, &self.projection);
        if !self.nonempty {
            return best;
        }
        for &k in &self.vertices_inside {
            best = best.max(c[k]);
        }
        let mut theta = vec![0.0; self.dim];
        for face in &self.faces {
            if face.slack < 0.0 {
                continue;
            }
            let f0 = face.support[0];
            let q = DVector::from_iterator(face.support.len() - 1, face.support[1..].iter().map(|&k| c[k] - c[f0]));
            let w = &face.h_inv * &q;
            let qw = q.dot(&w);
            let z = if qw > 1e-300 {
                &face.center + w * (face.slack / qw).sqrt()
            } else {
                face.center.clone()
            };
            theta.iter_mut().for_each(|x| *x = 0.0);
            theta[f0] = 1.0 - z.sum();
            for (j, &k) in face.support[1..].iter().enumerate() {
                theta[k] = z[j];
            }
            if theta.iter().all(|x| *x >= -FEASIBILITY_TOL) {
                best = best.max(dot(c, &theta));
            }
        }
        best
    }
}

/// Columns `e_{fj} - e_{f0}` for `j >= 1`.
fn basis(d: usize, support: &[usize]) -> DMatrix<f64> {
    let mut n = DMatrix::zeros(d, support.len() - 1);
    for (j, &k) in support[1..].iter().enumerate() {
        n[(k, j)] = 1.0;
        n[(support[0], j)] = -1.0;
    }
    n
}

/// Value-targeted regression state: `Sigma = lambda I + sum x x^T`, `b = sum x y`.
#[derive(Clone, Debug)]
pub struct UclkState {
    pub gram: GramMatrix,
    pub target: Vec<f64>,
    /// Values planned at the last step; regression targets for the next observation.
    pub values: Vec<f64>,
    /// `sum_s' phi(s'|s_t, a_t) V_t(s')` of the last decision.
    pub pending: Option<Vec<f64>>,
}

impl UclkState {
    pub fn new(dim: usize, num_states: usize, lambda: f64) -> Result<Self> {
        Ok(Self {
            gram: GramMatrix::new(dim, lambda)?,
            target: vec![0.0; dim],
            values: vec![0.0; num_states],
            pending: None,
        })
    }

    pub fn estimate(&self) -> Vec<f64> {
        self.gram.solve(&self.target)
    }

    /// Regresses `V_t(next_state)` on the features stored by the last decision.
    pub fn observe(&mut self, next_state: usize) {
        if let Some(x) = self.pending.take() {
            let y = self.values[next_state];
            self.gram.update(&x);
            for (b, xi) in self.target.iter_mut().zip(&x) {
                *b += xi * y;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct UclkStep {
    pub action: usize,
    pub q: QTable,
    pub values: Vec<f64>,
    pub estimate: Vec<f64>,
    pub counts: ComputeCounts,
}

/// `sum_s' phi(s'|s,a) V(s')`.
fn successor_features(mdp: &LinearMdp, s: usize, a: usize, values: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (sn, v) in values.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        for (o, f) in out.iter_mut().zip(mdp.phi(s, a, sn)) {
            *o += f * v;
        }
    }
}

/// `config.uclk_sweeps` sweeps of optimistic value iteration from `V = 0`, each backup
/// `Q(s,a) = R(s,a) + gamma clip(max_theta <phi_V(s,a), theta>, 0, 1/(1-gamma))`.
/// Updates `state.values` and the pending regression features for the chosen action.
pub fn uclk_step(mdp: &LinearMdp, state_index: usize, config: &AgentConfig, state: &mut UclkState) -> Result<UclkStep> {
    let (ns, na, d) = (mdp.num_states(), mdp.num_actions(), mdp.dim());
    let gamma = mdp.gamma();
    let v_max = 1.0 / (1.0 - gamma);
    let estimate = state.estimate();
    let region = match config.uclk_bonus {
        BonusMode::Constrained => Some(ConfidenceRegion::new(state.gram.matrix(), &estimate, config.uclk_radius)?),
        BonusMode::ClosedForm => None,
    };
    let mut values = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    let mut phi_v = vec![0.0; d];
    let mut bonus_evaluations = 0u64;
    for _ in 0..config.uclk_sweeps {
        for s in 0..ns {
            for a in 0..na {
                successor_features(mdp, s, a, &values, &mut phi_v);
                let optimistic = match &region {
                    Some(region) => region.max_linear(&phi_v),
                    None => dot(&phi_v, &estimate) + config.uclk_radius * state.gram.inverse_norm_sq(&phi_v).sqrt(),
                };
                bonus_evaluations += 1;
                q[s * na + a] = mdp.reward(s, a) + gamma * optimistic.clamp(0.0, v_max);
            }
        }
        for s in 0..ns {
            values[s] = q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let q = QTable {
        num_actions: na,
        values: q,
    };
    let action = q.greedy_action(state_index);
    let mut x = vec![0.0; d];
    successor_features(mdp, state_index, action, &values, &mut x);
    state.pending = Some(x);
    state.values = values.clone();
    Ok(UclkStep {
        action,
        q,
        values,
        estimate,
        counts: ComputeCounts {
            optimization_calls: bonus_evaluations,
            bonus_evaluations,
            regression_solves: 1,
        },
    })
}

pub struct UclkAgent<'a> {
    mdp: &'a LinearMdp,
    config: AgentConfig,
    label: String,
    state: UclkState,
}

impl<'a> UclkAgent<'a> {
    pub fn new(mdp: &'a LinearMdp, config: AgentConfig, label: String) -> Result<Self> {
        Ok(Self {
            state: UclkState::new(mdp.dim(), mdp.num_states(), config.lambda)?,
            mdp,
            config,
            label,
        })
    }
}

impl Agent for UclkAgent<'_> {
    fn label(&self) -> &str {
        &self.label
    }

    fn act(&mut self, state: usize, _t: usize) -> Result<Decision> {
        let step = uclk_step(self.mdp, state, &self.config, &mut self.state)?;
        Ok(Decision {
            action: step.action,
            policy: PolicyView::Deterministic(greedy_policy(&step.q)),
            theta: Some(step.estimate),
            q: Some(step.q),
            counts: step.counts,
            stats: SolverStats {
                converged: true,
                ..SolverStats::default()
            },
        })
    }

    fn observe(&mut self, _state: usize, _action: usize, next_state: usize) -> Result<()> {
        self.state.observe(next_state);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{build_agent, AgentKind};
    use crate::mdp::generate_mixture_mdp;
    use crate::planning::TabularModel;
    use crate::rng::TrialRng;
    use crate::simplex::ParamVector;
    use proptest::prelude::*;

    #[test]
    fn first_sweep_sees_rewards_only() {
        let mdp = generate_mixture_mdp(3, 2, 4, 1, 0.05).unwrap();
        let mut cfg = AgentConfig::new(AgentKind::Uclk);
        cfg.uclk_sweeps = 1;
        for mode in [BonusMode::Constrained, BonusMode::ClosedForm] {
            cfg.uclk_bonus = mode;
            let mut st = UclkState::new(4, 3, 1.0).unwrap();
            let step = uclk_step(&mdp, 0, &cfg, &mut st).unwrap();
            assert_eq!(step.q.values, mdp.rewards());
        }
    }

    #[test]
    fn bonus_evaluation_count() {
        let mdp = generate_mixture_mdp(3, 2, 4, 1, 0.05).unwrap();
        let cfg = AgentConfig::new(AgentKind::Uclk);
        let mut st = UclkState::new(4, 3, 1.0).unwrap();
        let step = uclk_step(&mdp, 0, &cfg, &mut st).unwrap();
        assert_eq!(step.counts.bonus_evaluations, 120);
        assert_eq!(step.counts.regression_solves, 1);
    }

    #[test]
    fn zero_radius_closed_form_is_certainty_equivalent() {
        // a regression that has converged to theta* plans like value iteration under theta*
        let mdp = generate_mixture_mdp(4, 2, 3, 6, 0.05).unwrap();
        let theta = mdp.theta_star().as_slice().to_vec();
        let mut st = UclkState::new(3, 4, 1e-9).unwrap();
        st.target = theta.iter().map(|t| t * 1e-9).collect();
        let mut cfg = AgentConfig::new(AgentKind::Uclk);
        cfg.uclk_radius = 0.0;
        cfg.uclk_bonus = BonusMode::ClosedForm;
        cfg.uclk_sweeps = 60;
        let step = uclk_step(&mdp, 0, &cfg, &mut st).unwrap();
        let model = TabularModel::new(&mdp, &theta);
        let vi = model
            .value_iteration_from(vec![0.0; 4], crate::planning::Stopping::Sweeps(60))
            .unwrap();
        for (a, b) in step.values.iter().zip(&vi.value.values) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(greedy_policy(&step.q), greedy_policy(&vi.q));
    }

    #[test]
    fn agent_reports_counts_and_greedy_actions() {
        let mdp = generate_mixture_mdp(3, 2, 3, 4, 0.05).unwrap();
        let mut agent = build_agent(&AgentConfig::new(AgentKind::Uclk), &mdp, 1).unwrap();
        let mut rng = TrialRng::new(8);
        let mut s = 0;
        for t in 1..=20 {
            let d = agent.act(s, t).unwrap();
            assert_eq!(d.counts.optimization_calls, 20 * 3 * 2);
            assert_eq!(d.action, d.q.as_ref().unwrap().greedy_action(s));
            let v_max = 1.0 / (1.0 - mdp.gamma());
            assert!(d.q.unwrap().values.iter().all(|q| *q >= 0.0 && *q <= 1.0 + mdp.gamma() * v_max + 1e-12));
            let sn = mdp.sample_transition(mdp.theta_star().as_slice(), s, d.action, &mut rng);
            agent.observe(s, d.action, sn).unwrap();
            s = sn;
        }
    }

    fn spd(dim: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = TrialRng::new(seed);
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.uniform() - 0.5);
        &a * a.transpose() + DMatrix::identity(dim, dim) * 0.2
    }

    fn inside(gram: &DMatrix<f64>, center: &[f64], radius: f64, x: &[f64]) -> bool {
        let diff = DVector::from_column_slice(x) - DVector::from_column_slice(center);
        diff.dot(&(gram * &diff)) <= radius * radius * (1.0 + 1e-9)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// The face enumeration dominates every sampled feasible point and is attained by
        /// nothing larger than the simplex maximum.
        #[test]
        fn constrained_maximum_dominates_sampled_points(seed in 0u64..10_000, dim in 2usize..5, radius in 0.05f64..1.5) {
            let gram = spd(dim, seed);
            let mut rng = TrialRng::new(seed ^ 0xabc);
            let center: Vec<f64> = ParamVector::from_projected(rng.simplex_point(dim)).into_inner()
                .iter().map(|x| x + 0.2 * (rng.uniform() - 0.5)).collect();
            let c: Vec<f64> = (0..dim).map(|_| rng.uniform() * 10.0).collect();
            let region = ConfidenceRegion::new(&gram, &center, radius).unwrap();
            let value = region.max_linear(&c);
            let cmax = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(value <= cmax + 1e-9);
            let mut feasible = 0;
            for _ in 0..4000 {
                let x = rng.simplex_point(dim);
                if inside(&gram, &center, radius, &x) {
                    feasible += 1;
                    prop_assert!(dot(&c, &x) <= value + 1e-9);
                }
            }
            if feasible > 0 {
                prop_assert!(!region.is_empty());
            }
            if region.is_empty() {
                prop_assert!((value - dot(&c, region.projection())).abs() < 1e-12);
            } else {
                prop_assert!(inside(&gram, &center, radius, region.projection()));
            }
        }
    }

    #[test]
    fn projection_matches_a_fine_grid() {
        let gram = spd(2, 3);
        let center = [1.4, 0.3];
        let region = ConfidenceRegion::new(&gram, &center, 0.01).unwrap();
        assert!(region.is_empty());
        let q = |w: f64| {
            let diff = DVector::from_column_slice(&[w - center[0], 1.0 - w - center[1]]);
            diff.dot(&(&gram * &diff))
        };
        let best = (0..=100_000)
            .map(|i| i as f64 / 100_000.0)
            .min_by(|a, b| q(*a).total_cmp(&q(*b)))
            .unwrap();
        assert!((region.projection()[0] - best).abs() < 1e-4);
    }

    #[test]
    fn large_radius_reaches_the_best_vertex() {
        let gram = DMatrix::identity(3, 3);
        let region = ConfidenceRegion::new(&gram, &[0.3, 0.3, 0.4], 10.0).unwrap();
        assert!((region.max_linear(&[1.0, 5.0, 2.0]) - 5.0).abs() < 1e-12);
    }
}
