//! Regularized log-likelihood of observed transitions, its constrained maximizer, the
//! Gram matrix of observed features, and the Follow-the-Leader gap of running MLEs.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::LinearMdp;
use crate::optim::{projected_gradient_ascent, AscentOptions, Evaluation, Objective};
use crate::simplex::{dot, ParamVector};

pub use crate::simplex::project_simplex;

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_MLE_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MLE_MAX_ITERS: usize = 10_000;

/// Inner products at or below this value make the log-likelihood undefined.
const INNER_PRODUCT_FLOOR: f64 = 1e-300;

/// One observed transition with its cached feature `phi(s_{i+1}|s_i,a_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub feature: Vec<f64>,
}

/// Append-only sequence of observed transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionHistory {
    dim: usize,
    records: Vec<Transition>,
}

impl TransitionHistory {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            records: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Transition] {
        &self.records
    }

    pub fn push(&mut self, mdp: &LinearMdp, state: usize, action: usize, next_state: usize) {
        self.records.push(Transition {
            state,
            action,
            next_state,
            feature: mdp.phi(state, action, next_state).to_vec(),
        });
    }

    /// Appends a record with an explicit feature vector.
    pub fn push_raw(&mut self, state: usize, action: usize, next_state: usize, feature: Vec<f64>) -> Result<()> {
        if feature.len() != self.dim {
            return Err(Error::InvalidDimension(format!(
                "feature has dimension {}, history expects {}",
                feature.len(),
                self.dim
            )));
        }
        self.records.push(Transition {
            state,
            action,
            next_state,
            feature,
        });
        Ok(())
    }

    /// The first `n` records.
    pub fn prefix(&self, n: usize) -> TransitionHistory {
        TransitionHistory {
            dim: self.dim,
            records: self.records[..n.min(self.records.len())].to_vec(),
        }
    }

    /// Writes `t,s,a,s_next` rows, `t` starting at 1.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["t", "s", "a", "s_next"]).map_err(|e| Error::csv(path, e))?;
        for (i, r) in self.records.iter().enumerate() {
            w.write_record(&[
                (i + 1).to_string(),
                r.state.to_string(),
                r.action.to_string(),
                r.next_state.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads rows written by [`TransitionHistory::write_csv`], re-deriving features from `mdp`.
    pub fn read_csv(path: &Path, mdp: &LinearMdp) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let mut history = TransitionHistory::new(mdp.dim());
        for (i, row) in r.deserialize::<HistoryRow>().enumerate() {
            let row = row.map_err(|e| Error::csv(path, e))?;
            if row.t != i + 1 {
                return Err(Error::Format(format!("{}: expected t = {}, found {}", path.display(), i + 1, row.t)));
            }
            if row.s >= mdp.num_states() || row.s_next >= mdp.num_states() || row.a >= mdp.num_actions() {
                return Err(Error::Format(format!("{}: row {} is out of range", path.display(), row.t)));
            }
            history.push(mdp, row.s, row.a, row.s_next);
        }
        Ok(history)
    }
}

#[derive(Debug, Deserialize)]
struct HistoryRow {
    t: usize,
    s: usize,
    a: usize,
    s_next: usize,
}

/// Sign applied to `(lambda/2) ||theta||^2` in the log-likelihood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerSign {
    /// `- (lambda/2) ||theta||^2`: the objective is concave.
    #[default]
    Negative,
    /// `+ (lambda/2) ||theta||^2`.
    Positive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub lambda: f64,
    #[serde(default)]
    pub sign: RegularizerSign,
}

impl Regularizer {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            sign: RegularizerSign::Negative,
        }
    }

    pub fn none() -> Self {
        Self::new(0.0)
    }

    fn coefficient(&self) -> f64 {
        match self.sign {
            RegularizerSign::Negative => -0.5 * self.lambda,
            RegularizerSign::Positive => 0.5 * self.lambda,
        }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.coefficient() * dot(theta, theta)
    }

    fn add_gradient(&self, theta: &[f64], gradient: &mut [f64]) {
        let c = 2.0 * self.coefficient();
        for (g, t) in gradient.iter_mut().zip(theta) {
            *g += c * t;
        }
    }
}

impl Default for Regularizer {
    fn default() -> Self {
        Self::new(DEFAULT_LAMBDA)
    }
}

fn inner_product(feature: &[f64], theta: &[f64], record: usize) -> Result<f64> {
    let ip = dot(feature, theta);
    if ip <= INNER_PRODUCT_FLOOR {
        return Err(Error::Domain { record, value: ip });
    }
    Ok(ip)
}

/// `sum_i log <phi_i, theta> -/+ (lambda/2) ||theta||^2`.
pub fn log_likelihood(history: &TransitionHistory, theta: &[f64], reg: Regularizer) -> Result<f64> {
    let mut total = 0.0;
    for (i, r) in history.records.iter().enumerate() {
        total += inner_product(&r.feature, theta, i)?.ln();
    }
    Ok(total + reg.value(theta))
}

/// `sum_i phi_i / <phi_i, theta> -/+ lambda theta`.
pub fn log_likelihood_gradient(history: &TransitionHistory, theta: &[f64], reg: Regularizer) -> Result<Vec<f64>> {
    let mut g = vec![0.0; theta.len()];
    for (i, r) in history.records.iter().enumerate() {
        let ip = inner_product(&r.feature, theta, i)?;
        for (gk, fk) in g.iter_mut().zip(&r.feature) {
            *gk += fk / ip;
        }
    }
    reg.add_gradient(theta, &mut g);
    Ok(g)
}

/// Log-likelihood terms grouped by distinct transition, so evaluation cost does not grow with `t`.
#[derive(Clone, Debug, Default)]
pub struct LikelihoodTerms {
    index: HashMap<(usize, usize, usize), usize>,
    features: Vec<Vec<f64>>,
    counts: Vec<f64>,
}

impl LikelihoodTerms {
    pub fn from_history(history: &TransitionHistory) -> Self {
        let mut terms = Self::default();
        for r in history.records() {
            terms.push(r);
        }
        terms
    }

    pub fn push(&mut self, r: &Transition) {
        let key = (r.state, r.action, r.next_state);
        match self.index.get(&key) {
            Some(&i) if self.features[i] == r.feature => self.counts[i] += 1.0,
            _ => {
                // a raw record may reuse a key with a different feature; keep it separate
                let i = self.features.len();
                self.index.entry(key).or_insert(i);
                self.features.push(r.feature.clone());
                self.counts.push(1.0);
            }
        }
    }

    pub fn total_count(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Log-likelihood and gradient, or `None` if some observed transition has probability zero.
    pub fn evaluate(&self, theta: &[f64], reg: Regularizer) -> Option<Evaluation> {
        let mut value = 0.0;
        let mut gradient = vec![0.0; theta.len()];
        for (f, c) in self.features.iter().zip(&self.counts) {
            let ip = dot(f, theta);
            if ip <= INNER_PRODUCT_FLOOR {
                return None;
            }
            value += c * ip.ln();
            let w = c / ip;
            for (g, fk) in gradient.iter_mut().zip(f) {
                *g += w * fk;
            }
        }
        value += reg.value(theta);
        reg.add_gradient(theta, &mut gradient);
        Some(Evaluation {
            value,
            gradient,
            extra: 0.0,
        })
    }

    /// `l(y) - l(x)` without cancellation.
    pub fn increase(&self, x: &[f64], y: &[f64], reg: Regularizer) -> f64 {
        let mut gain = 0.0;
        for (f, c) in self.features.iter().zip(&self.counts) {
            let ipx = dot(f, x);
            let diff: f64 = f.iter().zip(x.iter().zip(y)).map(|(fk, (a, b))| fk * (b - a)).sum();
            gain += c * (diff / ipx).ln_1p();
        }
        let quad: f64 = x.iter().zip(y).map(|(a, b)| (b - a) * (b + a)).sum();
        gain + reg.coefficient() * quad
    }
}

struct LikelihoodObjective<'a> {
    terms: &'a LikelihoodTerms,
    reg: Regularizer,
}

impl Objective for LikelihoodObjective<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Option<Evaluation>> {
        Ok(self.terms.evaluate(x, self.reg))
    }

    fn increase(&mut self, x: &[f64], _fx: &Evaluation, y: &[f64], _fy: &Evaluation) -> f64 {
        self.terms.increase(x, y, self.reg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_MLE_TOLERANCE,
            max_iters: DEFAULT_MLE_MAX_ITERS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MleSolution {
    pub theta: ParamVector,
    pub objective: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Maximizer of the regularized log-likelihood over the simplex by projected gradient ascent.
pub fn solve_mle(
    history: &TransitionHistory,
    reg: Regularizer,
    warm_start: &ParamVector,
    options: MleOptions,
) -> Result<MleSolution> {
    solve_mle_terms(&LikelihoodTerms::from_history(history), reg, warm_start, options)
}

pub fn solve_mle_terms(
    terms: &LikelihoodTerms,
    reg: Regularizer,
    warm_start: &ParamVector,
    options: MleOptions,
) -> Result<MleSolution> {
    let start = feasible_start(terms, reg, warm_start)?;
    let mut objective = LikelihoodObjective { terms, reg };
    let ascent = AscentOptions {
        tolerance: options.tolerance,
        max_iters: options.max_iters,
        ..AscentOptions::default()
    };
    let out = projected_gradient_ascent(&mut objective, &start, &ascent)?;
    if !out.converged {
        return Err(Error::NonConvergence {
            what: "maximum-likelihood ascent",
            iterations: out.iterations,
            residual: out.residual,
        });
    }
    Ok(MleSolution {
        theta: out.point,
        objective: out.value,
        iterations: out.iterations,
        residual: out.residual,
    })
}

/// `warm_start` if every observed transition has positive probability there, else the
/// simplex barycenter.
pub(crate) fn feasible_start(terms: &LikelihoodTerms, reg: Regularizer, warm_start: &ParamVector) -> Result<ParamVector> {
    if terms.evaluate(warm_start.as_slice(), reg).is_some() {
        return Ok(warm_start.clone());
    }
    let uniform = ParamVector::uniform(warm_start.dim());
    if terms.evaluate(uniform.as_slice(), reg).is_some() {
        return Ok(uniform);
    }
    let bad = terms
        .features
        .iter()
        .position(|f| dot(f, uniform.as_slice()) <= INNER_PRODUCT_FLOOR)
        .unwrap_or(0);
    Err(Error::Domain {
        record: bad,
        value: 0.0,
    })
}

/// `A = sum_i phi_i phi_i^T + lambda I` with its inverse maintained by rank-one updates.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    lambda: f64,
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl GramMatrix {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
        }
        Ok(Self {
            lambda,
            matrix: DMatrix::identity(dim, dim) * lambda,
            inverse: DMatrix::identity(dim, dim) / lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Adds `x x^T` (Sherman-Morrison update of the inverse).
    pub fn update(&mut self, x: &[f64]) {
        let v = DVector::from_column_slice(x);
        self.matrix += &v * v.transpose();
        let u = &self.inverse * &v;
        let denom = 1.0 + v.dot(&u);
        self.inverse -= (&u * u.transpose()) / denom;
    }

    /// `x^T A^{-1} x`.
    pub fn inverse_norm_sq(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        v.dot(&(&self.inverse * &v))
    }

    /// `x^T A x`.
    pub fn norm_sq(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        v.dot(&(&self.matrix * &v))
    }

    /// `A^{-1} b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        (&self.inverse * DVector::from_column_slice(b)).iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn gram_matrix(history: &TransitionHistory, lambda: f64) -> Result<GramMatrix> {
    let mut g = GramMatrix::new(history.dim(), lambda)?;
    for r in history.records() {
        g.update(&r.feature);
    }
    Ok(g)
}

/// Running maximum-likelihood estimates for every prefix of a history.
///
/// `prefix_solutions[k]` maximizes the likelihood of the first `k` records, i.e. it is the
/// estimate available at step `t = k + 1`. `initial` is the estimate before any step and
/// defaults to `prefix_solutions[0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MleTrace {
    pub initial: ParamVector,
    pub prefix_solutions: Vec<ParamVector>,
}

impl MleTrace {
    /// Solves every prefix `0..=history.len()`, warm-starting each from the previous one.
    pub fn compute(history: &TransitionHistory, reg: Regularizer, start: &ParamVector, options: MleOptions) -> Result<Self> {
        let mut terms = LikelihoodTerms::default();
        let mut solutions = Vec::with_capacity(history.len() + 1);
        let mut current = solve_mle_terms(&terms, reg, start, options)?.theta;
        solutions.push(current.clone());
        for r in history.records() {
            terms.push(r);
            current = solve_mle_terms(&terms, reg, &current, options)?.theta;
            solutions.push(current.clone());
        }
        Ok(Self {
            initial: solutions[0].clone(),
            prefix_solutions: solutions,
        })
    }

    /// Estimate at step `t` (uses `t - 1` records); `t = 0` gives `initial`.
    pub fn at_step(&self, t: usize) -> &ParamVector {
        if t == 0 {
            &self.initial
        } else {
            &self.prefix_solutions[t - 1]
        }
    }

    /// Steps covered: `1..=max_step()`.
    pub fn max_step(&self) -> usize {
        self.prefix_solutions.len()
    }

    /// Writes `t,theta_1..theta_d` rows for every step.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let d = self.initial.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("theta_{k}")));
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for t in 1..=self.max_step() {
            let mut row = vec![t.to_string()];
            row.extend(self.at_step(t).as_slice().iter().map(|x| format!("{x:.17e}")));
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// `Delta_t = sum_{i<t} log(<phi_i, theta_t> / <phi_i, theta_i>) + r(theta_t) - r(theta_0)`,
/// the Follow-the-Leader regret of the running estimates `theta_i` against `theta_t`.
pub fn ftl_delta(history: &TransitionHistory, trace: &MleTrace, t: usize, reg: Regularizer) -> Result<f64> {
    if t == 0 || t > trace.max_step() || t - 1 > history.len() {
        return Err(Error::InvalidArgument(format!(
            "step {t} not covered by a history of {} records and a trace of {} steps",
            history.len(),
            trace.max_step()
        )));
    }
    let final_theta = trace.at_step(t).as_slice();
    let mut delta = 0.0;
    for (i, r) in history.records()[..t - 1].iter().enumerate() {
        let num = inner_product(&r.feature, final_theta, i)?;
        let den = inner_product(&r.feature, trace.at_step(i + 1).as_slice(), i)?;
        delta += (num / den).ln();
    }
    Ok(delta + reg.value(final_theta) - reg.value(trace.initial.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::generate_mixture_mdp;
    use crate::rng::TrialRng;

    fn random_history(seed: u64, len: usize) -> (LinearMdp, TransitionHistory) {
        let mdp = generate_mixture_mdp(4, 2, 3, seed, 0.05).unwrap();
        let mut rng = TrialRng::new(seed + 100);
        let mut h = TransitionHistory::new(3);
        let mut s = 0;
        for _ in 0..len {
            let a = rng.index(2);
            let sn = mdp.sample_transition(mdp.theta_star().as_slice(), s, a, &mut rng);
            h.push(&mdp, s, a, sn);
            s = sn;
        }
        (mdp, h)
    }

    #[test]
    fn likelihood_examples() {
        let empty = TransitionHistory::new(2);
        assert_eq!(log_likelihood(&empty, &[0.5, 0.5], Regularizer::none()).unwrap(), 0.0);
        let mut h = TransitionHistory::new(2);
        h.push_raw(0, 0, 0, vec![0.5, 0.5]).unwrap();
        let l = log_likelihood(&h, &[0.5, 0.5], Regularizer::none()).unwrap();
        assert!((l - 0.5f64.ln()).abs() < 1e-15);
        let l = log_likelihood(&h, &[0.5, 0.5], Regularizer::new(1.0)).unwrap();
        assert!((l - (0.5f64.ln() - 0.25)).abs() < 1e-12);
        assert!((l + 0.943147).abs() < 1e-6);
    }

    #[test]
    fn printed_sign_flips_the_regularizer() {
        let mut h = TransitionHistory::new(2);
        h.push_raw(0, 0, 0, vec![0.5, 0.5]).unwrap();
        let reg = Regularizer { lambda: 1.0, sign: RegularizerSign::Positive };
        let l = log_likelihood(&h, &[0.5, 0.5], reg).unwrap();
        assert!((l - (0.5f64.ln() + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_a_domain_error() {
        let mut h = TransitionHistory::new(2);
        h.push_raw(0, 0, 0, vec![1.0, 0.0]).unwrap();
        let err = log_likelihood(&h, &[0.0, 1.0], Regularizer::none());
        assert!(matches!(err, Err(Error::Domain { record: 0, .. })));
        assert!(log_likelihood_gradient(&h, &[0.0, 1.0], Regularizer::none()).is_err());
    }

    #[test]
    fn gradient_examples() {
        let empty = TransitionHistory::new(2);
        let g = log_likelihood_gradient(&empty, &[1.0, 0.0], Regularizer::new(1.0)).unwrap();
        assert_eq!(g, vec![-1.0, 0.0]);
        let mut h = TransitionHistory::new(2);
        h.push_raw(0, 0, 0, vec![0.2, 0.6]).unwrap();
        let theta = [0.25, 0.75];
        let ip = 0.2 * 0.25 + 0.6 * 0.75;
        let g = log_likelihood_gradient(&h, &theta, Regularizer::none()).unwrap();
        assert!((g[0] - 0.2 / ip).abs() < 1e-15 && (g[1] - 0.6 / ip).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let (_, h) = random_history(seed, 50);
            let mut rng = TrialRng::new(seed);
            let theta: Vec<f64> = rng.simplex_point(3).iter().map(|x| 0.1 + 0.7 * x).collect();
            let reg = Regularizer::new(1.0);
            let g = log_likelihood_gradient(&h, &theta, reg).unwrap();
            let u = [0.3, 0.5, -0.8];
            let eps = 1e-6;
            let p: Vec<f64> = theta.iter().zip(&u).map(|(t, d)| t + eps * d).collect();
            let m: Vec<f64> = theta.iter().zip(&u).map(|(t, d)| t - eps * d).collect();
            let fd = (log_likelihood(&h, &p, reg).unwrap() - log_likelihood(&h, &m, reg).unwrap()) / (2.0 * eps);
            let an: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "fd {fd} analytic {an}");
        }
    }

    #[test]
    fn compressed_terms_agree_with_the_record_sum() {
        let (_, h) = random_history(4, 200);
        let terms = LikelihoodTerms::from_history(&h);
        assert_eq!(terms.total_count(), 200.0);
        let reg = Regularizer::new(1.0);
        let x = [0.2, 0.3, 0.5];
        let y = [0.25, 0.3, 0.45];
        let e = terms.evaluate(&x, reg).unwrap();
        assert!((e.value - log_likelihood(&h, &x, reg).unwrap()).abs() < 1e-9);
        let direct = log_likelihood(&h, &y, reg).unwrap() - log_likelihood(&h, &x, reg).unwrap();
        assert!((terms.increase(&x, &y, reg) - direct).abs() < 1e-9);
    }

    #[test]
    fn gram_matrix_examples() {
        let g = gram_matrix(&TransitionHistory::new(3), 1.0).unwrap();
        assert_eq!(g.matrix(), &DMatrix::<f64>::identity(3, 3));
        let mut h = TransitionHistory::new(2);
        h.push_raw(0, 0, 0, vec![1.0, 0.0]).unwrap();
        let g = gram_matrix(&h, 1.0).unwrap();
        assert_eq!(g.matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        assert!(GramMatrix::new(2, 0.0).is_err());
    }

    #[test]
    fn incremental_inverse_matches_direct_inversion() {
        let (_, h) = random_history(9, 100);
        let g = gram_matrix(&h, 1.0).unwrap();
        let direct = g.matrix().clone().try_inverse().unwrap();
        let dev = (g.inverse() - &direct).abs().max();
        assert!(dev <= 1e-8, "deviation {dev}");
        let id = g.matrix() * g.inverse();
        assert!((id - DMatrix::<f64>::identity(3, 3)).abs().max() <= 1e-8);
        assert!(g.min_eigenvalue() >= 1.0 - 1e-10);
    }

    #[test]
    fn empty_history_without_regularizer_keeps_the_warm_start() {
        let start = ParamVector::new(vec![0.1, 0.2, 0.7]).unwrap();
        let sol = solve_mle(&TransitionHistory::new(3), Regularizer::none(), &start, MleOptions::default()).unwrap();
        assert_eq!(sol.theta, start);
    }

    #[test]
    fn deterministic_kernel_wins_by_grid_search() {
        // kernel 1 gives every observed transition probability 1, kernel 2 gives 0.5
        let mut h = TransitionHistory::new(2);
        for i in 0..30 {
            h.push_raw(i % 2, 0, (i + 1) % 2, vec![1.0, 0.5]).unwrap();
        }
        let sol = solve_mle(&h, Regularizer::none(), &ParamVector::uniform(2), MleOptions::default()).unwrap();
        // grid oracle over the 2-simplex at resolution 1e-4
        let best = (0..=10_000)
            .map(|i| i as f64 / 10_000.0)
            .map(|w| (w, log_likelihood(&h, &[w, 1.0 - w], Regularizer::none()).unwrap()))
            .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((best.0 - 1.0).abs() < 1e-12);
        assert!((sol.theta.as_slice()[0] - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn mle_satisfies_kkt_and_beats_random_points() {
        for seed in 0..5 {
            let (_, h) = random_history(seed, 80);
            let reg = Regularizer::new(1.0);
            let opts = MleOptions::default();
            let sol = solve_mle(&h, reg, &ParamVector::uniform(3), opts).unwrap();
            let g = log_likelihood_gradient(&h, sol.theta.as_slice(), reg).unwrap();
            // independent KKT residual: unit projected-gradient step
            let moved: Vec<f64> = sol.theta.as_slice().iter().zip(&g).map(|(a, b)| a + b).collect();
            let kkt = project_simplex(&moved).sq_distance(&sol.theta).sqrt();
            assert!(kkt <= 10.0 * opts.tolerance, "kkt residual {kkt}");
            let best = log_likelihood(&h, sol.theta.as_slice(), reg).unwrap();
            let mut rng = TrialRng::new(seed + 1);
            for _ in 0..1000 {
                let p = rng.simplex_point(3);
                assert!(best >= log_likelihood(&h, &p, reg).unwrap() - 1e-6);
            }
        }
    }

    #[test]
    fn ftl_delta_edge_cases_and_monotone_running_maximum() {
        let (_, h) = random_history(3, 20);
        let reg = Regularizer::new(1.0);
        let trace = MleTrace::compute(&h, reg, &ParamVector::uniform(3), MleOptions::default()).unwrap();
        assert_eq!(ftl_delta(&h, &trace, 1, reg).unwrap(), 0.0);
        for t in 1..=trace.max_step() {
            assert!(ftl_delta(&h, &trace, t, reg).unwrap() >= -1e-9);
        }
        // z_t = l_t(theta_t) - l_t(theta_{t-1}) >= 0
        for t in 2..=trace.max_step() {
            let prefix = h.prefix(t - 1);
            let now = log_likelihood(&prefix, trace.at_step(t).as_slice(), reg).unwrap();
            let before = log_likelihood(&prefix, trace.at_step(t - 1).as_slice(), reg).unwrap();
            assert!(now >= before - 1e-9);
        }
        // identical running estimates: only the regularizer difference remains
        let same = MleTrace {
            initial: ParamVector::uniform(3),
            prefix_solutions: vec![ParamVector::new(vec![0.2, 0.3, 0.5]).unwrap(); 21],
        };
        let d = ftl_delta(&h, &same, 21, Regularizer::none()).unwrap();
        assert_eq!(d, 0.0);
        let d = ftl_delta(&h, &same, 21, reg).unwrap();
        assert!((d - (reg.value(&[0.2, 0.3, 0.5]) - reg.value(ParamVector::uniform(3).as_slice()))).abs() < 1e-15);
    }

    #[test]
    fn history_csv_round_trip() {
        let (mdp, h) = random_history(5, 30);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        h.write_csv(&path).unwrap();
        let back = TransitionHistory::read_csv(&path, &mdp).unwrap();
        assert_eq!(back, h);
    }
}
