//! Theoretical radii and bounds, and checks of realized runs against them. All logarithms
//! are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{ftl_delta, GramMatrix, MleTrace, Regularizer, TransitionHistory};
use crate::planning::ValueFunction;
use crate::simplex::{dot, ParamVector};

/// Reports with `slack >= -SLACK_TOL` count as satisfied.
pub const SLACK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    EllipticalPotential,
    FtlDelta,
    ValueBound,
    MleEllipsoid,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::EllipticalPotential => "elliptical_potential",
            BoundKind::FtlDelta => "ftl_delta",
            BoundKind::ValueBound => "value_bound",
            BoundKind::MleEllipsoid => "mle_ellipsoid",
        }
    }

    /// Whether the inequality holds on every run rather than with high probability.
    pub fn is_deterministic(self) -> bool {
        !matches!(self, BoundKind::MleEllipsoid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub t: usize,
    pub realized: f64,
    pub bound: f64,
    pub satisfied: bool,
    /// `bound - realized`.
    pub slack: f64,
}

impl BoundReport {
    pub fn new(kind: BoundKind, t: usize, realized: f64, bound: f64) -> Self {
        let slack = bound - realized;
        Self {
            kind,
            t,
            realized,
            bound,
            satisfied: slack >= -SLACK_TOL,
            slack,
        }
    }
}

/// Constants shared by the radius formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub dim: usize,
    pub lambda: f64,
    /// Bound on `||phi(s'|s,a)||_2`.
    pub feature_norm: f64,
    /// Smallest nonzero transition probability.
    pub p_min: f64,
    pub delta: f64,
}

fn log_ratio(d: usize, lambda: f64, n: f64, l: f64) -> f64 {
    let d = d as f64;
    ((d * lambda + n * l * l) / d).ln()
}

fn coefficient(c: f64, d: usize, p_min: f64) -> f64 {
    c * (d * d) as f64 / (p_min * p_min)
}

/// `beta_t = (37 d^2 / p_min^2) log((d lambda + t L^2) / d) log(1/delta)`.
pub fn beta_t(d: usize, lambda: f64, t: usize, l: f64, p_min: f64, delta: f64) -> f64 {
    coefficient(37.0, d, p_min) * log_ratio(d, lambda, t as f64, l) * (1.0 / delta).ln()
}

/// `beta'_t = (22 d^2 / p_min^2) log((d lambda + t L^2) / d) max{1, log(1/delta)}`.
pub fn beta_prime_t(d: usize, lambda: f64, t: usize, l: f64, p_min: f64, delta: f64) -> f64 {
    coefficient(22.0, d, p_min) * log_ratio(d, lambda, t as f64, l) * (1.0 / delta).ln().max(1.0)
}

/// `(8 d^2 / p_min^2) log((d lambda + (t-1) L^2) / d)`.
pub fn delta_bound(d: usize, lambda: f64, t: usize, l: f64, p_min: f64) -> f64 {
    coefficient(8.0, d, p_min) * log_ratio(d, lambda, t.saturating_sub(1) as f64, l)
}

/// `sum_i ||phi_i||^2_{A_i^{-1}}` with `A_i = lambda I + sum_{j<i} phi_j phi_j^T`, against
/// `2 d log((d lambda + T L^2) / d)`.
pub fn elliptical_potential_check(history: &TransitionHistory, lambda: f64, l: f64, d: usize) -> Result<BoundReport> {
    let mut gram = GramMatrix::new(history.dim(), lambda)?;
    let mut total = 0.0;
    for r in history.records() {
        total += gram.inverse_norm_sq(&r.feature);
        gram.update(&r.feature);
    }
    let n = history.len();
    let bound = 2.0 * d as f64 * log_ratio(d, lambda, n as f64, l);
    Ok(BoundReport::new(BoundKind::EllipticalPotential, n, total, bound))
}

/// `Delta_t` of the running estimates against its bound at each checkpoint `t`
/// (`t - 1` records).
pub fn ftl_delta_reports(
    history: &TransitionHistory,
    trace: &MleTrace,
    reg: Regularizer,
    params: &BoundParams,
    checkpoints: &[usize],
) -> Result<Vec<BoundReport>> {
    checkpoints
        .iter()
        .filter(|&&t| t >= 1 && t <= trace.max_step())
        .map(|&t| {
            let realized = ftl_delta(history, trace, t, reg)?;
            let bound = delta_bound(params.dim, params.lambda, t, params.feature_norm, params.p_min);
            Ok(BoundReport::new(BoundKind::FtlDelta, t, realized, bound))
        })
        .collect()
}

/// `(theta* - theta_t)^T A_t (theta* - theta_t)` against `beta_t`, where `theta_t` and
/// `A_t = lambda I + sum phi_i phi_i^T` both use the first `t` records.
pub fn mle_ellipsoid_report(
    theta_star: &ParamVector,
    history: &TransitionHistory,
    trace: &MleTrace,
    params: &BoundParams,
    checkpoints: &[usize],
) -> Result<Vec<BoundReport>> {
    let mut gram = GramMatrix::new(history.dim(), params.lambda)?;
    let mut reports = Vec::new();
    let mut sorted: Vec<usize> = checkpoints.iter().copied().filter(|&t| t <= history.len()).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let mut used = 0;
    for t in sorted {
        for r in &history.records()[used..t] {
            gram.update(&r.feature);
        }
        used = t;
        let estimate = trace.at_step(t + 1).as_slice();
        let diff: Vec<f64> = theta_star.as_slice().iter().zip(estimate).map(|(a, b)| a - b).collect();
        let realized = gram.norm_sq(&diff);
        let bound = beta_t(params.dim, params.lambda, t, params.feature_norm, params.p_min, params.delta);
        reports.push(BoundReport::new(BoundKind::MleEllipsoid, t, realized, bound));
    }
    Ok(reports)
}

/// `max_s V(s)` against `1 / (1 - gamma)`.
pub fn value_bound_check(value: &ValueFunction, gamma: f64) -> BoundReport {
    BoundReport::new(BoundKind::ValueBound, 0, value.max(), 1.0 / (1.0 - gamma))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupermartingalePoint {
    pub t: usize,
    pub x: f64,
    /// Sum of squared increments up to `t`.
    pub m: f64,
}

/// `X_t = l_t(theta_{t-1}) - l_t(theta*) - sum_{i<t} z_i`, `z_i = l_i(theta_i) - l_i(theta_{i-1})`,
/// where `l_t` is the regularized log-likelihood of the first `t` records and `theta_t` its
/// maximizer. The increment `X_t - X_{t-1}` is `log(<phi_t, theta_{t-1}> / <phi_t, theta*>)`,
/// whose conditional mean is minus a KL divergence. `X_0 = r(theta_0) - r(theta*)`.
pub fn supermartingale_trace(
    history: &TransitionHistory,
    trace: &MleTrace,
    theta_star: &ParamVector,
    reg: Regularizer,
) -> Result<Vec<SupermartingalePoint>> {
    if trace.max_step() < history.len() {
        return Err(Error::InvalidArgument(format!(
            "trace covers {} steps, history has {} records",
            trace.max_step(),
            history.len()
        )));
    }
    let star = theta_star.as_slice();
    let mut x = reg.value(trace.at_step(1).as_slice()) - reg.value(star);
    let mut m = 0.0;
    let mut points = Vec::with_capacity(history.len());
    for (i, r) in history.records().iter().enumerate() {
        // estimate from the first i records
        let est = trace.at_step(i + 1).as_slice();
        let num = dot(&r.feature, est);
        let den = dot(&r.feature, star);
        if !(num > 0.0 && den > 0.0) {
            return Err(Error::Domain {
                record: i,
                value: num.min(den),
            });
        }
        let inc = (num / den).ln();
        x += inc;
        m += inc * inc;
        points.push(SupermartingalePoint { t: i + 1, x, m });
    }
    Ok(points)
}
