//! Points on the probability simplex and Euclidean projection onto it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking simplex membership.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A mixing-weight vector on the `d`-simplex: nonnegative coordinates that sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Wraps `weights`, checking simplex membership within [`SIMPLEX_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension("parameter vector is empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < -SIMPLEX_TOL) {
            return Err(Error::InvalidArgument(format!(
                "parameter has a negative or non-finite coordinate: {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!(
                "parameter coordinates sum to {total}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    /// Wraps a vector already known to lie on the simplex (e.g. a projection output).
    pub(crate) fn from_projected(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn uniform(dim: usize) -> Self {
        Self(vec![1.0 / dim as f64; dim])
    }

    pub fn vertex(dim: usize, k: usize) -> Self {
        let mut w = vec![0.0; dim];
        w[k] = 1.0;
        Self(w)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn sq_distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean projection of `v` onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> ParamVector {
    let n = v.len();
    assert!(n > 0, "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - tau).max(0.0)).collect();
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|x| *x /= total);
    } else {
        out = vec![1.0 / n as f64; n];
    }
    ParamVector(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
