//! Projected gradient ascent over the probability simplex with Armijo backtracking.

use crate::error::{Error, Result};
use crate::simplex::{dot, project_simplex, ParamVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AscentOptions {
    /// Stop when `||P(x + grad) - x|| <= tolerance`.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Trial step of the first iteration; later iterations start from a Barzilai-Borwein step.
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_increase: f64,
    pub max_backtracks: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iters: 10_000,
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_increase: 1e-4,
            max_backtracks: 80,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Objective-specific side value carried along with the evaluation.
    pub extra: f64,
}

pub trait Objective {
    /// `None` when `x` lies outside the objective's domain (value `-inf`).
    fn evaluate(&mut self, x: &[f64]) -> Result<Option<Evaluation>>;

    /// `f(y) - f(x)`. Override when a cancellation-free form exists.
    fn increase(&mut self, _x: &[f64], fx: &Evaluation, _y: &[f64], fy: &Evaluation) -> f64 {
        fy.value - fx.value
    }
}

#[derive(Clone, Debug)]
pub struct AscentOutcome {
    pub point: ParamVector,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Projected-gradient residual at `point`.
    pub residual: f64,
    /// Objective value after every accepted step, starting with the start point.
    pub trace: Vec<f64>,
}

/// `||P(x + g) - x||`.
pub fn projected_gradient_residual(x: &[f64], gradient: &[f64]) -> f64 {
    let moved: Vec<f64> = x.iter().zip(gradient).map(|(a, g)| a + g).collect();
    let p = project_simplex(&moved);
    p.as_slice()
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

type Step = (Vec<f64>, Evaluation, Vec<f64>);

fn residual_decrease_step<O: Objective + ?Sized>(
    objective: &mut O,
    x: &[f64],
    fx: &Evaluation,
    residual: f64,
    mut step: f64,
    options: &AscentOptions,
) -> Result<Option<Step>> {
    for _ in 0..options.max_backtracks {
        let moved: Vec<f64> = x.iter().zip(&fx.gradient).map(|(a, g)| a + step * g).collect();
        let y = project_simplex(&moved).into_inner();
        let dir: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        if dir.iter().all(|d| *d == 0.0) {
            return Ok(None);
        }
        if let Some(fy) = objective.evaluate(&y)? {
            if projected_gradient_residual(&y, &fy.gradient) < residual {
                return Ok(Some((y, fy, dir)));
            }
        }
        step *= options.shrink;
    }
    Ok(None)
}

pub fn projected_gradient_ascent<O: Objective + ?Sized>(
    objective: &mut O,
    start: &ParamVector,
    options: &AscentOptions,
) -> Result<AscentOutcome> {
    let mut x = start.as_slice().to_vec();
    let mut fx = objective.evaluate(&x)?.ok_or(Error::InvalidArgument(
        "ascent start point lies outside the objective's domain".into(),
    ))?;
    let mut step = options.initial_step;
    let mut trace = vec![fx.value];
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = projected_gradient_residual(&x, &fx.gradient);

    while iterations < options.max_iters {
        if residual <= options.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let iteration_step = step;
        let mut accepted = None;
        for _ in 0..options.max_backtracks {
            let moved: Vec<f64> = x.iter().zip(&fx.gradient).map(|(a, g)| a + step * g).collect();
            let y = project_simplex(&moved).into_inner();
            let dir: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            let predicted = dot(&fx.gradient, &dir);
            if predicted <= 0.0 {
                break;
            }
            if let Some(fy) = objective.evaluate(&y)? {
                let gain = objective.increase(&x, &fx, &y, &fy);
                if gain >= options.sufficient_increase * predicted {
                    accepted = Some((y, fy, dir));
                    break;
                }
            }
            step *= options.shrink;
        }
        if accepted.is_none() {
            // value differences are at rounding level; fall back to residual decrease
            accepted = residual_decrease_step(objective, &x, &fx, residual, iteration_step, options)?;
        }
        let Some((y, fy, dir)) = accepted else {
            break;
        };
        let dg: Vec<f64> = fy.gradient.iter().zip(&fx.gradient).map(|(a, b)| a - b).collect();
        let curvature = -dot(&dir, &dg);
        step = if curvature > 0.0 {
            (dot(&dir, &dir) / curvature).clamp(1e-12, 1e12)
        } else {
            (step * 2.0).min(1e12)
        };
        x = y;
        fx = fy;
        trace.push(fx.value);
        residual = projected_gradient_residual(&x, &fx.gradient);
    }
    if residual <= options.tolerance {
        converged = true;
    }
    Ok(AscentOutcome {
        point: ParamVector::from_projected(x),
        value: fx.value,
        iterations,
        converged,
        residual,
        trace,
    })
}
