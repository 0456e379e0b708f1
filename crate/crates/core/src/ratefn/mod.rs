//! Numerical evaluation of the path-space rate functional: per-time concave
//! maximisations over slow and fast tilts, the dual (non-variational)
//! representation through edgewise flux perturbations, path quadrature, and
//! the contraction to the empirical-measure marginal.

mod local;
mod marginal;
mod newton;
mod path;

pub use local::{
    fast_objective, local_fast_rate, local_slow_rate, slow_objective, solve_fast_problem,
    solve_slow_problem, FastSolution, SlowSolution, ITERATE_NORM_CAP,
};
pub use marginal::{marginal_local_rate, MarginalRateSolution};
pub use path::{path_rate, path_rate_with, velocities, write_optimizer_csv, PathRateReport, StepRate};

use crate::averaging::averaged_rates;
use crate::error::{Error, Result};
use crate::kernel::tau_star;
use crate::model::ModelSpec;
use crate::simplex::{SimplexVector, ToleranceConfig};

/// A point on the path: position, velocity (tangent to the simplex) and
/// occupation density.
#[derive(Debug, Clone)]
pub struct LocalRateInput {
    pub mu: SimplexVector,
    pub mu_dot: Vec<f64>,
    pub m: SimplexVector,
}

impl LocalRateInput {
    pub fn new(mu: SimplexVector, mu_dot: Vec<f64>, m: SimplexVector) -> Result<Self> {
        if mu_dot.len() != mu.dim() {
            return Err(Error::Invalid("velocity dimension mismatch".into()));
        }
        let total: f64 = mu_dot.iter().sum();
        if total.abs() > 1e-10 {
            return Err(Error::Invalid(format!(
                "velocity must be tangent to the simplex (sum {total:e})"
            )));
        }
        Ok(Self { mu, mu_dot, m })
    }
}

/// Joint outcome of the two local maximisations at one path point.
#[derive(Debug, Clone)]
pub struct LocalRateSolution {
    pub slow_value: f64,
    pub fast_value: f64,
    pub alpha_hat: Vec<f64>,
    pub g_hat: Vec<f64>,
    pub h_slow: Vec<f64>,
    pub h_fast: Vec<f64>,
    pub residual_slow: f64,
    pub residual_fast: f64,
    pub diverged_slow: bool,
    pub diverged_fast: bool,
}

/// Solves both local problems at `input`.
pub fn local_rate(
    model: &ModelSpec,
    input: &LocalRateInput,
    tol: &ToleranceConfig,
) -> Result<LocalRateSolution> {
    let slow = local_slow_rate(model, &input.mu, &input.mu_dot, &input.m, tol, None)?;
    let fast = local_fast_rate(model, &input.mu, &input.m, tol, None)?;
    Ok(LocalRateSolution {
        slow_value: slow.value,
        fast_value: fast.value,
        alpha_hat: slow.alpha_hat,
        g_hat: fast.g_hat,
        h_slow: slow.h,
        h_fast: fast.h,
        residual_slow: slow.residual,
        residual_fast: fast.residual,
        diverged_slow: slow.diverged,
        diverged_fast: fast.diverged,
    })
}

/// Gap between each variational value and its dual form
/// `sum_e tau*(h_e) * weight_e`. At a converged optimum both vanish to
/// solver precision.
pub fn nonvariational_identity(
    model: &ModelSpec,
    input: &LocalRateInput,
    solution: &LocalRateSolution,
) -> (f64, f64) {
    let rates = averaged_rates(model, &input.mu, &input.m);
    let slow_dual: f64 = model
        .slow_graph()
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(x, _))| {
            let w = rates[e] * input.mu.get(x);
            if w > 0.0 {
                tau_star(solution.h_slow[e]) * w
            } else {
                0.0
            }
        })
        .sum();
    let fast_dual: f64 = model
        .fast_graph()
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(y, _))| {
            let c = model.fast_rate(e, &input.mu) * input.m.get(y);
            if c > 0.0 {
                tau_star(solution.h_fast[e]) * c
            } else {
                0.0
            }
        })
        .sum();
    let gap_slow = if solution.slow_value.is_finite() {
        (solution.slow_value - slow_dual).abs()
    } else {
        f64::INFINITY
    };
    let gap_fast = (solution.fast_value - fast_dual).abs();
    (gap_slow, gap_fast)
}

/// Rate of the initial condition.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    /// Deterministic start: zero at the given point, infinite elsewhere.
    Deterministic(SimplexVector),
    /// Particles sampled independently from `p`: relative entropy of the
    /// queried point with respect to `p`.
    Sanov(SimplexVector),
}

pub fn initial_rate(spec: &InitialCondition, nu: &SimplexVector) -> f64 {
    match spec {
        InitialCondition::Deterministic(nu0) => {
            if nu.dim() == nu0.dim() && nu.sup_distance(nu0) <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        }
        InitialCondition::Sanov(p) => {
            let mut total = 0.0;
            for (w, q) in nu.as_slice().iter().zip(p.as_slice()) {
                if *w == 0.0 {
                    continue;
                }
                if *q == 0.0 {
                    return f64::INFINITY;
                }
                total += w * (w / q).ln();
            }
            total
        }
    }
}
