//! Exponential tilts and the stochastic-exponential functionals along sample
//! paths. For a constant tilt `(alpha, g)` the weight `exp(N U_T + V_T)` is
//! the exact likelihood ratio between the tilted and the original path laws,
//! so its mean over the original dynamics is 1; the martingale battery in
//! [`crate::probe`] tests exactly that.

use super::SimulationPath;
use crate::error::{Error, Result};
use crate::kernel::tau;
use crate::model::ModelSpec;
use crate::simplex::SimplexVector;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Constant log-tilts of the slow and fast rates. Only differences along
/// edges matter, so both vectors are gauge-fixed to zero at state 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltSpec {
    pub alpha: Vec<f64>,
    pub g: Vec<f64>,
}

impl TiltSpec {
    pub fn new(mut alpha: Vec<f64>, mut g: Vec<f64>) -> Result<Self> {
        if alpha.iter().chain(&g).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("tilt entries must be finite".into()));
        }
        if let Some(&a0) = alpha.first() {
            for a in &mut alpha {
                *a -= a0;
            }
        }
        if let Some(&g0) = g.first() {
            for v in &mut g {
                *v -= g0;
            }
        }
        Ok(Self { alpha, g })
    }

    pub fn zero(nx: usize, ny: usize) -> Self {
        Self {
            alpha: vec![0.0; nx],
            g: vec![0.0; ny],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.alpha
            .iter()
            .chain(&self.g)
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Which compensator to integrate in `U`. The broken variant drops the
/// convex (tau) term of the slow compensator and serves as a negative
/// control: with it the exponential weight is no longer a martingale and the
/// battery must flag it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compensator {
    Exact,
    DropSlowTau,
}

/// The model with rates multiplied by `exp` of the tilt differences:
/// `lambda' = lambda e^{alpha(x') - alpha(x)}`, `gamma' = gamma e^{g(y') - g(y)}`.
pub fn tilted_model(model: &ModelSpec, tilt: &TiltSpec) -> Result<ModelSpec> {
    if tilt.alpha.len() != model.n_slow_states() || tilt.g.len() != model.n_fast_states() {
        return Err(Error::Invalid(format!(
            "tilt dimensions ({}, {}) do not match the model ({}, {})",
            tilt.alpha.len(),
            tilt.g.len(),
            model.n_slow_states(),
            model.n_fast_states()
        )));
    }
    let slow_factors: Vec<f64> = model
        .slow_graph()
        .edges()
        .iter()
        .map(|&(x, xp)| (tilt.alpha[xp] - tilt.alpha[x]).exp())
        .collect();
    let fast_factors: Vec<f64> = model
        .fast_graph()
        .edges()
        .iter()
        .map(|&(y, yp)| (tilt.g[yp] - tilt.g[y]).exp())
        .collect();

    let inner = model.clone();
    let inner2 = model.clone();
    let slow_rate = move |e: usize, xi: &SimplexVector, y: usize| -> f64 {
        inner.slow_rate(e, xi, y) * slow_factors[e]
    };
    let fast_rate = move |e: usize, xi: &SimplexVector| -> f64 {
        inner2.fast_rate(e, xi) * fast_factors[e]
    };

    Ok(ModelSpec::new(
        format!("{}+tilt", model.name),
        model.slow_graph().clone(),
        model.fast_graph().clone(),
        Arc::new(slow_rate),
        Arc::new(fast_rate),
    ))
}

/// The stochastic-exponential functionals `(U_T, V_T)` of a sample path for
/// a constant tilt, computed exactly: the jump part of `U` is the sum of
/// tilt differences over slow jumps divided by `N`, and every time integral
/// is a finite sum over the piecewise-constant segments. With a
/// measure-independent `g` the finite-difference terms of `V` vanish and
/// `V_T = g(Y_T) - g(Y_0)`.
pub fn path_functionals_uv(
    model: &ModelSpec,
    path: &SimulationPath,
    tilt: &TiltSpec,
) -> Result<(f64, f64)> {
    path_functionals_uv_with(model, path, tilt, Compensator::Exact)
}

/// [`path_functionals_uv`] with an explicit compensator choice.
pub fn path_functionals_uv_with(
    model: &ModelSpec,
    path: &SimulationPath,
    tilt: &TiltSpec,
    compensator: Compensator,
) -> Result<(f64, f64)> {
    let slow_graph = model.slow_graph();
    let fast_graph = model.fast_graph();
    if tilt.alpha.len() != slow_graph.n_vertices() || tilt.g.len() != fast_graph.n_vertices() {
        return Err(Error::Invalid("tilt dimensions do not match the model".into()));
    }

    let d_alpha: Vec<f64> = slow_graph
        .edges()
        .iter()
        .map(|&(x, xp)| tilt.alpha[xp] - tilt.alpha[x])
        .collect();
    let tau_alpha: Vec<f64> = d_alpha.iter().map(|&d| tau(d)).collect();
    let d_g: Vec<f64> = fast_graph
        .edges()
        .iter()
        .map(|&(y, yp)| tilt.g[yp] - tilt.g[y])
        .collect();
    let tau_g: Vec<f64> = d_g.iter().map(|&d| tau(d)).collect();

    let n = path.n as f64;
    let mut jump_sum = 0.0f64;
    let mut integral = 0.0f64;

    let mut cur = path.cursor();
    let mut idx = 0usize;
    loop {
        let (t0, t1, counts, env) = cur.segment();
        let dt = t1 - t0;
        if dt > 0.0 {
            let xi = SimplexVector::unchecked(counts.iter().map(|&c| c as f64 / n).collect());
            let mut rate_sum = 0.0f64;
            for (e, &(x, _)) in slow_graph.edges().iter().enumerate() {
                if counts[x] == 0 {
                    continue;
                }
                let lam = model.slow_rate(e, &xi, env) * xi.get(x);
                let tau_term = match compensator {
                    Compensator::Exact => tau_alpha[e],
                    Compensator::DropSlowTau => 0.0,
                };
                rate_sum += (d_alpha[e] + tau_term) * lam;
            }
            for &e in fast_graph.out_edges(env) {
                let gam = model.fast_rate(e, &xi);
                rate_sum += (d_g[e] + tau_g[e]) * gam;
            }
            if !rate_sum.is_finite() {
                return Err(Error::Invalid("non-finite compensator accumulation".into()));
            }
            integral += dt * rate_sum;
        }
        if !cur.advance() {
            break;
        }
        if let super::Event::Slow(e) = path.events[idx] {
            jump_sum += d_alpha[e as usize];
        }
        idx += 1;
    }

    let u_t = jump_sum / n - integral;
    let terminal = path.terminal();
    let v_t = tilt.g[terminal.env] - tilt.g[path.initial.env];
    if !u_t.is_finite() || !v_t.is_finite() {
        return Err(Error::Invalid("non-finite path functional".into()));
    }
    Ok((u_t, v_t))
}
