//! Probability vectors over a finite state set, and the numeric tolerances
//! threaded through the solvers.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Construction tolerance on `|sum - 1|` for a probability vector.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// A point on the probability simplex over a finite, index-labelled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector {
    weights: Vec<f64>,
}

impl SimplexVector {
    /// Checked construction: rejects negative weights and any vector whose
    /// mass differs from 1 by more than [`SIMPLEX_SUM_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Simplex("empty weight vector".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Simplex(format!("weight {w} at index {i}")));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::Simplex(format!("mass {sum} differs from 1")));
        }
        Ok(Self { weights })
    }

    /// Clips negative entries of magnitude at most `clip_tol` to zero and
    /// renormalises. Larger violations are an error.
    pub fn normalized(mut weights: Vec<f64>, clip_tol: f64) -> Result<Self> {
        for w in &mut weights {
            if !w.is_finite() {
                return Err(Error::Simplex(format!("non-finite weight {w}")));
            }
            if *w < 0.0 {
                if *w < -clip_tol {
                    return Err(Error::Simplex(format!(
                        "weight {w} below -{clip_tol:e}"
                    )));
                }
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 || (sum - 1.0).abs() > clip_tol.max(SIMPLEX_SUM_TOL) {
            return Err(Error::Simplex(format!("mass {sum} too far from 1")));
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self { weights })
    }

    /// Wraps raw weights without validation. Integrator stage points sit a
    /// Runge-Kutta increment off the simplex by construction; rate functions
    /// extend smoothly there and projecting would cost an order of accuracy.
    pub(crate) fn unchecked(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    /// Uniform distribution on `n` states.
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass at state `i`.
    pub fn point_mass(n: usize, i: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        Self { weights }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// Total-variation distance, `(1/2) sum |p_i - q_i|`.
    pub fn tv_distance(&self, other: &Self) -> f64 {
        0.5 * self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Sup-norm distance between the weight vectors.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

/// Numeric tolerances shared by the solvers and integrators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Sup-norm bound on the stationarity residual of a converged
    /// concave maximisation.
    pub solver_grad_tol: f64,
    /// Allowed simplex violation before a flow step is rejected.
    pub simplex_tol: f64,
    /// Default time step for path quadrature.
    pub quadrature_step: f64,
    /// Iteration cap for the damped Newton solves.
    pub max_newton_iters: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            solver_grad_tol: 1e-8,
            simplex_tol: 1e-9,
            quadrature_step: 1e-3,
            max_newton_iters: 80,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.solver_grad_tol <= 0.0
            || self.simplex_tol <= 0.0
            || self.quadrature_step <= 0.0
            || self.max_newton_iters < 1
        {
            return Err(Error::Invalid(
                "tolerances must be strictly positive and max_newton_iters >= 1".into(),
            ));
        }
        Ok(())
    }
}
