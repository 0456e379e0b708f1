//! Damped Newton ascent for smooth concave objectives in gauge-fixed
//! coordinates. The Hessians here are weighted graph Laplacians (negated),
//! nonsingular whenever the positive-weight edges connect every free
//! coordinate to a gauge vertex; near the boundary they degenerate, which
//! the Armijo damping and the gradient fallback absorb.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonStatus {
    Converged,
    /// Iterate sup-norm exceeded the cap: the supremum is approached at
    /// infinity.
    Capped,
    /// Iteration limit hit without convergence or divergence detection.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub status: NewtonStatus,
}

/// Maximises a concave function from `x0`. `eval` returns the value,
/// gradient and Hessian; `value_of` just the value (for the line search).
pub fn maximize(
    x0: Vec<f64>,
    grad_tol: f64,
    max_iters: usize,
    norm_cap: f64,
    eval: impl Fn(&[f64]) -> (f64, DVector<f64>, DMatrix<f64>),
    value_of: impl Fn(&[f64]) -> f64,
) -> NewtonOutcome {
    let mut x = x0;
    let mut iters = 0;
    loop {
        let (f, grad, hess) = eval(&x);
        let grad_norm = grad.amax();
        if grad_norm <= grad_tol {
            return NewtonOutcome {
                x,
                value: f,
                grad_norm,
                iters,
                status: NewtonStatus::Converged,
            };
        }
        if iters >= max_iters {
            return NewtonOutcome {
                x,
                value: f,
                grad_norm,
                iters,
                status: NewtonStatus::Stalled,
            };
        }
        iters += 1;

        // Newton direction on the negated Hessian; gradient ascent when the
        // Laplacian is singular or the direction loses ascent
        let neg_h = -&hess;
        let direction = match neg_h.lu().solve(&grad) {
            Some(d) if d.dot(&grad) > 0.0 && d.iter().all(|v| v.is_finite()) => d,
            _ => {
                let scale = 1.0 / (1.0 + hess.amax());
                &grad * scale
            }
        };

        // Armijo backtracking
        let slope = direction.dot(&grad);
        let mut step = 1.0f64;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x
                .iter()
                .zip(direction.iter())
                .map(|(xi, di)| xi + step * di)
                .collect();
            let ft = value_of(&trial);
            if ft.is_finite() && ft >= f + 1e-4 * step * slope {
                x = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return NewtonOutcome {
                x,
                value: f,
                grad_norm,
                iters,
                status: NewtonStatus::Stalled,
            };
        }
        let sup = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if sup > norm_cap {
            let value = value_of(&x);
            return NewtonOutcome {
                x,
                value,
                grad_norm,
                iters,
                status: NewtonStatus::Capped,
            };
        }
    }
}
