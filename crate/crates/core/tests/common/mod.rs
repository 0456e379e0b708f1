//! Independent oracles shared by the integration and acceptance suites:
//! grid searches and closed forms that never touch the solver code paths.

#![allow(dead_code)]

use twoscale::graph::DirectedGraph;
use twoscale::kernel::tau;
use twoscale::model::ModelSpec;
use twoscale::SimplexVector;
use std::sync::Arc;

/// Brute-force supremum of the 2-state slow objective
/// `beta z - w01 tau(beta) - w10 tau(-beta)` over a beta grid.
pub fn grid_slow_two_state(w01: f64, w10: f64, z: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=n {
        let beta = lo + k as f64 * step;
        let val = z * beta - w01 * tau(beta) - w10 * tau(-beta);
        if val > best {
            best = val;
        }
    }
    best
}

/// Brute-force supremum of the 2-state fast objective
/// `c01 (1 - e^beta) + c10 (1 - e^{-beta})` over a beta grid.
pub fn grid_fast_two_state(c01: f64, c10: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=n {
        let beta = lo + k as f64 * step;
        let val = c01 * (1.0 - beta.exp()) + c10 * (1.0 - (-beta).exp());
        if val > best {
            best = val;
        }
    }
    best
}

/// A fully explicit 2-state/2-state model: slow rates per `(edge, y)` from a
/// table, fast rates constant.
pub struct TwoByTwo {
    /// `lambda[edge][y]`, edges ordered (0,1), (1,0).
    pub lambda: [[f64; 2]; 2],
    /// fast rates for edges (0,1), (1,0).
    pub gamma: [f64; 2],
}

impl TwoByTwo {
    pub fn model(&self) -> ModelSpec {
        let lambda = self.lambda;
        let gamma = self.gamma;
        ModelSpec::new(
            "two-by-two-table",
            DirectedGraph::numbered(2, vec![(0, 1), (1, 0)]).unwrap(),
            DirectedGraph::numbered(2, vec![(0, 1), (1, 0)]).unwrap(),
            Arc::new(move |e, _: &SimplexVector, y| lambda[e][y]),
            Arc::new(move |e, _: &SimplexVector| gamma[e]),
        )
    }

    /// Averaged slow rates at `m = (q, 1-q)`.
    pub fn lambda_bar(&self, e: usize, q: f64) -> f64 {
        q * self.lambda[e][0] + (1.0 - q) * self.lambda[e][1]
    }

    /// Closed-form fast value at `m = (q, 1-q)`:
    /// `(sqrt(c01) - sqrt(c10))^2` with `c = gamma * m(src)`.
    pub fn fast_value(&self, q: f64) -> f64 {
        let c01 = q * self.gamma[0];
        let c10 = (1.0 - q) * self.gamma[1];
        (c01.sqrt() - c10.sqrt()).powi(2)
    }

    /// The marginal-rate integrand evaluated through the nested form: outer
    /// supremum over the slow tilt, inner supremum over the occupation
    /// density (two-stage grids). `mu = (p, 1-p)`, `mu_dot = (-v, v)`.
    pub fn nested_marginal(&self, p: f64, v: f64) -> f64 {
        let inner_sup = |beta: f64| -> f64 {
            // sup over q of <alpha, averaged drift> + tau-compensator - fast(q)
            let eval = |q: f64| -> f64 {
                let lam01 = self.lambda_bar(0, q);
                let lam10 = self.lambda_bar(1, q);
                // alpha = (0, beta): <alpha, Lambda* mu> = beta (in1 - out1)
                let drift1 = lam01 * p - lam10 * (1.0 - p);
                beta * drift1 + tau(beta) * lam01 * p + tau(-beta) * lam10 * (1.0 - p)
                    - self.fast_value(q)
            };
            let mut best = f64::NEG_INFINITY;
            let mut best_q = 0.0;
            let steps = 1000;
            for k in 0..=steps {
                let q = k as f64 / steps as f64;
                let val = eval(q);
                if val > best {
                    best = val;
                    best_q = q;
                }
            }
            // local refinement
            let lo = (best_q - 2e-3).max(0.0);
            let hi = (best_q + 2e-3).min(1.0);
            for k in 0..=400 {
                let q = lo + (hi - lo) * k as f64 / 400.0;
                best = best.max(eval(q));
            }
            best
        };

        let outer = |beta: f64| beta * v - inner_sup(beta);
        let mut best = f64::NEG_INFINITY;
        let mut best_beta = 0.0;
        let (lo, hi, coarse) = (-8.0f64, 8.0f64, 0.01f64);
        let n = ((hi - lo) / coarse).round() as usize;
        for k in 0..=n {
            let beta = lo + k as f64 * coarse;
            let val = outer(beta);
            if val > best {
                best = val;
                best_beta = beta;
            }
        }
        for k in 0..=400 {
            let beta = best_beta - 0.02 + 0.04 * k as f64 / 400.0;
            best = best.max(outer(beta));
        }
        best
    }
}

/// Summary line printed by each acceptance criterion.
pub fn criterion_line(id: usize, name: &str, pass: bool, detail: &str, elapsed_s: f64) {
    println!(
        "[acceptance] criterion {:02} ({name}): {} ({detail}; {elapsed_s:.2} s)",
        id,
        if pass { "PASS" } else { "FAIL" },
    );
}
