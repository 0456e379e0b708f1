//! Per-time concave maximisations defining the local rate: over slow tilts
//! `alpha` (cost of a velocity deviating from the averaged drift) and over
//! fast tilts `g` (cost of an occupation density deviating from the
//! invariant measure). Both objectives depend only on differences along
//! edges, so one coordinate per connected piece is gauge-fixed to zero.

use super::newton::{maximize, NewtonStatus};
use crate::averaging::{averaged_rates, slow_drift_from_rates};
use crate::error::{Error, Result};
use crate::graph::strongly_connected_components;
use crate::kernel::tau;
use crate::model::ModelSpec;
use crate::simplex::{SimplexVector, ToleranceConfig};
use nalgebra::{DMatrix, DVector};

/// Sup-norm cap on gauge-fixed iterates; beyond it the edge multipliers
/// `e^{D alpha}` span ~`e^{+-50}` and the supremum is treated as attained
/// only in a limit.
pub const ITERATE_NORM_CAP: f64 = 50.0;

/// Velocities reaching the solver are finite-difference estimates, so a
/// required flux below this floor at a state the positive-weight edges
/// cannot reach is discretisation noise, not infeasibility; likewise a
/// sub-floor imbalance over a connected piece is projected out instead of
/// being billed as an infinite rate. Genuine infeasibilities enter at the
/// scale of the velocity itself, orders of magnitude above.
const VELOCITY_NOISE: f64 = 1e-6;

/// Converged (or limiting) solution of the slow maximisation.
#[derive(Debug, Clone)]
pub struct SlowSolution {
    /// The supremum; `+inf` when the velocity is not representable by the
    /// available fluxes.
    pub value: f64,
    /// Optimising tilt, gauge-fixed to zero at state 0 (zero on states that
    /// do not enter the objective).
    pub alpha_hat: Vec<f64>,
    /// Edgewise flux perturbation `e^{D alpha} - 1` (zero on zero-weight
    /// edges, where it is irrelevant).
    pub h: Vec<f64>,
    /// Sup-norm of the first-order optimality condition.
    pub residual: f64,
    pub diverged: bool,
}

/// Converged (or limiting) solution of the fast maximisation. The value is
/// always finite: when the supremum is approached at infinity the limit is
/// the full cost of the suppressed flows plus balanced solves on the
/// strongly connected pieces of the positive-weight subgraph.
#[derive(Debug, Clone)]
pub struct FastSolution {
    pub value: f64,
    /// Optimising tilt (gauge-fixed at state 0). For a limiting solution the
    /// suppressed pieces are separated by offsets of [`ITERATE_NORM_CAP`];
    /// `h` carries the exact limit instead.
    pub g_hat: Vec<f64>,
    /// Edgewise `e^{D g} - 1`, with exactly `-1` on suppressed edges.
    pub h: Vec<f64>,
    pub residual: f64,
    pub diverged: bool,
}

/// Slow objective `<alpha, zeta> - sum_e tau(D alpha_e) w_e` over the given
/// edge list with weights `w = lambda_bar * mu(src)`.
pub fn slow_objective(alpha: &[f64], edges: &[(usize, usize)], w: &[f64], zeta: &[f64]) -> f64 {
    let linear: f64 = alpha.iter().zip(zeta).map(|(a, z)| a * z).sum();
    let cost: f64 = edges
        .iter()
        .zip(w)
        .filter(|(_, &we)| we > 0.0)
        .map(|(&(x, xp), &we)| tau(alpha[xp] - alpha[x]) * we)
        .sum();
    linear - cost
}

/// Fast objective `sum_e c_e (1 - e^{D g_e})` with weights
/// `c = gamma * m(src)`.
pub fn fast_objective(g: &[f64], edges: &[(usize, usize)], c: &[f64]) -> f64 {
    edges
        .iter()
        .zip(c)
        .filter(|(_, &ce)| ce > 0.0)
        .map(|(&(y, yp), &ce)| ce * (1.0 - (g[yp] - g[y]).exp()))
        .sum()
}

/// Gradient of the slow objective over all coordinates (the left side of the
/// first-order optimality condition).
fn slow_gradient_full(
    n: usize,
    edges: &[(usize, usize)],
    w: &[f64],
    zeta: &[f64],
    alpha: &[f64],
) -> Vec<f64> {
    let mut grad = zeta.to_vec();
    grad.resize(n, 0.0);
    for (&(x, xp), &we) in edges.iter().zip(w) {
        if we <= 0.0 {
            continue;
        }
        let h = (alpha[xp] - alpha[x]).exp_m1();
        grad[x] += we * h;
        grad[xp] -= we * h;
    }
    grad
}

fn fast_gradient_full(n: usize, edges: &[(usize, usize)], c: &[f64], g: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; n];
    for (&(y, yp), &ce) in edges.iter().zip(c) {
        if ce <= 0.0 {
            continue;
        }
        let u = (g[yp] - g[y]).exp();
        grad[y] += ce * u;
        grad[yp] -= ce * u;
    }
    grad
}

/// Maximises the slow objective for raw problem data: `n` states, directed
/// `edges` with weights `w >= 0`, required net flux `zeta`.
pub fn solve_slow_problem(
    n: usize,
    edges: &[(usize, usize)],
    w: &[f64],
    zeta: &[f64],
    tol: &ToleranceConfig,
    warm: Option<&[f64]>,
) -> Result<SlowSolution> {
    let support: Vec<usize> = (0..edges.len()).filter(|&e| w[e] > 0.0).collect();
    let mut zeta = zeta.to_vec();

    // connected pieces of the undirected support graph
    let mut comp = vec![usize::MAX; n];
    let mut n_comp = 0;
    for x in 0..n {
        if comp[x] != usize::MAX {
            continue;
        }
        let incident = support
            .iter()
            .any(|&e| edges[e].0 == x || edges[e].1 == x);
        if !incident {
            continue;
        }
        // flood fill
        let id = n_comp;
        n_comp += 1;
        let mut stack = vec![x];
        comp[x] = id;
        while let Some(v) = stack.pop() {
            for &e in &support {
                let (a, b) = edges[e];
                for u in [a, b] {
                    if (a == v || b == v) && comp[u] == usize::MAX {
                        comp[u] = id;
                        stack.push(u);
                    }
                }
            }
        }
    }

    let diverged = |alpha: Vec<f64>, residual: f64| SlowSolution {
        value: f64::INFINITY,
        h: edges
            .iter()
            .zip(w)
            .map(|(&(x, xp), &we)| if we > 0.0 { (alpha[xp] - alpha[x]).exp_m1() } else { 0.0 })
            .collect(),
        alpha_hat: alpha,
        residual,
        diverged: true,
    };

    // a state needing flux with no incident positive-weight edge, or an
    // unbalanced connected piece, makes the objective linear and unbounded;
    // sub-noise-floor requirements are projected out instead
    for x in 0..n {
        if comp[x] == usize::MAX {
            if zeta[x].abs() > VELOCITY_NOISE {
                return Ok(diverged(vec![0.0; n], zeta[x].abs()));
            }
            zeta[x] = 0.0;
        }
    }
    for id in 0..n_comp {
        let members: Vec<usize> = (0..n).filter(|&x| comp[x] == id).collect();
        let total: f64 = members.iter().map(|&x| zeta[x]).sum();
        if total.abs() > VELOCITY_NOISE * members.len() as f64 {
            return Ok(diverged(vec![0.0; n], total.abs()));
        }
        let shift = total / members.len() as f64;
        for &x in &members {
            zeta[x] -= shift;
        }
    }
    let zeta = &zeta[..];

    // free coordinates: every vertex of a component except its first
    let mut free = Vec::new();
    let mut seen_comp = vec![false; n_comp];
    for x in 0..n {
        if comp[x] == usize::MAX {
            continue;
        }
        if !seen_comp[comp[x]] {
            seen_comp[comp[x]] = true;
        } else {
            free.push(x);
        }
    }

    let assemble = |reduced: &[f64]| -> Vec<f64> {
        let mut alpha = vec![0.0; n];
        for (k, &x) in free.iter().enumerate() {
            alpha[x] = reduced[k];
        }
        alpha
    };

    if free.is_empty() {
        let alpha = vec![0.0; n];
        let grad = slow_gradient_full(n, edges, w, zeta, &alpha);
        let residual = grad.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let value = slow_objective(&alpha, edges, w, zeta).max(0.0);
        return Ok(SlowSolution {
            value,
            alpha_hat: alpha,
            h: vec![0.0; edges.len()],
            residual,
            diverged: false,
        });
    }

    let pos: Vec<Option<usize>> = {
        let mut p = vec![None; n];
        for (k, &x) in free.iter().enumerate() {
            p[x] = Some(k);
        }
        p
    };

    let eval = |reduced: &[f64]| {
        let alpha = assemble(reduced);
        let f = slow_objective(&alpha, edges, w, zeta);
        let grad_full = slow_gradient_full(n, edges, w, zeta, &alpha);
        let grad = DVector::from_iterator(free.len(), free.iter().map(|&x| grad_full[x]));
        let mut hess = DMatrix::zeros(free.len(), free.len());
        for &e in &support {
            let (x, xp) = edges[e];
            let q = w[e] * (alpha[xp] - alpha[x]).exp();
            match (pos[x], pos[xp]) {
                (Some(i), Some(j)) => {
                    hess[(i, i)] -= q;
                    hess[(j, j)] -= q;
                    hess[(i, j)] += q;
                    hess[(j, i)] += q;
                }
                (Some(i), None) | (None, Some(i)) => hess[(i, i)] -= q,
                (None, None) => {}
            }
        }
        (f, grad, hess)
    };

    let x0 = match warm {
        Some(a) if a.len() == n => free.iter().map(|&x| a[x]).collect(),
        _ => vec![0.0; free.len()],
    };
    let out = maximize(
        x0,
        tol.solver_grad_tol,
        tol.max_newton_iters,
        ITERATE_NORM_CAP,
        eval,
        |reduced| slow_objective(&assemble(reduced), edges, w, zeta),
    );

    let alpha = assemble(&out.x);
    match out.status {
        NewtonStatus::Capped => Ok(diverged(alpha, out.grad_norm)),
        NewtonStatus::Stalled => Err(Error::SolverStalled {
            iters: out.iters,
            residual: out.grad_norm,
        }),
        NewtonStatus::Converged => {
            let grad = slow_gradient_full(n, edges, w, zeta, &alpha);
            let residual = grad.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            Ok(SlowSolution {
                value: out.value.max(0.0),
                h: edges
                    .iter()
                    .zip(w)
                    .map(|(&(x, xp), &we)| {
                        if we > 0.0 {
                            (alpha[xp] - alpha[x]).exp_m1()
                        } else {
                            0.0
                        }
                    })
                    .collect(),
                alpha_hat: alpha,
                residual,
                diverged: false,
            })
        }
    }
}

/// Maximises the fast objective for raw problem data. Zero-weight structure
/// is handled exactly: flows between different strongly connected pieces of
/// the positive-weight subgraph are suppressed in the limit at cost `c_e`
/// each, and each piece is solved as a balanced problem.
pub fn solve_fast_problem(
    n: usize,
    edges: &[(usize, usize)],
    c: &[f64],
    tol: &ToleranceConfig,
    warm: Option<&[f64]>,
) -> Result<FastSolution> {
    let support: Vec<(usize, usize)> = edges
        .iter()
        .zip(c)
        .filter(|(_, &ce)| ce > 0.0)
        .map(|(&e, _)| e)
        .collect();

    // tarjan returns reverse topological order of the condensation
    let sccs = strongly_connected_components(n, &support);
    let mut scc_of = vec![0usize; n];
    for (k, scc) in sccs.iter().enumerate() {
        for &v in scc {
            scc_of[v] = k;
        }
    }

    let mut cross_cost = 0.0f64;
    let mut is_cross = vec![false; edges.len()];
    for (e, &(y, yp)) in edges.iter().enumerate() {
        if c[e] > 0.0 && scc_of[y] != scc_of[yp] {
            cross_cost += c[e];
            is_cross[e] = true;
        }
    }
    let diverged_flag = cross_cost > 0.0;

    // depth of each scc in the condensation (for reporting a finite g_hat);
    // tarjan's reverse-topological order is walked backwards
    let mut depth = vec![0usize; sccs.len()];
    for k in (0..sccs.len()).rev() {
        for (e, &(y, yp)) in edges.iter().enumerate() {
            if is_cross[e] && scc_of[y] == k {
                depth[scc_of[yp]] = depth[scc_of[yp]].max(depth[k] + 1);
            }
        }
    }

    let mut g_hat = vec![0.0; n];
    let mut value = cross_cost;
    let mut residual = 0.0f64;

    for (k, scc) in sccs.iter().enumerate() {
        if scc.len() < 2 {
            continue;
        }
        let mut members = scc.clone();
        members.sort_unstable();
        let local: Vec<usize> = (0..edges.len())
            .filter(|&e| {
                c[e] > 0.0 && !is_cross[e] && scc_of[edges[e].0] == k
            })
            .collect();
        if local.is_empty() {
            continue;
        }
        // gauge-fix the first member, free coordinates are the rest
        let free = &members[1..];
        let mut pos = vec![None; n];
        for (i, &y) in free.iter().enumerate() {
            pos[y] = Some(i);
        }
        let pin = members[0];

        let assemble = |reduced: &[f64]| -> Vec<f64> {
            let mut g = vec![0.0; n];
            for (i, &y) in free.iter().enumerate() {
                g[y] = reduced[i];
            }
            g
        };
        let value_of = |reduced: &[f64]| -> f64 {
            let g = assemble(reduced);
            local
                .iter()
                .map(|&e| {
                    let (y, yp) = edges[e];
                    c[e] * (1.0 - (g[yp] - g[y]).exp())
                })
                .sum()
        };
        let eval = |reduced: &[f64]| {
            let g = assemble(reduced);
            let mut f = 0.0;
            let mut grad_full = vec![0.0; n];
            let mut hess = DMatrix::zeros(free.len(), free.len());
            for &e in &local {
                let (y, yp) = edges[e];
                let u = (g[yp] - g[y]).exp();
                f += c[e] * (1.0 - u);
                grad_full[y] += c[e] * u;
                grad_full[yp] -= c[e] * u;
                let q = c[e] * u;
                match (pos[y], pos[yp]) {
                    (Some(i), Some(j)) => {
                        hess[(i, i)] -= q;
                        hess[(j, j)] -= q;
                        hess[(i, j)] += q;
                        hess[(j, i)] += q;
                    }
                    (Some(i), None) | (None, Some(i)) => hess[(i, i)] -= q,
                    (None, None) => {}
                }
            }
            let grad = DVector::from_iterator(free.len(), free.iter().map(|&y| grad_full[y]));
            (f, grad, hess)
        };

        let x0 = match warm {
            Some(g) if g.len() == n => free.iter().map(|&y| g[y] - g[pin]).collect(),
            _ => vec![0.0; free.len()],
        };
        let out = maximize(
            x0,
            tol.solver_grad_tol,
            tol.max_newton_iters,
            ITERATE_NORM_CAP,
            eval,
            value_of,
        );
        match out.status {
            NewtonStatus::Converged => {}
            _ => {
                return Err(Error::SolverStalled {
                    iters: out.iters,
                    residual: out.grad_norm,
                })
            }
        }
        value += out.value.max(0.0);
        residual = residual.max(out.grad_norm);
        let g_local = assemble(&out.x);
        for &y in &members {
            g_hat[y] = g_local[y];
        }
    }

    // separate suppressed pieces by the cap so that the reported g_hat is a
    // finite representative of the limit
    for y in 0..n {
        g_hat[y] -= depth[scc_of[y]] as f64 * ITERATE_NORM_CAP;
    }
    let g0 = g_hat[0];
    for g in &mut g_hat {
        *g -= g0;
    }

    let h: Vec<f64> = edges
        .iter()
        .enumerate()
        .map(|(e, &(y, yp))| {
            if c[e] <= 0.0 {
                0.0
            } else if is_cross[e] {
                -1.0
            } else {
                (g_hat[yp] - g_hat[y]).exp_m1()
            }
        })
        .collect();

    if !diverged_flag {
        let grad = fast_gradient_full(n, edges, c, &g_hat);
        residual = grad.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    }

    Ok(FastSolution {
        value,
        g_hat,
        h,
        residual,
        diverged: diverged_flag,
    })
}

/// The slow local rate at `(mu, mu_dot, m)`: averaged rates from `(mu, m)`,
/// edge weights `lambda_bar * mu(src)`, required flux
/// `zeta = mu_dot - averaged drift`.
pub fn local_slow_rate(
    model: &ModelSpec,
    mu: &SimplexVector,
    mu_dot: &[f64],
    m: &SimplexVector,
    tol: &ToleranceConfig,
    warm: Option<&[f64]>,
) -> Result<SlowSolution> {
    let graph = model.slow_graph();
    let rates = averaged_rates(model, mu, m);
    let drift = slow_drift_from_rates(model, mu, &rates);
    let w: Vec<f64> = graph
        .edges()
        .iter()
        .zip(&rates)
        .map(|(&(x, _), &r)| r * mu.get(x))
        .collect();
    let zeta: Vec<f64> = mu_dot.iter().zip(&drift).map(|(v, d)| v - d).collect();
    solve_slow_problem(graph.n_vertices(), graph.edges(), &w, &zeta, tol, warm)
}

/// The fast local rate at `(mu, m)`: edge weights `gamma(mu) * m(src)`.
pub fn local_fast_rate(
    model: &ModelSpec,
    mu: &SimplexVector,
    m: &SimplexVector,
    tol: &ToleranceConfig,
    warm: Option<&[f64]>,
) -> Result<FastSolution> {
    let graph = model.fast_graph();
    let c: Vec<f64> = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(y, _))| model.fast_rate(e, mu) * m.get(y))
        .collect();
    solve_fast_problem(graph.n_vertices(), graph.edges(), &c, tol, warm)
}
