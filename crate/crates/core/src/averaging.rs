//! The averaged limit dynamics: invariant measure of the fast chain at a
//! frozen empirical measure, averaged slow rates, and the McKean-Vlasov ODE
//! they drive.

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::simplex::{SimplexVector, ToleranceConfig};
use nalgebra::{DMatrix, DVector};

/// Residual bound on `pi L = 0` for an accepted invariant measure.
pub const STATIONARITY_TOL: f64 = 1e-10;

/// A conservative rate matrix: off-diagonal entries nonnegative and only on
/// declared edges, rows summing to zero.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    entries: DMatrix<f64>,
}

impl RateMatrix {
    /// Builds from off-diagonal edge rates; diagonal set to minus the row sum.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], rates: &[f64]) -> Self {
        let mut entries = DMatrix::zeros(n, n);
        for (&(u, v), &r) in edges.iter().zip(rates) {
            entries[(u, v)] = r;
        }
        for u in 0..n {
            let row_sum: f64 = (0..n).filter(|&v| v != u).map(|v| entries[(u, v)]).sum();
            entries[(u, u)] = -row_sum;
        }
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, u: usize, v: usize) -> f64 {
        self.entries[(u, v)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Sup-norm of `pi L` for a distribution `pi`.
    pub fn stationarity_residual(&self, pi: &SimplexVector) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|v| {
                (0..n)
                    .map(|u| pi.get(u) * self.entries[(u, v)])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Stationary distribution: solves `pi L = 0` with the normalisation row
    /// replacing one stationarity row, then one round of iterative
    /// refinement if needed.
    pub fn invariant_measure(&self) -> Result<SimplexVector> {
        let n = self.dim();
        if n == 1 {
            return Ok(SimplexVector::point_mass(1, 0));
        }
        // columns of L^T are the stationarity equations; replace the last
        // one with sum(pi) = 1
        let mut a = self.entries.transpose();
        for v in 0..n {
            a[(n - 1, v)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;

        let lu = a.clone().lu();
        let mut pi = lu
            .solve(&b)
            .ok_or_else(|| Error::LinearSolve("singular fast generator (reducible chain?)".into()))?;

        // iterative refinement against the full system
        let r = &b - &a * &pi;
        if let Some(corr) = lu.solve(&r) {
            pi += corr;
        }

        let weights: Vec<f64> = pi.iter().copied().collect();
        let pi = SimplexVector::normalized(weights, 1e-8)
            .map_err(|e| Error::LinearSolve(format!("invariant measure off the simplex: {e}")))?;
        let residual = self.stationarity_residual(&pi);
        if residual > STATIONARITY_TOL {
            return Err(Error::LinearSolve(format!(
                "stationarity residual {residual:.3e} exceeds {STATIONARITY_TOL:.1e}"
            )));
        }
        Ok(pi)
    }
}

/// Generator of the fast chain at frozen empirical measure `xi` (rows indexed
/// by the fast states, un-accelerated rates).
pub fn fast_generator(model: &ModelSpec, xi: &SimplexVector) -> RateMatrix {
    let graph = model.fast_graph();
    let rates: Vec<f64> = (0..graph.n_edges())
        .map(|e| model.fast_rate(e, xi))
        .collect();
    RateMatrix::from_edges(graph.n_vertices(), graph.edges(), &rates)
}

/// Unique invariant measure of the fast chain at `xi`.
pub fn invariant_measure(model: &ModelSpec, xi: &SimplexVector) -> Result<SimplexVector> {
    fast_generator(model, xi).invariant_measure()
}

/// Slow rates averaged over a fast-state distribution `m`, per slow edge.
pub fn averaged_rates(model: &ModelSpec, xi: &SimplexVector, m: &SimplexVector) -> Vec<f64> {
    let graph = model.slow_graph();
    (0..graph.n_edges())
        .map(|e| {
            (0..m.dim())
                .map(|y| model.slow_rate(e, xi, y) * m.get(y))
                .sum()
        })
        .collect()
}

/// Net probability flux into each slow state under the averaged rates: the
/// transposed averaged generator applied to `xi`. Components sum to zero.
pub fn slow_drift(model: &ModelSpec, xi: &SimplexVector, m: &SimplexVector) -> Vec<f64> {
    let rates = averaged_rates(model, xi, m);
    slow_drift_from_rates(model, xi, &rates)
}

/// Same as [`slow_drift`] with the averaged rates precomputed.
pub fn slow_drift_from_rates(model: &ModelSpec, xi: &SimplexVector, rates: &[f64]) -> Vec<f64> {
    let graph = model.slow_graph();
    let mut drift = vec![0.0; graph.n_vertices()];
    for (e, &(x, xp)) in graph.edges().iter().enumerate() {
        let flux = xi.get(x) * rates[e];
        drift[x] -= flux;
        drift[xp] += flux;
    }
    drift
}

/// The averaged flow: a time grid with the empirical-measure limit and the
/// invariant measure of the fast chain along it.
#[derive(Debug, Clone)]
pub struct AveragedFlow {
    pub times: Vec<f64>,
    pub mu: Vec<SimplexVector>,
    pub pi: Vec<SimplexVector>,
    pub step: f64,
}

impl AveragedFlow {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value of `mu` at time `t` (nearest grid point).
    pub fn mu_at(&self, t: f64) -> &SimplexVector {
        let i = ((t / self.step).round() as usize).min(self.mu.len() - 1);
        &self.mu[i]
    }

    /// Plot-ready CSV: `t,mu_<x>...,pi_<y>...`.
    pub fn write_csv(&self, model: &ModelSpec, out: &mut impl std::io::Write) -> Result<()> {
        write!(out, "t")?;
        for x in model.slow_graph().labels() {
            write!(out, ",mu_{x}")?;
        }
        for y in model.fast_graph().labels() {
            write!(out, ",pi_{y}")?;
        }
        writeln!(out)?;
        for i in 0..self.times.len() {
            write!(out, "{}", self.times[i])?;
            for w in self.mu[i].as_slice() {
                write!(out, ",{w}")?;
            }
            for w in self.pi[i].as_slice() {
                write!(out, ",{w}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Integrates the averaged dynamics from `nu` over `[0, T]` with classical
/// fourth-order Runge-Kutta, re-solving the invariant measure at every stage
/// (the coupling makes stale invariant measures first-order errors). Each
/// accepted grid point is renormalised onto the simplex; violations beyond
/// the configured tolerance abort with a step-size error.
pub fn mckean_vlasov_flow(
    model: &ModelSpec,
    nu: &SimplexVector,
    horizon: f64,
    step: f64,
    tol: &ToleranceConfig,
) -> Result<AveragedFlow> {
    if step.is_nan() || step <= 0.0 || step > horizon {
        return Err(Error::Invalid(format!(
            "step {step} must lie in (0, {horizon}]"
        )));
    }
    let n_steps = (horizon / step).round().max(1.0) as usize;
    let h = horizon / n_steps as f64;

    let deriv = |w: &[f64]| -> Result<Vec<f64>> {
        let xi = SimplexVector::unchecked(w.to_vec());
        let pi = invariant_measure(model, &xi)?;
        Ok(slow_drift(model, &xi, &pi))
    };

    let nx = nu.dim();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut mu = Vec::with_capacity(n_steps + 1);
    let mut pi = Vec::with_capacity(n_steps + 1);

    let mut current = nu.clone();
    times.push(0.0);
    pi.push(invariant_measure(model, &current)?);
    mu.push(current.clone());

    for i in 0..n_steps {
        let w = current.as_slice();
        let k1 = deriv(w)?;
        let mut w2 = vec![0.0; nx];
        for j in 0..nx {
            w2[j] = w[j] + 0.5 * h * k1[j];
        }
        let k2 = deriv(&w2)?;
        let mut w3 = vec![0.0; nx];
        for j in 0..nx {
            w3[j] = w[j] + 0.5 * h * k2[j];
        }
        let k3 = deriv(&w3)?;
        let mut w4 = vec![0.0; nx];
        for j in 0..nx {
            w4[j] = w[j] + h * k3[j];
        }
        let k4 = deriv(&w4)?;

        let mut next = vec![0.0; nx];
        for j in 0..nx {
            next[j] = w[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        current = SimplexVector::normalized(next, tol.simplex_tol)
            .map_err(|e| Error::StepTooLarge(format!("after step {i}: {e}")))?;
        times.push((i + 1) as f64 * h);
        pi.push(invariant_measure(model, &current)?);
        mu.push(current.clone());
    }

    Ok(AveragedFlow {
        times,
        mu,
        pi,
        step: h,
    })
}

/// Newton root-finding on the averaged drift, in simplex coordinates (last
/// component eliminated), with a finite-difference Jacobian. Used as an
/// independent oracle for fixed points of the flow.
pub fn drift_fixed_point(
    model: &ModelSpec,
    start: &SimplexVector,
    grad_tol: f64,
    max_iters: usize,
) -> Result<SimplexVector> {
    let n = start.dim();
    let mut w: Vec<f64> = start.as_slice().to_vec();
    let eval = |w: &[f64]| -> Result<Vec<f64>> {
        let xi = SimplexVector::normalized(w.to_vec(), 1e-6)
            .map_err(|e| Error::Invalid(format!("iterate left the simplex: {e}")))?;
        let pi = invariant_measure(model, &xi)?;
        Ok(slow_drift(model, &xi, &pi))
    };
    for _ in 0..max_iters {
        let f = eval(&w)?;
        let sup = f.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if sup <= grad_tol {
            return SimplexVector::normalized(w, 1e-9);
        }
        // Jacobian of the first n-1 drift components in the reduced chart
        // where w[n-1] = 1 - sum(others)
        let d = n - 1;
        let mut jac = DMatrix::zeros(d, d);
        let eps = 1e-7;
        for j in 0..d {
            let mut wp = w.clone();
            wp[j] += eps;
            wp[d] -= eps;
            let fp = eval(&wp)?;
            for i in 0..d {
                jac[(i, j)] = (fp[i] - f[i]) / eps;
            }
        }
        let rhs = DVector::from_iterator(d, f[..d].iter().map(|&x| -x));
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::LinearSolve("singular drift Jacobian".into()))?;
        // damped update, keeping the iterate inside the simplex
        let mut scale = 1.0f64;
        loop {
            let mut wn = w.clone();
            let mut sum_d = 0.0;
            for j in 0..d {
                wn[j] = w[j] + scale * delta[j];
                sum_d += wn[j];
            }
            wn[d] = 1.0 - sum_d;
            if wn.iter().all(|&x| x >= -1e-12) {
                for x in &mut wn {
                    *x = x.max(0.0);
                }
                w = wn;
                break;
            }
            scale *= 0.5;
            if scale < 1e-6 {
                return Err(Error::SolverStalled {
                    iters: max_iters,
                    residual: sup,
                });
            }
        }
    }
    let f = eval(&w)?;
    let sup = f.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    Err(Error::SolverStalled {
        iters: max_iters,
        residual: sup,
    })
}
