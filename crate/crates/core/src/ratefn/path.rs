//! Quadrature of the local rates along a path: trapezoid in time, velocity
//! by central differences, Newton solves warm-started from the previous grid
//! point.

use super::local::{local_fast_rate, local_slow_rate};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::simplex::{SimplexVector, ToleranceConfig};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

/// Per-grid-point contribution to the path rate.
#[derive(Debug, Clone)]
pub struct StepRate {
    pub t: f64,
    pub slow: f64,
    pub fast: f64,
    pub diverged_slow: bool,
    pub diverged_fast: bool,
}

/// The quadrature result: total rate, its slow/fast decomposition, and the
/// per-step values with divergence flags. `J_total` is `+inf` exactly when
/// some step's slow part is (the fast part is always finite via the
/// suppressed-flow limit).
#[derive(Debug, Clone)]
pub struct PathRateReport {
    pub j_total: f64,
    pub slow_part: f64,
    pub fast_part: f64,
    pub per_step: Vec<StepRate>,
    pub quadrature_step: f64,
}

impl PathRateReport {
    pub fn diverged(&self) -> bool {
        !self.j_total.is_finite()
    }
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

impl Serialize for StepRate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("StepRate", 4)?;
        st.serialize_field("t", &self.t)?;
        if self.slow.is_finite() {
            st.serialize_field("slow", &self.slow)?;
        } else {
            st.serialize_field("slow", &Option::<f64>::None)?;
        }
        st.serialize_field("fast", &self.fast)?;
        st.serialize_field("diverged", &(self.diverged_slow || self.diverged_fast))?;
        st.end()
    }
}

impl Serialize for PathRateReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            #[serde(serialize_with = "finite_or_null")]
            #[serde(rename = "J_total")]
            j_total: &'a f64,
            diverged: bool,
            slow_part: f64,
            fast_part: f64,
            quadrature_step: f64,
            steps: &'a [StepRate],
        }
        Repr {
            j_total: &self.j_total,
            diverged: self.diverged(),
            slow_part: self.slow_part,
            fast_part: self.fast_part,
            quadrature_step: self.quadrature_step,
            steps: &self.per_step,
        }
        .serialize(s)
    }
}

/// Second-order velocity estimates on a uniform grid: central differences
/// inside, one-sided three-point stencils at the ends.
pub fn velocities(mu: &[SimplexVector], step: f64) -> Vec<Vec<f64>> {
    let n = mu.len();
    let dim = mu[0].dim();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = vec![0.0; dim];
        for x in 0..dim {
            v[x] = if n == 2 {
                (mu[1].get(x) - mu[0].get(x)) / step
            } else if i == 0 {
                (-3.0 * mu[0].get(x) + 4.0 * mu[1].get(x) - mu[2].get(x)) / (2.0 * step)
            } else if i == n - 1 {
                (3.0 * mu[n - 1].get(x) - 4.0 * mu[n - 2].get(x) + mu[n - 3].get(x))
                    / (2.0 * step)
            } else {
                (mu[i + 1].get(x) - mu[i - 1].get(x)) / (2.0 * step)
            };
        }
        out.push(v);
    }
    out
}

/// Trapezoid quadrature of `local_slow_rate + local_fast_rate` over a path
/// given on a uniform grid: `mu` and the occupation density `m` share the
/// grid, the velocity is differenced from `mu`, and each grid point's solves
/// warm-start from the previous optimisers.
pub fn path_rate(
    model: &ModelSpec,
    mu: &[SimplexVector],
    m: &[SimplexVector],
    step: f64,
    tol: &ToleranceConfig,
) -> Result<PathRateReport> {
    path_rate_with(model, mu, m, step, tol, false)
}

/// [`path_rate`] with a parallelism switch: grid points are independent, so
/// they can be solved concurrently at the cost of losing warm starts (each
/// solve then starts cold).
pub fn path_rate_with(
    model: &ModelSpec,
    mu: &[SimplexVector],
    m: &[SimplexVector],
    step: f64,
    tol: &ToleranceConfig,
    parallel: bool,
) -> Result<PathRateReport> {
    if mu.len() != m.len() {
        return Err(Error::GridMismatch(format!(
            "mu has {} points, occupation density {}",
            mu.len(),
            m.len()
        )));
    }
    if mu.len() < 2 {
        return Err(Error::GridMismatch("need at least two grid points".into()));
    }
    let mu_dot = velocities(mu, step);

    let per_step = if parallel {
        use rayon::prelude::*;
        let results: Vec<Result<StepRate>> = (0..mu.len())
            .into_par_iter()
            .map(|i| {
                let slow = local_slow_rate(model, &mu[i], &mu_dot[i], &m[i], tol, None)?;
                let fast = local_fast_rate(model, &mu[i], &m[i], tol, None)?;
                Ok(StepRate {
                    t: i as f64 * step,
                    slow: slow.value,
                    fast: fast.value,
                    diverged_slow: slow.diverged,
                    diverged_fast: fast.diverged,
                })
            })
            .collect();
        results.into_iter().collect::<Result<Vec<_>>>()?
    } else {
        let mut steps = Vec::with_capacity(mu.len());
        let mut warm_alpha: Option<Vec<f64>> = None;
        let mut warm_g: Option<Vec<f64>> = None;
        for i in 0..mu.len() {
            let slow =
                local_slow_rate(model, &mu[i], &mu_dot[i], &m[i], tol, warm_alpha.as_deref())?;
            let fast = local_fast_rate(model, &mu[i], &m[i], tol, warm_g.as_deref())?;
            warm_alpha = if slow.diverged { None } else { Some(slow.alpha_hat.clone()) };
            warm_g = if fast.diverged { None } else { Some(fast.g_hat.clone()) };
            steps.push(StepRate {
                t: i as f64 * step,
                slow: slow.value,
                fast: fast.value,
                diverged_slow: slow.diverged,
                diverged_fast: fast.diverged,
            });
        }
        steps
    };

    let trapezoid = |f: &dyn Fn(&StepRate) -> f64| -> f64 {
        let inner: f64 = per_step[1..per_step.len() - 1].iter().map(f).sum();
        step * (inner + 0.5 * (f(&per_step[0]) + f(per_step.last().unwrap())))
    };
    let slow_part = trapezoid(&|s| s.slow);
    let fast_part = trapezoid(&|s| s.fast);

    Ok(PathRateReport {
        j_total: slow_part + fast_part,
        slow_part,
        fast_part,
        per_step,
        quadrature_step: step,
    })
}

/// CSV dump of the per-step optimisers (one row per grid point with the
/// slow then fast tilt coordinates). Recomputes the solves.
pub fn write_optimizer_csv(
    model: &ModelSpec,
    mu: &[SimplexVector],
    m: &[SimplexVector],
    step: f64,
    tol: &ToleranceConfig,
    out: &mut impl std::io::Write,
) -> Result<()> {
    let mu_dot = velocities(mu, step);
    write!(out, "t")?;
    for x in model.slow_graph().labels() {
        write!(out, ",alpha_{x}")?;
    }
    for y in model.fast_graph().labels() {
        write!(out, ",g_{y}")?;
    }
    writeln!(out)?;
    let mut warm_alpha: Option<Vec<f64>> = None;
    let mut warm_g: Option<Vec<f64>> = None;
    for i in 0..mu.len() {
        let slow = local_slow_rate(model, &mu[i], &mu_dot[i], &m[i], tol, warm_alpha.as_deref())?;
        let fast = local_fast_rate(model, &mu[i], &m[i], tol, warm_g.as_deref())?;
        write!(out, "{}", i as f64 * step)?;
        for a in &slow.alpha_hat {
            write!(out, ",{a}")?;
        }
        for g in &fast.g_hat {
            write!(out, ",{g}")?;
        }
        writeln!(out)?;
        warm_alpha = Some(slow.alpha_hat);
        warm_g = Some(fast.g_hat);
    }
    Ok(())
}
