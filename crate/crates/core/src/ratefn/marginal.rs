//! Contraction of the joint rate to the empirical-measure marginal: the
//! occupation density is optimised out. The map
//! `m -> local_slow + local_fast` is convex on the simplex (each term is a
//! supremum of affine functions of `m`), so projected gradient descent with
//! multi-start finds the global infimum; two fast states additionally get a
//! golden-section refinement.

use super::local::{local_fast_rate, local_slow_rate};
use crate::error::Result;
use crate::model::ModelSpec;
use crate::simplex::{SimplexVector, ToleranceConfig};

#[derive(Debug, Clone)]
pub struct MarginalRateSolution {
    pub value: f64,
    pub m_star: SimplexVector,
    pub converged: bool,
}

fn objective(
    model: &ModelSpec,
    mu: &SimplexVector,
    mu_dot: &[f64],
    m: &SimplexVector,
    tol: &ToleranceConfig,
) -> f64 {
    let slow = match local_slow_rate(model, mu, mu_dot, m, tol, None) {
        Ok(s) => s.value,
        Err(_) => f64::INFINITY,
    };
    if !slow.is_finite() {
        return f64::INFINITY;
    }
    let fast = match local_fast_rate(model, mu, m, tol, None) {
        Ok(f) => f.value,
        Err(_) => f64::INFINITY,
    };
    slow + fast
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    let mut k = 0;
    for (i, &u) in sorted.iter().enumerate() {
        cum += u;
        let candidate = (cum - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
            k = i + 1;
        }
    }
    debug_assert!(k > 0);
    v.iter().map(|&u| (u - theta).max(0.0)).collect()
}

/// The marginal local rate `inf_m [slow(mu, mu_dot, m) + fast(mu, m)]`.
///
/// Multi-start projected gradient (uniform, the invariant measure, and each
/// simplex corner), numerical gradients, backtracking steps. Returns the
/// best point found and whether the descent converged.
pub fn marginal_local_rate(
    model: &ModelSpec,
    mu: &SimplexVector,
    mu_dot: &[f64],
    tol: &ToleranceConfig,
) -> Result<MarginalRateSolution> {
    let ny = model.n_fast_states();
    let f = |m: &SimplexVector| objective(model, mu, mu_dot, m, tol);

    let mut starts: Vec<SimplexVector> = vec![SimplexVector::uniform(ny)];
    if let Ok(pi) = crate::averaging::invariant_measure(model, mu) {
        starts.push(pi);
    }
    for y in 0..ny {
        starts.push(SimplexVector::point_mass(ny, y));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut converged = false;

    for start in &starts {
        let mut m = start.as_slice().to_vec();
        let mut fm = f(&SimplexVector::normalized(m.clone(), 1e-9)?);
        if !fm.is_finite() {
            // nudge infeasible corners towards the interior
            m = m.iter().map(|&w| 0.9 * w + 0.1 / ny as f64).collect();
            fm = f(&SimplexVector::normalized(m.clone(), 1e-9)?);
            if !fm.is_finite() {
                continue;
            }
        }
        let mut local_converged = false;
        for _ in 0..200 {
            // forward-difference gradient, projected step
            let eps = 1e-7;
            let mut grad = vec![0.0; ny];
            for y in 0..ny {
                let mut mp = m.clone();
                mp[y] += eps;
                let sum: f64 = mp.iter().sum();
                for w in &mut mp {
                    *w /= sum;
                }
                let fp = f(&SimplexVector::normalized(mp, 1e-9)?);
                grad[y] = if fp.is_finite() {
                    (fp - fm) / eps
                } else {
                    1e6
                };
            }
            let gnorm = grad.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if gnorm < 1e-12 {
                local_converged = true;
                break;
            }
            let mut step = 1.0 / gnorm.max(1.0);
            let mut moved = false;
            for _ in 0..40 {
                let trial: Vec<f64> = m
                    .iter()
                    .zip(&grad)
                    .map(|(w, g)| w - step * g)
                    .collect();
                let trial = project_simplex(&trial);
                let ft = f(&SimplexVector::normalized(trial.clone(), 1e-9)?);
                if ft.is_finite() && ft < fm - 1e-15 {
                    let delta: f64 = trial
                        .iter()
                        .zip(&m)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    m = trial;
                    fm = ft;
                    moved = true;
                    if delta < 1e-11 {
                        local_converged = true;
                    }
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                local_converged = true;
                break;
            }
            if local_converged {
                break;
            }
        }
        converged |= local_converged;
        if best.as_ref().is_none_or(|(b, _)| fm < *b) {
            best = Some((fm, m));
        }
    }

    let (mut value, mut m_best) = best.ok_or_else(|| {
        crate::error::Error::Invalid("marginal rate objective infinite everywhere sampled".into())
    })?;

    // golden-section refinement on the 1-simplex (the objective is convex)
    if ny == 2 {
        let eval_q = |q: f64| -> f64 {
            let m = SimplexVector::unchecked(vec![q, 1.0 - q]);
            f(&m)
        };
        let phi = 0.5 * (3.0 - 5.0f64.sqrt());
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut q1 = lo + phi * (hi - lo);
        let mut q2 = hi - phi * (hi - lo);
        let mut f1 = eval_q(q1);
        let mut f2 = eval_q(q2);
        for _ in 0..80 {
            if f1 <= f2 {
                hi = q2;
                q2 = q1;
                f2 = f1;
                q1 = lo + phi * (hi - lo);
                f1 = eval_q(q1);
            } else {
                lo = q1;
                q1 = q2;
                f1 = f2;
                q2 = hi - phi * (hi - lo);
                f2 = eval_q(q2);
            }
        }
        let q = 0.5 * (lo + hi);
        let fq = eval_q(q);
        if fq < value {
            value = fq;
            m_best = vec![q, 1.0 - q];
            converged = true;
        }
    }

    Ok(MarginalRateSolution {
        value,
        m_star: SimplexVector::normalized(m_best, 1e-9)?,
        converged,
    })
}
