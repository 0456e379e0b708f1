//! Statistical probes tying simulation to the averaged limit and the rate
//! functional: averaging-principle convergence, occupation-measure
//! concentration, the exponential-martingale battery, and rare-event
//! exponent probes around tilted flows.

use crate::averaging::{invariant_measure, mckean_vlasov_flow, AveragedFlow};
use crate::error::{Error, Result};
use crate::kernel::tau_star;
use crate::model::ModelSpec;
use crate::ratefn::path_rate;
use crate::sim::{
    path_functionals_uv_with, simulate_stream, tilted_model, Compensator, SimulationPath,
    SystemState, TiltSpec,
};
use crate::simplex::{SimplexVector, ToleranceConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rounds `nu * n` to integer counts summing to `n` (largest remainders).
pub fn counts_from_measure(nu: &SimplexVector, n: u64) -> Vec<u64> {
    let dim = nu.dim();
    let mut counts: Vec<u64> = (0..dim).map(|x| (nu.get(x) * n as f64).floor() as u64).collect();
    let mut remainders: Vec<(f64, usize)> = (0..dim)
        .map(|x| (nu.get(x) * n as f64 - counts[x] as f64, x))
        .collect();
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut short = n - counts.iter().sum::<u64>();
    for &(_, x) in &remainders {
        if short == 0 {
            break;
        }
        counts[x] += 1;
        short -= 1;
    }
    counts
}

fn median_and_q90(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    let q90 = values[((0.9 * (n - 1) as f64).round() as usize).min(n - 1)];
    (median, q90)
}

/// Sup-norm deviation between a simulated path and the averaged flow over
/// the flow's grid (subsampled to roughly `check_dt`).
fn path_flow_deviation(path: &SimulationPath, flow: &AveragedFlow, check_dt: f64) -> f64 {
    let every = ((check_dt / flow.step).round() as usize).max(1);
    let n = path.n as f64;
    let mut dev = 0.0f64;
    let mut cur = path.cursor();
    for (k, &t) in flow.times.iter().enumerate() {
        if k % every != 0 && k != flow.times.len() - 1 {
            continue;
        }
        loop {
            let (_, t1, _, _) = cur.segment();
            if t < t1 || !cur.advance() {
                break;
            }
        }
        let (_, _, counts, _) = cur.segment();
        let target = &flow.mu[k];
        for x in 0..counts.len() {
            dev = dev.max((counts[x] as f64 / n - target.get(x)).abs());
        }
    }
    dev
}

/// Averaging-principle check: per-`N` statistics of the sup-norm deviation
/// of the empirical measure from the averaged flow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AveragingReport {
    pub ns: Vec<u64>,
    pub median_dev: Vec<f64>,
    pub q90_dev: Vec<f64>,
    pub horizon: f64,
    pub replicas: usize,
}

pub fn averaging_check(
    model: &ModelSpec,
    nu: &SimplexVector,
    ns: &[u64],
    horizon: f64,
    replicas: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<AveragingReport> {
    if replicas < 2 {
        return Err(Error::Invalid("need at least two replicas".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("system sizes must be increasing".into()));
    }
    let flow = mckean_vlasov_flow(model, nu, horizon, 1e-3, tol)?;

    let mut median_dev = Vec::new();
    let mut q90_dev = Vec::new();
    for (ni, &n) in ns.iter().enumerate() {
        let initial = SystemState::new(counts_from_measure(nu, n), 0);
        let devs: Vec<Result<f64>> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let path = simulate_stream(
                    model,
                    &initial,
                    horizon,
                    seed.wrapping_add(ni as u64),
                    r as u64,
                )?;
                Ok(path_flow_deviation(&path, &flow, 0.01))
            })
            .collect();
        let devs = devs.into_iter().collect::<Result<Vec<f64>>>()?;
        let (median, q90) = median_and_q90(devs);
        median_dev.push(median);
        q90_dev.push(q90);
    }

    Ok(AveragingReport {
        ns: ns.to_vec(),
        median_dev,
        q90_dev,
        horizon,
        replicas,
    })
}

/// Occupation-measure concentration: windowed occupation densities of the
/// environment against the invariant measure along the simulated empirical
/// path, in total variation, sup over windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupationReport {
    pub n: u64,
    pub window: f64,
    pub replicas: usize,
    pub median_sup_tv: f64,
    pub q90_sup_tv: f64,
    /// Windows (across all replicas) with fewer than 10 environment jumps;
    /// their estimates are noise-dominated.
    pub low_jump_windows: usize,
}

pub fn occupation_check(
    model: &ModelSpec,
    nu: &SimplexVector,
    n: u64,
    horizon: f64,
    window: f64,
    replicas: usize,
    seed: u64,
) -> Result<OccupationReport> {
    if window * (n as f64) < 10.0 {
        return Err(Error::Invalid(
            "window too short: fewer than ~10 fast jumps expected".into(),
        ));
    }
    let n_windows = (horizon / window).floor() as usize;
    if n_windows == 0 {
        return Err(Error::Invalid("horizon shorter than one window".into()));
    }
    let ny = model.n_fast_states();
    let initial = SystemState::new(counts_from_measure(nu, n), 0);

    let per_replica: Vec<Result<(f64, usize)>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let path = simulate_stream(model, &initial, horizon, seed, r as u64)?;
            let nf = n as f64;
            let mut sup_tv = 0.0f64;
            let mut low = 0usize;

            let mut cur = path.cursor();
            for w in 0..n_windows {
                let t_lo = w as f64 * window;
                let t_hi = t_lo + window;
                let t_mid = 0.5 * (t_lo + t_hi);
                let mut occ = vec![0.0f64; ny];
                let mut jumps = 0usize;
                let mut mid_mu: Option<SimplexVector> = None;
                loop {
                    let (t0, t1, counts, env) = cur.segment();
                    let lo = t0.max(t_lo);
                    let hi = t1.min(t_hi);
                    if hi > lo {
                        occ[env] += hi - lo;
                    }
                    if mid_mu.is_none() && t_mid >= t0 && t_mid < t1 {
                        mid_mu = Some(SimplexVector::unchecked(
                            counts.iter().map(|&c| c as f64 / nf).collect(),
                        ));
                    }
                    if t1 >= t_hi {
                        break;
                    }
                    if !cur.advance() {
                        break;
                    }
                    jumps += 1;
                }
                let total: f64 = occ.iter().sum();
                if total <= 0.0 {
                    continue;
                }
                if jumps < 10 {
                    low += 1;
                }
                let mid_mu = mid_mu.unwrap_or_else(|| {
                    let (_, _, counts, _) = cur.segment();
                    SimplexVector::unchecked(counts.iter().map(|&c| c as f64 / nf).collect())
                });
                let pi = invariant_measure(model, &mid_mu)?;
                let tv = 0.5
                    * (0..ny)
                        .map(|y| (occ[y] / total - pi.get(y)).abs())
                        .sum::<f64>();
                sup_tv = sup_tv.max(tv);
            }
            Ok((sup_tv, low))
        })
        .collect();

    let mut sups = Vec::with_capacity(replicas);
    let mut low_jump_windows = 0;
    for r in per_replica {
        let (sup, low) = r?;
        sups.push(sup);
        low_jump_windows += low;
    }
    let (median_sup_tv, q90_sup_tv) = median_and_q90(sups);

    Ok(OccupationReport {
        n,
        window,
        replicas,
        median_sup_tv,
        q90_sup_tv,
        low_jump_windows,
    })
}

/// One tilt's martingale test: sample statistics of `exp(N U_T + V_T)`
/// against the exact mean 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartingaleTiltResult {
    pub tilt: TiltSpec,
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
    pub variance_overflow: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub results: Vec<MartingaleTiltResult>,
    pub pass_fraction: f64,
    pub passes: bool,
}

/// Sample variance above this flags the tilt as too aggressive for the
/// given `(N, T)`: the confidence interval of the mean is then too wide for
/// a meaningful z-test at battery replica counts. (Even harsher tilts
/// degenerate the other way, with almost-surely-vanishing weights; those
/// show up as wildly negative z-scores instead.)
pub const VARIANCE_CAP: f64 = 100.0;

pub fn martingale_battery(
    model: &ModelSpec,
    initial: &SystemState,
    horizon: f64,
    tilts: &[TiltSpec],
    replicas: usize,
    seed: u64,
    compensator: Compensator,
) -> Result<MartingaleReport> {
    let n = initial.total() as f64;
    let mut results = Vec::with_capacity(tilts.len());
    for (k, tilt) in tilts.iter().enumerate() {
        let weights: Vec<Result<f64>> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let path = simulate_stream(
                    model,
                    initial,
                    horizon,
                    seed.wrapping_add(k as u64),
                    r as u64,
                )?;
                let (u, v) = path_functionals_uv_with(model, &path, tilt, compensator)?;
                Ok((n * u + v).exp())
            })
            .collect();
        let weights = weights.into_iter().collect::<Result<Vec<f64>>>()?;
        let m = weights.iter().sum::<f64>() / weights.len() as f64;
        let var = if weights.len() < 2 {
            0.0
        } else {
            weights.iter().map(|w| (w - m) * (w - m)).sum::<f64>()
                / (weights.len() as f64 - 1.0)
        };
        let stderr = (var / weights.len() as f64).sqrt();
        let z = if stderr > 0.0 {
            (m - 1.0) / stderr
        } else if (m - 1.0).abs() < 1e-14 {
            0.0
        } else {
            f64::INFINITY
        };
        results.push(MartingaleTiltResult {
            tilt: tilt.clone(),
            mean: m,
            stderr,
            z,
            variance_overflow: var > VARIANCE_CAP,
        });
    }
    let passed = results.iter().filter(|r| r.z.abs() <= 3.0).count();
    let pass_fraction = passed as f64 / results.len().max(1) as f64;
    Ok(MartingaleReport {
        results,
        pass_fraction,
        passes: pass_fraction >= 0.95,
    })
}

/// Rare-event exponent probe: the empirical decay rate of the probability
/// that the *original* system stays in a sup-norm tube around the tilted
/// flow, against the rate functional of that flow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentProbe {
    pub tilt: TiltSpec,
    pub delta: f64,
    pub horizon: f64,
    pub ns: Vec<u64>,
    pub replicas: usize,
    pub hits: Vec<u64>,
    /// `-(1/N) log` of the tube-hit frequency; for zero hits this is the
    /// one-sided bound `-(1/N) log(1/replicas)` and the flag below is set.
    pub estimates: Vec<f64>,
    pub lower_bound_only: Vec<bool>,
    /// Quadrature of the local rates along the tilted flow under the
    /// original model.
    pub predicted: f64,
    /// The same value through the dual form with the closed-form optimisers
    /// `h = e^{D alpha} - 1`, `e^{D g} - 1`.
    pub predicted_direct: f64,
    pub relative_gaps: Vec<f64>,
}

/// Direct evaluation of the rate of a constant-tilt flow under the base
/// model: `sum_e tau*(e^{D alpha}-1) lambda_bar mu + sum_e tau*(e^{D g}-1)
/// gamma m`, trapezoid in time. The constant tilt satisfies the optimality
/// conditions along its own tilted flow, so this equals the variational
/// value without any solve.
pub fn tilt_cost_along_flow(model: &ModelSpec, flow: &AveragedFlow, tilt: &TiltSpec) -> f64 {
    let slow_edges = model.slow_graph().edges();
    let fast_edges = model.fast_graph().edges();
    let h_slow: Vec<f64> = slow_edges
        .iter()
        .map(|&(x, xp)| (tilt.alpha[xp] - tilt.alpha[x]).exp_m1())
        .collect();
    let h_fast: Vec<f64> = fast_edges
        .iter()
        .map(|&(y, yp)| (tilt.g[yp] - tilt.g[y]).exp_m1())
        .collect();
    let local = |k: usize| -> f64 {
        let mu = &flow.mu[k];
        let m = &flow.pi[k];
        let mut total = 0.0;
        for (e, &(x, _)) in slow_edges.iter().enumerate() {
            let lambda_bar: f64 = (0..m.dim())
                .map(|y| model.slow_rate(e, mu, y) * m.get(y))
                .sum();
            total += tau_star(h_slow[e]) * lambda_bar * mu.get(x);
        }
        for (e, &(y, _)) in fast_edges.iter().enumerate() {
            total += tau_star(h_fast[e]) * model.fast_rate(e, mu) * m.get(y);
        }
        total
    };
    let n = flow.len();
    let inner: f64 = (1..n - 1).map(local).sum();
    flow.step * (inner + 0.5 * (local(0) + local(n - 1)))
}

#[allow(clippy::too_many_arguments)]
pub fn exponent_probe(
    model: &ModelSpec,
    nu: &SimplexVector,
    tilt: &TiltSpec,
    delta: f64,
    ns: &[u64],
    horizon: f64,
    replicas: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<ExponentProbe> {
    let tilted = tilted_model(model, tilt)?;
    let flow = mckean_vlasov_flow(&tilted, nu, horizon, 1e-3, tol)?;

    let predicted = {
        let report = path_rate(model, &flow.mu, &flow.pi, flow.step, tol)?;
        report.j_total
    };
    let predicted_direct = tilt_cost_along_flow(model, &flow, tilt);

    let mut hits_per_n = Vec::new();
    let mut estimates = Vec::new();
    let mut lower_bound_only = Vec::new();
    let mut relative_gaps = Vec::new();

    for (ni, &n) in ns.iter().enumerate() {
        let initial = SystemState::new(counts_from_measure(nu, n), 0);
        let hits: u64 = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let path = match simulate_stream(
                    model,
                    &initial,
                    horizon,
                    seed.wrapping_add(1000 * ni as u64),
                    r as u64,
                ) {
                    Ok(p) => p,
                    Err(_) => return 0u64,
                };
                if path_flow_deviation(&path, &flow, 0.02) <= delta {
                    1
                } else {
                    0
                }
            })
            .sum();
        hits_per_n.push(hits);
        let (estimate, bound_only) = if hits == 0 {
            ((replicas as f64).ln() / n as f64, true)
        } else {
            (-((hits as f64 / replicas as f64).ln()) / n as f64, false)
        };
        estimates.push(estimate);
        lower_bound_only.push(bound_only);
        relative_gaps.push((estimate - predicted).abs() / predicted.abs().max(1e-300));
    }

    Ok(ExponentProbe {
        tilt: tilt.clone(),
        delta,
        horizon,
        ns: ns.to_vec(),
        replicas,
        hits: hits_per_n,
        estimates,
        lower_bound_only,
        predicted,
        predicted_direct,
        relative_gaps,
    })
}

/// Deterministic small random tilts for battery runs.
pub fn random_tilts(
    nx: usize,
    ny: usize,
    count: usize,
    max_entry: f64,
    seed: u64,
) -> Vec<TiltSpec> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let alpha: Vec<f64> = (0..nx)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * max_entry)
                .collect();
            let g: Vec<f64> = (0..ny)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * max_entry)
                .collect();
            TiltSpec::new(alpha, g).expect("finite tilts")
        })
        .collect()
}

/// Compensator kernel re-export for negative-control runs.
pub fn broken_compensator() -> Compensator {
    Compensator::DropSlowTau
}
