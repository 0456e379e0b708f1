//! Exact event-driven simulation of the joint process: the particle
//! configuration jumps at `O(1)` per-particle rates, the environment at
//! `O(N)` rates, and every rate is recomputed after every jump (the systems
//! are fully coupled, so there is no locality to exploit).

mod ensemble;
mod functionals;

pub use ensemble::{ensemble, EnsembleStats};
pub use functionals::{path_functionals_uv, path_functionals_uv_with, tilted_model, Compensator, TiltSpec};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::simplex::SimplexVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Joint state: particle counts per slow state (summing to `N`), the
/// environment state, and the current time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    pub counts: Vec<u64>,
    pub env: usize,
}

impl SystemState {
    pub fn new(counts: Vec<u64>, env: usize) -> Self {
        Self { counts, env }
    }

    /// All `n` particles in slow state `x`, environment at `y`.
    pub fn point_mass(n_states: usize, x: usize, n: u64, y: usize) -> Self {
        let mut counts = vec![0; n_states];
        counts[x] = n;
        Self { counts, env: y }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Empirical measure `counts / N`.
    pub fn empirical(&self) -> SimplexVector {
        let n = self.total() as f64;
        SimplexVector::normalized(
            self.counts.iter().map(|&c| c as f64 / n).collect(),
            1e-9,
        )
        .expect("counts/N lies on the simplex")
    }
}

/// One recorded transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// A particle moved along the slow edge with this index.
    Slow(u32),
    /// The environment moved along the fast edge with this index.
    Fast(u32),
}

/// A complete sample path on `[0, T]`: the initial state plus the jump-time
/// and event sequence. States along the path are reconstructed with a
/// [`PathCursor`]. Replaying the same `(model, N, initial, T, seed, stream)`
/// reproduces the path bit for bit.
#[derive(Debug, Clone)]
pub struct SimulationPath {
    pub initial: SystemState,
    pub times: Vec<f64>,
    pub events: Vec<Event>,
    pub n: u64,
    pub horizon: f64,
    pub seed: u64,
    pub stream: u64,
    /// The total jump rate hit zero and the path was extended constantly.
    pub absorbed: bool,
    slow_edges: Vec<(usize, usize)>,
    fast_edges: Vec<(usize, usize)>,
}

impl SimulationPath {
    pub fn n_jumps(&self) -> usize {
        self.events.len()
    }

    pub fn cursor(&self) -> PathCursor<'_> {
        PathCursor {
            path: self,
            counts: self.initial.counts.clone(),
            env: self.initial.env,
            next: 0,
        }
    }

    /// State at the end of the path (time `T`).
    pub fn terminal(&self) -> SystemState {
        let mut cur = self.cursor();
        while cur.advance() {}
        SystemState {
            counts: cur.counts.clone(),
            env: cur.env,
        }
    }

    fn apply(&self, counts: &mut [u64], env: &mut usize, event: Event) {
        match event {
            Event::Slow(e) => {
                let (x, xp) = self.slow_edge(e);
                debug_assert!(counts[x] > 0);
                counts[x] -= 1;
                counts[xp] += 1;
            }
            Event::Fast(e) => {
                *env = self.fast_edge(e).1;
            }
        }
    }

    fn slow_edge(&self, e: u32) -> (usize, usize) {
        self.slow_edges[e as usize]
    }

    fn fast_edge(&self, e: u32) -> (usize, usize) {
        self.fast_edges[e as usize]
    }
}

/// Walks the piecewise-constant path segment by segment. A path with `k`
/// jumps has `k + 1` segments; the last one ends at the horizon.
pub struct PathCursor<'a> {
    path: &'a SimulationPath,
    counts: Vec<u64>,
    env: usize,
    next: usize,
}

impl<'a> PathCursor<'a> {
    /// The current constant segment: `(t_start, t_end, counts, env)`.
    pub fn segment(&self) -> (f64, f64, &[u64], usize) {
        let t0 = if self.next == 0 {
            0.0
        } else {
            self.path.times[self.next - 1]
        };
        let t1 = if self.next < self.path.times.len() {
            self.path.times[self.next]
        } else {
            self.path.horizon
        };
        (t0, t1, &self.counts, self.env)
    }

    /// Applies the jump ending the current segment. Returns `false` once the
    /// final segment has been consumed.
    pub fn advance(&mut self) -> bool {
        if self.next >= self.path.events.len() {
            return false;
        }
        let event = self.path.events[self.next];
        self.path.apply(&mut self.counts, &mut self.env, event);
        self.next += 1;
        true
    }
}

/// Exact (Gillespie direct-method) simulation of the joint process up to
/// time `horizon`. The aggregate rate of a slow edge is
/// `counts(x) * lambda(edge, xi, y)`; a fast edge out of the current
/// environment state fires at `N * gamma(edge, xi)`. All rates are
/// recomputed after every jump.
pub fn simulate(
    model: &ModelSpec,
    initial: &SystemState,
    horizon: f64,
    seed: u64,
) -> Result<SimulationPath> {
    simulate_stream(model, initial, horizon, seed, 0)
}

/// [`simulate`] on an independent RNG stream; replica streams of an ensemble
/// are independent by construction.
pub fn simulate_stream(
    model: &ModelSpec,
    initial: &SystemState,
    horizon: f64,
    seed: u64,
    stream: u64,
) -> Result<SimulationPath> {
    let nx = model.n_slow_states();
    if initial.counts.len() != nx {
        return Err(Error::Invalid(format!(
            "initial counts have {} entries for {} slow states",
            initial.counts.len(),
            nx
        )));
    }
    if initial.env >= model.n_fast_states() {
        return Err(Error::Invalid(format!("environment state {} out of range", initial.env)));
    }
    let n = initial.total();
    if n == 0 {
        return Err(Error::Invalid("need at least one particle".into()));
    }
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(Error::Invalid(format!("horizon {horizon} must be positive")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let slow_edges = model.slow_graph().edges().to_vec();
    let fast_edges = model.fast_graph().edges().to_vec();
    let n_f = n as f64;

    let mut counts = initial.counts.clone();
    let mut env = initial.env;
    let mut t = 0.0f64;
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut absorbed = false;

    let mut slow_agg = vec![0.0f64; slow_edges.len()];
    let mut fast_agg = vec![0.0f64; fast_edges.len()];

    loop {
        let xi = SimplexVector::unchecked(counts.iter().map(|&c| c as f64 / n_f).collect());

        let mut total = 0.0f64;
        for (e, &(x, _)) in slow_edges.iter().enumerate() {
            let r = if counts[x] == 0 {
                0.0
            } else {
                counts[x] as f64 * model.checked_slow_rate(e, &xi, env)?
            };
            slow_agg[e] = r;
            total += r;
        }
        for e in 0..fast_edges.len() {
            let r = if fast_edges[e].0 == env {
                n_f * model.checked_fast_rate(e, &xi)?
            } else {
                0.0
            };
            fast_agg[e] = r;
            total += r;
        }

        if total <= 0.0 {
            absorbed = true;
            break;
        }

        // u in (0, 1]: waiting time Exp(total)
        let u: f64 = 1.0 - rng.random::<f64>();
        let dt = -u.ln() / total;
        let t_next = t + dt;
        if t_next > horizon {
            break;
        }
        t = t_next;

        let mut target = rng.random::<f64>() * total;
        let mut chosen = None;
        for (e, &r) in slow_agg.iter().enumerate() {
            if r <= 0.0 {
                continue;
            }
            if target < r {
                chosen = Some(Event::Slow(e as u32));
                break;
            }
            target -= r;
        }
        if chosen.is_none() {
            for (e, &r) in fast_agg.iter().enumerate() {
                if r <= 0.0 {
                    continue;
                }
                if target < r {
                    chosen = Some(Event::Fast(e as u32));
                    break;
                }
                target -= r;
            }
        }
        // rounding can push the target past the last positive rate
        let event = chosen.unwrap_or_else(|| {
            let e = fast_agg.iter().rposition(|&r| r > 0.0);
            match e {
                Some(e) => Event::Fast(e as u32),
                None => Event::Slow(slow_agg.iter().rposition(|&r| r > 0.0).unwrap() as u32),
            }
        });

        match event {
            Event::Slow(e) => {
                let (x, xp) = slow_edges[e as usize];
                counts[x] -= 1;
                counts[xp] += 1;
            }
            Event::Fast(e) => env = fast_edges[e as usize].1,
        }
        times.push(t);
        events.push(event);
    }

    Ok(SimulationPath {
        initial: initial.clone(),
        times,
        events,
        n,
        horizon,
        seed,
        stream,
        absorbed,
        slow_edges,
        fast_edges,
    })
}

/// Empirical-measure path sampled on the uniform grid `k * grid_step`, with
/// the post-jump value at jump times.
pub fn empirical_path(path: &SimulationPath, grid_step: f64) -> Vec<SimplexVector> {
    let n_points = (path.horizon / grid_step).round() as usize;
    let n = path.n as f64;
    let mut out = Vec::with_capacity(n_points + 1);
    let mut cur = path.cursor();
    for k in 0..=n_points {
        let t = (k as f64 * grid_step).min(path.horizon);
        loop {
            let (_, t1, _, _) = cur.segment();
            // the value at a jump time is the post-jump state
            if t < t1 || !cur.advance() {
                break;
            }
        }
        let (_, _, counts, _) = cur.segment();
        out.push(SimplexVector::unchecked(
            counts.iter().map(|&c| c as f64 / n).collect(),
        ));
    }
    out
}

/// Cumulative environment occupation per fast state on a uniform grid; the
/// total mass at grid time `t` equals `t` (compensated summation keeps the
/// identity to machine precision).
#[derive(Debug, Clone)]
pub struct OccupationMeasure {
    pub grid: Vec<f64>,
    /// `mass[y][k]` = time spent in state `y` up to `grid[k]`.
    pub mass: Vec<Vec<f64>>,
}

impl OccupationMeasure {
    pub fn total_at(&self, k: usize) -> f64 {
        self.mass.iter().map(|m| m[k]).sum()
    }

    /// Occupation density over the window `(grid[k0], grid[k1]]`.
    pub fn window_density(&self, k0: usize, k1: usize) -> Result<SimplexVector> {
        let dt = self.grid[k1] - self.grid[k0];
        SimplexVector::normalized(
            self.mass.iter().map(|m| (m[k1] - m[k0]) / dt).collect(),
            1e-9,
        )
    }

    /// Plot-ready CSV: `t,theta_<y>...`.
    pub fn write_csv(&self, model: &ModelSpec, out: &mut impl std::io::Write) -> Result<()> {
        write!(out, "t")?;
        for y in model.fast_graph().labels() {
            write!(out, ",theta_{y}")?;
        }
        writeln!(out)?;
        for (k, t) in self.grid.iter().enumerate() {
            write!(out, "{t}")?;
            for m in &self.mass {
                write!(out, ",{}", m[k])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Exact sojourn-time accumulation of the environment per fast state.
pub fn occupation(path: &SimulationPath, grid_step: f64) -> OccupationMeasure {
    let ny = path
        .fast_edges
        .iter()
        .fold(path.initial.env + 1, |m, &(u, v)| m.max(u + 1).max(v + 1));
    let n_points = (path.horizon / grid_step).round() as usize;
    let grid: Vec<f64> = (0..=n_points)
        .map(|k| (k as f64 * grid_step).min(path.horizon))
        .collect();

    // Kahan accumulators per state
    let mut acc = vec![0.0f64; ny];
    let mut comp = vec![0.0f64; ny];
    let add = |acc: &mut [f64], comp: &mut [f64], y: usize, d: f64| {
        let v = d - comp[y];
        let s = acc[y] + v;
        comp[y] = (s - acc[y]) - v;
        acc[y] = s;
    };

    let mut mass = vec![vec![0.0f64; grid.len()]; ny];
    let mut cur = path.cursor();
    let mut k = 0usize;
    loop {
        let (t0, t1, _, env) = cur.segment();
        while k < grid.len() && grid[k] <= t1 {
            // cumulative value at grid[k]: completed sojourns plus the part
            // of the current one
            for y in 0..ny {
                mass[y][k] = acc[y];
            }
            mass[env][k] += grid[k] - t0;
            k += 1;
        }
        add(&mut acc, &mut comp, env, t1 - t0);
        if !cur.advance() {
            break;
        }
    }
    OccupationMeasure { grid, mass }
}

/// Path CSV: `t,count_<x>...,env`, one row per segment start.
pub fn write_path_csv(
    model: &ModelSpec,
    path: &SimulationPath,
    out: &mut impl std::io::Write,
) -> Result<()> {
    write!(out, "t")?;
    for x in model.slow_graph().labels() {
        write!(out, ",count_{x}")?;
    }
    writeln!(out, ",env")?;
    let mut cur = path.cursor();
    loop {
        let (t0, _, counts, env) = cur.segment();
        write!(out, "{t0}")?;
        for c in counts {
            write!(out, ",{c}")?;
        }
        writeln!(out, ",{}", model.fast_graph().label(env))?;
        if !cur.advance() {
            break;
        }
    }
    Ok(())
}
