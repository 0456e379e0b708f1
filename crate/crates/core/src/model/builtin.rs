//! The two built-in example models: a retrial system with orbit queues and a
//! carrier-sense WLAN with interference classes.

use super::ModelSpec;
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::simplex::SimplexVector;
use std::sync::Arc;

/// Retrial system with `N` orbit queues of capacity `K` sharing one server.
///
/// Slow states `0..=K` count waiting customers in a queue: arrivals push
/// `i -> i+1` at rate `lambda` while the server is busy, retrials pull
/// `i -> i-1` at rate `alpha` while it is idle. The environment is the server
/// (`idle`, `busy`): it turns busy at rate `lambda + alpha (1 - xi(0))`
/// (fresh arrivals plus retrials from non-empty queues) and idle at rate 1,
/// both accelerated by `N` in the simulator.
pub fn retrial_model(lambda: f64, alpha: f64, k: usize) -> Result<ModelSpec> {
    if lambda.is_nan() || lambda <= 0.0 || alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Model("retrial: lambda and alpha must be positive".into()));
    }
    if k == 0 {
        return Err(Error::Model(
            "retrial: K = 0 leaves a single slow state with no transitions".into(),
        ));
    }

    let mut edges = Vec::with_capacity(2 * k);
    for i in 0..k {
        edges.push((i, i + 1));
    }
    for i in 1..=k {
        edges.push((i, i - 1));
    }
    let slow_graph = DirectedGraph::numbered(k + 1, edges)?;
    let fast_graph = DirectedGraph::new(
        vec!["idle".into(), "busy".into()],
        vec![(0, 1), (1, 0)],
    )?;

    const BUSY: usize = 1;
    let slow_rate = {
        move |e: usize, _xi: &SimplexVector, y: usize| -> f64 {
            if e < k {
                // upward edge i -> i+1: arrival joins the orbit queue
                if y == BUSY {
                    lambda
                } else {
                    0.0
                }
            } else {
                // downward edge i -> i-1: successful retrial
                if y == BUSY {
                    0.0
                } else {
                    alpha
                }
            }
        }
    };
    let fast_rate = move |e: usize, xi: &SimplexVector| -> f64 {
        match e {
            0 => lambda + alpha * (1.0 - xi.get(0)),
            _ => 1.0,
        }
    };

    Ok(ModelSpec::new(
        format!("retrial(lambda={lambda},alpha={alpha},K={k})"),
        slow_graph,
        fast_graph,
        Arc::new(slow_rate),
        Arc::new(fast_rate),
    ))
}

/// WLAN with `C` interference classes and per-state attempt rates
/// `p = (p_0, ..., p_K)`.
///
/// A node in class `c` at backoff state `i` attempts at rate `p_i` whenever
/// every channel it can hear is idle; the attempt ends at state `0` on
/// success or `i+1` on collision, split by the within-class collision
/// probability `exp(-sum_j p_j xi^c_j)` (with `xi^c` the within-class state
/// distribution). The environment is the per-class channel state
/// (`0` idle, `1` transmitting, `2` collision), restricted to the states
/// reachable under carrier sensing; busy channels clear at rate 1.
///
/// `interference[c][d]` says transmissions of class `d` are heard by class
/// `c`; the diagonal must be all ones.
pub fn wlan_model(p: Vec<f64>, interference: Vec<Vec<bool>>) -> Result<ModelSpec> {
    let c = interference.len();
    if c == 0 {
        return Err(Error::Model("wlan: need at least one class".into()));
    }
    if interference.iter().any(|row| row.len() != c) {
        return Err(Error::Model("wlan: interference matrix must be square".into()));
    }
    if (0..c).any(|i| !interference[i][i]) {
        return Err(Error::Model("wlan: interference diagonal must be ones".into()));
    }
    if p.is_empty() || p.iter().any(|&q| q.is_nan() || q <= 0.0) {
        return Err(Error::Model("wlan: attempt rates must be strictly positive".into()));
    }
    let k = p.len() - 1;
    let n_states = k + 1;

    // slow: per-class backoff chains on {0..K}
    let mut slow_labels = Vec::with_capacity(c * n_states);
    for class in 0..c {
        for i in 0..n_states {
            slow_labels.push(format!("c{class}s{i}"));
        }
    }
    let idx = move |class: usize, i: usize| class * n_states + i;
    let mut slow_edges = Vec::new();
    // per edge: (class, kind); kind 0 = collision i -> i+1, kind 1 = success i -> 0
    let mut slow_edge_info = Vec::new();
    for class in 0..c {
        for i in 0..k {
            slow_edges.push((idx(class, i), idx(class, i + 1)));
            slow_edge_info.push((class, 0usize, i));
        }
        for i in 1..=k {
            slow_edges.push((idx(class, i), idx(class, 0)));
            slow_edge_info.push((class, 1usize, i));
        }
    }
    let slow_graph = DirectedGraph::new(slow_labels, slow_edges)?;

    // hearers[c] = classes whose transmissions class c hears
    let hearers: Vec<Vec<usize>> = (0..c)
        .map(|cc| (0..c).filter(|&d| interference[cc][d]).collect())
        .collect();

    // fast: channel states {0,1,2}^C reachable from all-idle under carrier
    // sensing (a class starts only when everything it hears is idle)
    let enc = |state: &[u8]| -> String { state.iter().map(|d| d.to_string()).collect() };
    let mut states: Vec<Vec<u8>> = vec![vec![0; c]];
    let mut index = std::collections::HashMap::new();
    index.insert(states[0].clone(), 0usize);
    let mut fast_edges: Vec<(usize, usize)> = Vec::new();
    // per fast edge: (class, kind); kind 0 = start success, 1 = start collision, 2 = clear
    let mut fast_edge_info: Vec<(usize, usize)> = Vec::new();
    let mut head = 0;
    while head < states.len() {
        let y = states[head].clone();
        for class in 0..c {
            let mut targets = Vec::new();
            if y[class] == 0 && hearers[class].iter().all(|&d| y[d] == 0) {
                targets.push((1u8, 0usize));
                targets.push((2u8, 1usize));
            } else if y[class] != 0 {
                targets.push((0u8, 2usize));
            }
            for (to, kind) in targets {
                let mut yp = y.clone();
                yp[class] = to;
                let j = *index.entry(yp.clone()).or_insert_with(|| {
                    states.push(yp.clone());
                    states.len() - 1
                });
                fast_edges.push((head, j));
                fast_edge_info.push((class, kind));
            }
        }
        head += 1;
    }
    let fast_labels = states.iter().map(|s| enc(s)).collect();
    let fast_graph = DirectedGraph::new(fast_labels, fast_edges)?;

    // within-class attempt intensity a_c(xi) = sum_i p_i xi^c_i, with xi^c
    // the distribution within class c (zero if the class carries no mass)
    let p_arc = Arc::new(p);
    let attempt = {
        let p = Arc::clone(&p_arc);
        move |class: usize, xi: &SimplexVector| -> f64 {
            let mass: f64 = (0..n_states).map(|i| xi.get(idx(class, i))).sum();
            if mass <= 0.0 {
                return 0.0;
            }
            (0..n_states)
                .map(|i| p[i] * xi.get(idx(class, i)) / mass)
                .sum()
        }
    };

    // success factor for a class-c attempt: for each heard class d, the
    // probability that no node of d starts in the same slot, provided
    // everything d hears is idle
    let states_arc = Arc::new(states);
    let success_factor = {
        let hearers = hearers.clone();
        let attempt = attempt.clone();
        let states = Arc::clone(&states_arc);
        move |class: usize, xi: &SimplexVector, y: usize| -> f64 {
            let yv = &states[y];
            hearers[class]
                .iter()
                .map(|&d| {
                    if hearers[d].iter().all(|&dd| yv[dd] == 0) {
                        (-attempt(d, xi)).exp()
                    } else {
                        1.0
                    }
                })
                .product()
        }
    };

    let slow_rate = {
        let hearers = hearers.clone();
        let p = Arc::clone(&p_arc);
        let states = Arc::clone(&states_arc);
        let success_factor = success_factor.clone();
        move |e: usize, xi: &SimplexVector, y: usize| -> f64 {
            let (class, kind, i) = slow_edge_info[e];
            let yv = &states[y];
            if hearers[class].iter().any(|&d| yv[d] != 0) {
                return 0.0;
            }
            let s = success_factor(class, xi, y);
            match kind {
                1 => p[i] * s,
                _ => p[i] * (1.0 - s),
            }
        }
    };

    let fast_rate = {
        move |e: usize, xi: &SimplexVector| -> f64 {
            let (class, kind) = fast_edge_info[e];
            match kind {
                0 => {
                    // single attempt in a slot: success begins
                    let a = attempt(class, xi);
                    a * (-a).exp()
                }
                1 => {
                    // two or more attempts: collision
                    let a = attempt(class, xi);
                    1.0 - (-a).exp() - a * (-a).exp()
                }
                _ => 1.0,
            }
        }
    };

    Ok(ModelSpec::new(
        format!("wlan(C={c},K={k})"),
        slow_graph,
        fast_graph,
        Arc::new(slow_rate),
        Arc::new(fast_rate),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;
    use approx::assert_abs_diff_eq;

    #[test]
    fn retrial_rates_match_the_figures() {
        let model = retrial_model(1.0, 2.0, 2).unwrap();
        assert_eq!(model.slow_graph().n_edges(), 4);
        assert_eq!(model.fast_graph().n_edges(), 2);

        let xi = SimplexVector::point_mass(3, 0);
        // idle -> busy at rate lambda + alpha (1 - xi(0)) = 1 at xi(0) = 1
        let e_up = model.fast_graph().edge_index(0, 1).unwrap();
        assert_abs_diff_eq!(model.fast_rate(e_up, &xi), 1.0);
        // arrivals only while busy
        let e01 = model.slow_graph().edge_index(0, 1).unwrap();
        assert_eq!(model.slow_rate(e01, &xi, 0), 0.0);
        assert_eq!(model.slow_rate(e01, &xi, 1), 1.0);
        // retrials only while idle
        let e10 = model.slow_graph().edge_index(1, 0).unwrap();
        assert_eq!(model.slow_rate(e10, &xi, 0), 2.0);
        assert_eq!(model.slow_rate(e10, &xi, 1), 0.0);
    }

    #[test]
    fn retrial_rejects_degenerate_k() {
        assert!(retrial_model(1.0, 1.0, 0).is_err());
        assert!(retrial_model(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn retrial_edge_count_scales_with_k() {
        for k in 1..6 {
            let model = retrial_model(0.5, 1.5, k).unwrap();
            assert_eq!(model.slow_graph().n_edges(), 2 * k);
            assert_eq!(model.fast_graph().n_edges(), 2);
        }
    }

    #[test]
    fn wlan_single_class_rates() {
        let (p0, p1) = (0.6, 0.3);
        let model = wlan_model(vec![p0, p1], vec![vec![true]]).unwrap();
        // channel states 0,1,2 with start/clear transitions
        assert_eq!(model.fast_graph().n_vertices(), 3);
        assert_eq!(model.fast_graph().n_edges(), 4);

        // all nodes in state 0: attempt intensity a = p0
        let xi = SimplexVector::new(vec![1.0, 0.0]).unwrap();
        let start = model.fast_graph().edge_index(0, 1).unwrap();
        assert_abs_diff_eq!(model.fast_rate(start, &xi), p0 * (-p0).exp(), epsilon = 1e-15);

        // success + collision rates sum to the attempt rate when idle
        let success = model.slow_graph().edge_index(1, 0).unwrap();
        let collide = model.slow_graph().edge_index(0, 1).unwrap();
        let idle = 0;
        let total = model.slow_rate(success, &xi, idle) + model.slow_rate(collide, &xi, idle);
        // the collision edge starts from state 0 (rate p0), the success edge
        // from state 1 (rate p1); check each against the attempt rate times
        // the success split instead of mixing states
        let s = (-p0).exp();
        assert_abs_diff_eq!(model.slow_rate(success, &xi, idle), p1 * s, epsilon = 1e-15);
        assert_abs_diff_eq!(model.slow_rate(collide, &xi, idle), p0 * (1.0 - s), epsilon = 1e-15);
        assert_abs_diff_eq!(total, p1 * s + p0 * (1.0 - s), epsilon = 1e-15);

        // any busy heard channel silences the class
        assert_eq!(model.slow_rate(success, &xi, 1), 0.0);
        assert_eq!(model.slow_rate(collide, &xi, 2), 0.0);
    }

    #[test]
    fn wlan_attempt_rate_split_sums() {
        // same backoff state on both edge kinds: i -> 0 plus i -> i+1 equals
        // the attempt rate p_i while everything is idle
        let model = wlan_model(vec![0.5, 0.4, 0.2], vec![vec![true]]).unwrap();
        let xi = SimplexVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        let success = model.slow_graph().edge_index(1, 0).unwrap();
        let collide = model.slow_graph().edge_index(1, 2).unwrap();
        let total = model.slow_rate(success, &xi, 0) + model.slow_rate(collide, &xi, 0);
        assert_abs_diff_eq!(total, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn wlan_two_classes_full_interference() {
        let model = wlan_model(
            vec![0.5, 0.25],
            vec![vec![true, true], vec![true, true]],
        )
        .unwrap();
        // both classes can never transmit at once: 00,10,20,01,02
        assert_eq!(model.fast_graph().n_vertices(), 5);
        assert!(model.fast_graph().is_strongly_connected());
        // slow graph is two disjoint class chains
        assert!(!model.slow_graph().is_strongly_connected());
        let report = validate(&model, 150, 5);
        assert!(!report.slow_irreducible);
        assert!(report.fast_irreducible);
    }

    #[test]
    fn wlan_cross_class_success_factor() {
        // full interference, K=1: a class-0 success pays the no-collision
        // factor e^{-a_d} of every heard class d
        let (p0, p1) = (0.5, 0.3);
        let model = wlan_model(
            vec![p0, p1],
            vec![vec![true, true], vec![true, true]],
        )
        .unwrap();
        // class 0: all nodes backed off to state 0; class 1: half and half
        let xi = SimplexVector::new(vec![0.5, 0.0, 0.25, 0.25]).unwrap();
        let a0 = p0; // within-class intensity of class 0
        let a1 = 0.5 * p0 + 0.5 * p1;

        // success edge of class 0 from backoff state 1 (vertex 1 -> 0)
        let success = model.slow_graph().edge_index(1, 0).unwrap();
        let all_idle = 0;
        assert_abs_diff_eq!(
            model.slow_rate(success, &xi, all_idle),
            p1 * (-a0).exp() * (-a1).exp(),
            epsilon = 1e-14
        );
        // collision edge of class 0 (vertex 0 -> 1) is the complement
        let collide = model.slow_graph().edge_index(0, 1).unwrap();
        assert_abs_diff_eq!(
            model.slow_rate(collide, &xi, all_idle),
            p0 * (1.0 - (-a0 - a1).exp()),
            epsilon = 1e-14
        );
        // any heard busy channel silences the class entirely
        let busy_state = (0..model.fast_graph().n_vertices())
            .find(|&y| model.fast_graph().label(y) == "01")
            .unwrap();
        assert_eq!(model.slow_rate(success, &xi, busy_state), 0.0);

        // environment start rate from all-idle: a_c e^{-a_c}
        let start0 = model
            .fast_graph()
            .out_edges(all_idle)
            .iter()
            .copied()
            .find(|&e| model.fast_graph().label(model.fast_graph().edge(e).1) == "10")
            .unwrap();
        assert_abs_diff_eq!(model.fast_rate(start0, &xi), a0 * (-a0).exp(), epsilon = 1e-14);
    }

    #[test]
    fn wlan_one_way_interference_reaches_joint_states() {
        // class 0 does not hear class 1, so it can transmit over it: the
        // whole 3x3 channel product becomes reachable
        let model = wlan_model(
            vec![0.4, 0.2],
            vec![vec![true, false], vec![true, true]],
        )
        .unwrap();
        assert_eq!(model.fast_graph().n_vertices(), 9);
        assert!(model.fast_graph().is_strongly_connected());
    }

    #[test]
    fn wlan_rejects_bad_input() {
        assert!(wlan_model(vec![0.5, 0.0], vec![vec![true]]).is_err());
        assert!(wlan_model(vec![0.5], vec![vec![true, false]]).is_err());
        assert!(wlan_model(vec![0.5], vec![vec![false]]).is_err());
    }

    #[test]
    fn wlan_single_class_passes_validation() {
        let model = wlan_model(vec![0.6, 0.3], vec![vec![true]]).unwrap();
        let report = validate(&model, 200, 11);
        assert!(report.passes(), "{report:?}");
    }

    #[test]
    fn builtin_rates_finite_and_nonnegative_everywhere() {
        use rand_chacha::rand_core::SeedableRng;
        let models = [
            retrial_model(1.0, 2.0, 3).unwrap(),
            wlan_model(vec![0.6, 0.3], vec![vec![true]]).unwrap(),
            wlan_model(vec![0.5, 0.25], vec![vec![true, true], vec![true, true]]).unwrap(),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for model in &models {
            let nx = model.n_slow_states();
            let mut points: Vec<SimplexVector> =
                (0..nx).map(|i| SimplexVector::point_mass(nx, i)).collect();
            for _ in 0..50 {
                points.push(crate::model::sample_simplex(nx, &mut rng));
            }
            for xi in &points {
                for e in 0..model.slow_graph().n_edges() {
                    for y in 0..model.n_fast_states() {
                        let r = model.slow_rate(e, xi, y);
                        assert!(r.is_finite() && r >= 0.0, "{} slow {r}", model.name);
                    }
                }
                for e in 0..model.fast_graph().n_edges() {
                    let r = model.fast_rate(e, xi);
                    assert!(r.is_finite() && r >= 0.0, "{} fast {r}", model.name);
                }
            }
        }
    }
}
