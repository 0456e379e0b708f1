//! Scalar convex kernel shared by every rate computation: the log moment
//! generating function of a centred unit-rate Poisson variable and its
//! Legendre dual.

/// Log-MGF of the centred unit-rate Poisson law, `tau(u) = e^u - u - 1`.
///
/// Evaluated through `exp_m1` so that the `e^u - 1` cancellation near zero
/// does not destroy the quadratic leading term.
pub fn tau(u: f64) -> f64 {
    u.exp_m1() - u
}

/// Derivative `tau'(u) = e^u - 1`.
pub fn tau_prime(u: f64) -> f64 {
    u.exp_m1()
}

/// Convex dual of [`tau`]:
///
/// * `+inf`                  for `u < -1`,
/// * `1`                     for `u = -1`,
/// * `(u+1) log(u+1) - u`    for `u > -1`.
///
/// Nonnegative, zero exactly at `u = 0`. The value at `-1` is the cost of
/// fully suppressing a unit-rate flow.
pub fn tau_star(u: f64) -> f64 {
    if u < -1.0 {
        f64::INFINITY
    } else if u == -1.0 {
        1.0
    } else if u.abs() < 1e-4 {
        // series: u^2/2 - u^3/6 + u^4/12, truncation below f64 precision here
        u * u * (0.5 + u * (-1.0 / 6.0 + u / 12.0))
    } else {
        (u + 1.0) * u.ln_1p() - u
    }
}

/// `|tau_star(u) - max_{v in grid} (u v - tau(v))|`, a test oracle for the
/// Legendre transform identity. Meaningful for `u >= -1` (to the left the
/// dual is infinite while any finite grid maximum is finite).
pub fn legendre_gap(u: f64, grid: impl Iterator<Item = f64>) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for v in grid {
        let val = u * v - tau(v);
        if val > best {
            best = val;
        }
    }
    (tau_star(u) - best).abs()
}

/// Uniform grid over `[lo, hi]` with the given step, inclusive of both ends.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(move |i| lo + step * i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tau_at_reference_points() {
        assert_eq!(tau(0.0), 0.0);
        assert_abs_diff_eq!(tau(1.0), std::f64::consts::E - 2.0, epsilon = 1e-15);
        // no catastrophic cancellation on the linear branch
        assert_abs_diff_eq!(tau(-30.0), 29.0 + (-30.0f64).exp(), epsilon = 1e-12);
        // quadratic leading term near zero
        assert_abs_diff_eq!(tau(1e-8), 0.5e-16, epsilon = 1e-22);
    }

    #[test]
    fn tau_star_at_reference_points() {
        assert_eq!(tau_star(-1.0), 1.0);
        assert_eq!(tau_star(0.0), 0.0);
        assert_eq!(tau_star(-2.0), f64::INFINITY);
        assert!(tau_star(-1.0 - 1e-12).is_infinite());
    }

    #[test]
    fn legendre_gap_examples() {
        let grid = || uniform_grid(-40.0, 40.0, 1e-3);
        assert!(legendre_gap(0.0, grid()) <= 1e-6);
        // analytic optimum v = log 2 for u = 1
        assert!(legendre_gap(1.0, grid()) <= 1e-5);
        assert!(legendre_gap(-0.5, grid()) <= 1e-5);
    }

    #[test]
    fn tau_star_nonnegative_and_grows() {
        for i in 0..2000 {
            let u = -0.999 + i as f64 * 0.01;
            let v = tau_star(u);
            assert!(v >= 0.0, "tau_star({u}) = {v}");
        }
    }

    #[test]
    fn youngs_inequality() {
        use proptest::prelude::*;
        proptest!(|(u in -0.999f64..8.0, v in -20.0f64..20.0)| {
            // u v <= tau(v) + tau*(u), with equality at v = log(1+u)
            prop_assert!(u * v <= tau(v) + tau_star(u) + 1e-9);
        });
    }

    #[test]
    fn convexity_sampled() {
        let us = [-0.9, -0.3, 0.0, 0.4, 1.3, 4.0, 9.5];
        for &a in &us {
            for &b in &us {
                for k in 0..=10 {
                    let l = k as f64 / 10.0;
                    let mid = l * a + (1.0 - l) * b;
                    assert!(tau(mid) <= l * tau(a) + (1.0 - l) * tau(b) + 1e-12);
                    assert!(tau_star(mid) <= l * tau_star(a) + (1.0 - l) * tau_star(b) + 1e-12);
                }
            }
        }
    }
}
