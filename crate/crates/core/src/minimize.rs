//! Deterministic scalar minimization helpers.
//!
//! Everything in the solver that searches over a control or a momentum is a
//! one-dimensional minimization of a continuous function on an interval.
//! These helpers are the single implementation used throughout: a
//! golden-section loop, a coarse-scan-then-refine combination for functions
//! that are only piecewise unimodal, and a bracket grower for coercive
//! functions on the whole line.

/// Inverse golden ratio, `(sqrt(5) - 1) / 2`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` on `[a, b]`.
///
/// Shrinks the interval until its width is below `tol` (absolute), then
/// returns the best evaluated point. The endpoints are always evaluated, so
/// the result is never worse than `min(f(a), f(b))`. Deterministic: the
/// sequence of probe points depends only on `(a, b, tol)` and the comparison
/// outcomes.
pub fn golden_min(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    debug_assert!(a <= b);
    let mut best_x = a;
    let mut best_f = f(a);
    let fb = f(b);
    if fb < best_f {
        best_x = b;
        best_f = fb;
    }
    let mut lo = a;
    let mut hi = b;
    if hi - lo <= tol {
        return (best_x, best_f);
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        if x1 > x2 {
            // Interval width underflowed; stop before the probes cross.
            break;
        }
    }
    if f1 < best_f {
        best_x = x1;
        best_f = f1;
    }
    if f2 < best_f {
        best_x = x2;
        best_f = f2;
    }
    (best_x, best_f)
}

/// Coarse scan over `n` uniform points on `[a, b]`, then golden-section
/// refinement between the neighbors of the best sample.
///
/// The scan guards against functions that are not unimodal on the whole
/// interval; the refinement recovers full accuracy when the function is
/// unimodal near its global minimum.
pub fn scan_then_golden(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize, tol: f64) -> (f64, f64) {
    debug_assert!(n >= 3);
    if b - a <= tol {
        let fa = f(a);
        let fb = f(b);
        return if fb < fa { (b, fb) } else { (a, fa) };
    }
    let mut best_i = 0;
    let mut best_f = f64::INFINITY;
    let last = n - 1;
    for i in 0..n {
        let x = a + (b - a) * (i as f64 / last as f64);
        let fx = f(x);
        if fx < best_f {
            best_f = fx;
            best_i = i;
        }
    }
    let lo = if best_i == 0 {
        a
    } else {
        a + (b - a) * ((best_i - 1) as f64 / last as f64)
    };
    let hi = if best_i == last {
        b
    } else {
        a + (b - a) * ((best_i + 1) as f64 / last as f64)
    };
    let (x, fx) = golden_min(f, lo, hi, tol);
    if fx < best_f {
        (x, fx)
    } else {
        (a + (b - a) * (best_i as f64 / last as f64), best_f)
    }
}

/// Grows a symmetric bracket `[-r, r]` until the minimum of `f` is interior.
///
/// Returns the bracket radius, or `None` once `r` exceeds `r_max` (the
/// function is then considered non-coercive). A bracket is accepted when the
/// best of a coarse scan sits strictly inside the interval and both endpoint
/// values exceed it by a margin.
pub fn grow_bracket(f: impl Fn(f64) -> f64, r_max: f64) -> Option<f64> {
    let mut r = 1.0;
    while r <= r_max {
        let n = 65;
        let mut best_i = 0;
        let mut best_f = f64::INFINITY;
        for i in 0..n {
            let x = -r + 2.0 * r * (i as f64 / (n - 1) as f64);
            let fx = f(x);
            if fx < best_f {
                best_f = fx;
                best_i = i;
            }
        }
        let margin = 1e-6 * (1.0 + best_f.abs());
        let interior = best_i > 0 && best_i < n - 1;
        if interior && f(-r) >= best_f + margin && f(r) >= best_f + margin {
            return Some(r);
        }
        r *= 2.0;
    }
    None
}

/// Leftmost point of the sublevel set `{ x in [a, x0] : f(x) <= level }`.
///
/// `f` must be nonincreasing-then-nondecreasing on `[a, x0]` with
/// `f(x0) <= level` (convexity suffices). Used to break ties toward the
/// smallest minimizer: after a golden-section search finds the minimum value,
/// bisecting the left edge of a barely-super-level set yields the smallest
/// minimizer of flat-bottomed functions, and perturbs the argmin of strictly
/// convex functions by at most `sqrt(2 * tie_eps / f'')`.
pub fn leftmost_below(f: impl Fn(f64) -> f64, a: f64, x0: f64, level: f64, xtol: f64) -> f64 {
    if f(a) <= level {
        return a;
    }
    let mut lo = a; // f(lo) > level
    let mut hi = x0; // f(hi) <= level
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn golden_finds_quadratic_minimum() {
        // Argument accuracy of a comparison-based search is limited to
        // about sqrt(machine eps); the value is accurate to machine eps.
        let (x, fx) = golden_min(|x| (x - 0.3).powi(2) + 1.0, -2.0, 2.0, 1e-12);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(fx, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn golden_returns_endpoint_when_monotone() {
        let (x, fx) = golden_min(|x| x, 0.0, 1.0, 1e-12);
        assert_eq!(x, 0.0);
        assert_eq!(fx, 0.0);
        let (x, _) = golden_min(|x| -x, 0.0, 1.0, 1e-12);
        assert_eq!(x, 1.0);
    }

    #[test]
    fn scan_recovers_global_minimum_of_bimodal() {
        // Two wells; the right one is deeper. A bare golden-section from the
        // full interval could settle in the wrong well.
        let f = |x: f64| (x * x - 1.0).powi(2) - 0.1 * x;
        let (x, _) = scan_then_golden(f, -2.0, 2.0, 65, 1e-12);
        assert_abs_diff_eq!(x, 1.0125, epsilon = 1e-2);
    }

    #[test]
    fn bracket_grows_past_shifted_minimum() {
        let r = grow_bracket(|x| (x - 100.0).powi(2), 1e6).unwrap();
        assert!(r >= 128.0);
    }

    #[test]
    fn bracket_fails_for_linear() {
        assert!(grow_bracket(|x| x, 1e3).is_none());
    }

    #[test]
    fn leftmost_below_finds_flat_edge() {
        // min value 0 attained on [-1, 1].
        let f = |x: f64| (x.abs() - 1.0).max(0.0);
        let x = leftmost_below(f, -5.0, 0.0, 1e-12, 1e-12);
        assert_abs_diff_eq!(x, -1.0, epsilon = 1e-9);
    }
}
