//! Root finding and derivative-free maximization used by the equilibrium
//! and social-optimization solvers.

use crate::error::{Error, Result};

/// Bisection for a function with `f(lo) >= 0 >= f(hi)`.
///
/// The solvers call this on net-benefit curves that are nonincreasing in the
/// join probability; callers are expected to have verified the sign bracket.
pub fn bisect_decreasing<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: u32,
) -> Result<f64> {
    debug_assert!(lo <= hi);
    for _ in 0..max_iter {
        if hi - lo < tol {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::ConvergenceFailure { iterations: max_iter })
}

/// Dense sign scan over `[lo, hi]`: counts sign changes of `f` and returns
/// the first bracket `[a, b]` with `f(a) >= 0 > f(b)`, if any.
pub fn scan_sign_changes<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    step: f64,
) -> (u32, Option<(f64, f64)>) {
    let mut changes = 0;
    let mut bracket = None;
    let mut x = lo;
    let mut fx = f(x);
    while x < hi {
        let y = (x + step).min(hi);
        let fy = f(y);
        if (fx >= 0.0) != (fy >= 0.0) {
            changes += 1;
            if bracket.is_none() && fx >= 0.0 {
                bracket = Some((x, y));
            }
        }
        x = y;
        fx = fy;
    }
    (changes, bracket)
}

/// Checks that `f` is nonincreasing on a coarse grid over `[lo, hi]`.
pub fn nonincreasing_on_grid<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: u32) -> bool {
    let mut prev = f(lo);
    for i in 1..=points {
        let x = lo + (hi - lo) * i as f64 / points as f64;
        let v = f(x);
        if v > prev + 1e-9 * (1.0 + prev.abs()) {
            return false;
        }
        prev = v;
    }
    true
}

/// Solves `f(x) = 0` on `[lo, hi]` for a net-benefit style curve:
/// returns `hi` when `f(hi) >= 0`, `lo` when `f(lo) <= 0`, and otherwise the
/// bisection root. A grid monotonicity check guards the bracket; on
/// violation the root is re-bracketed with a dense sign scan first.
pub fn solve_benefit_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Result<f64> {
    if f(hi) >= 0.0 {
        return Ok(hi);
    }
    if f(lo) <= 0.0 {
        return Ok(lo);
    }
    if nonincreasing_on_grid(&f, lo, hi, 20) {
        bisect_decreasing(&f, lo, hi, 1e-10, 200)
    } else {
        let (_, bracket) = scan_sign_changes(&f, lo, hi, 1e-3);
        let (a, b) = bracket.unwrap_or((lo, hi));
        bisect_decreasing(&f, a, b, 1e-10, 200)
    }
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Grid argmax with first-wins tie breaking (smallest index among ties).
pub fn grid_argmax<F: Fn(f64) -> f64>(f: F, grid: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut best_x = f64::NAN;
    let mut best_v = f64::NEG_INFINITY;
    for x in grid {
        let v = f(x);
        if v > best_v + 1e-12 || best_x.is_nan() {
            best_v = v;
            best_x = x;
        }
    }
    (best_x, best_v)
}
