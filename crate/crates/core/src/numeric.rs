//! One-dimensional search helpers shared by the solvers.

use crate::scalar::{lit, Real};

/// Maximizes a unimodal `f` on `[lo, hi]` by golden-section search.
///
/// Returns the best abscissa seen together with its value. The endpoints are
/// always evaluated, so corner maxima are found exactly.
pub fn golden_section_max<T: Real, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, xtol: T) -> (T, T) {
    let inv_phi = lit::<T>(0.618_033_988_749_894_8);
    let (mut a, mut b) = (lo, hi);
    let mut best = (lo, f(lo));
    let fb = f(hi);
    if fb > best.1 {
        best = (hi, fb);
    }
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        if fc > best.1 {
            best = (c, fc);
        }
        if fd > best.1 {
            best = (d, fd);
        }
    }
    best
}

/// Finds the zero of a non-increasing function `g` on `[lo, hi]`, where
/// `g(lo) >= 0 >= g(hi)`.
///
/// `g` returns the value and its derivative; Newton steps are taken when they
/// stay inside the current bracket, bisection otherwise.
pub fn root_decreasing<T: Real, G: FnMut(T) -> (T, T)>(mut g: G, lo: T, hi: T) -> T {
    let two = lit::<T>(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut x = (a + b) / two;
    for _ in 0..300 {
        let (v, dv) = g(x);
        if v == T::zero() {
            return x;
        }
        if v > T::zero() {
            a = x;
        } else {
            b = x;
        }
        if b - a <= T::epsilon() * lit(4.0) * (a.abs() + b.abs()) || b - a <= T::min_positive_value() {
            break;
        }
        let newton = if dv < T::zero() && dv.is_finite() { x - v / dv } else { T::nan() };
        x = if newton > a && newton < b && newton.is_finite() {
            newton
        } else {
            (a + b) / two
        };
        // A Newton step that barely moves inside a wide bracket is replaced by
        // bisection so the bracket keeps shrinking.
        if (x - a).min(b - x) <= T::epsilon() * x.abs() && b - a > lit::<T>(1e-6) * (a.abs() + b.abs()) {
            x = (a + b) / two;
        }
    }
    x
}

/// Bisection for the sign change of a non-increasing `g` on `[lo, hi]`.
pub fn bisect_decreasing<T: Real, G: FnMut(T) -> T>(mut g: G, lo: T, hi: T, iters: usize) -> T {
    let two = lit::<T>(2.0);
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iters {
        let m = (a + b) / two;
        if m <= a || m >= b {
            break;
        }
        if g(m) > T::zero() {
            a = m;
        } else {
            b = m;
        }
    }
    (a + b) / two
}
