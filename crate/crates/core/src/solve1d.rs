//! Internal scalar root-finding: Brent's method plus a bisection fallback
//! for monotone functions. Both are derivative-free, which matters because
//! the residuals here are assembled from incomplete gammas whose derivatives
//! we'd rather not maintain separately.

use crate::scalar::Real;

/// Brent's method on a bracketing interval `[a, b]` with `f(a)·f(b) ≤ 0`.
///
/// Combines bisection, secant, and inverse quadratic interpolation; always
/// keeps a shrinking bracket, so it converges for any continuous `f`.
/// Terminates when the bracket is below `xtol` plus a machine-sized relative
/// term, or when the residual is exactly zero.
pub(crate) fn brent<R: Real>(
    f: impl Fn(R) -> R,
    a0: R,
    b0: R,
    fa0: R,
    fb0: R,
    xtol: R,
    max_iters: usize,
) -> R {
    let two = R::of(2.0);
    let three = R::of(3.0);
    let (mut a, mut b, mut fa, mut fb) = (a0, b0, fa0, fb0);
    debug_assert!(fa * fb <= R::zero(), "brent requires a sign change");
    if fa.abs() < fb.abs() {
        core::mem::swap(&mut a, &mut b);
        core::mem::swap(&mut fa, &mut fb);
    }
    // `b` is the best iterate, `c` the previous one.
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for _ in 0..max_iters {
        if fb == R::zero() {
            return b;
        }
        if fa.signum() == fb.signum() {
            // Re-anchor the contrapoint.
            a = c;
            fa = fc;
            d = b - a;
            e = d;
        }
        if fa.abs() < fb.abs() {
            c = b;
            b = a;
            a = c;
            fc = fb;
            fb = fa;
            fa = fc;
        }
        let tol = two * R::epsilon() * b.abs() + xtol;
        let mid = (a - b) / two;
        if mid.abs() <= tol {
            return b;
        }
        if e.abs() >= tol && fc.abs() > fb.abs() {
            // Attempt interpolation: secant if two points, inverse quadratic
            // if three distinct ones.
            let s = fb / fc;
            let (mut p, mut q) = if a == c {
                (two * mid * s, R::one() - s)
            } else {
                let q0 = fc / fa;
                let r = fb / fa;
                (
                    s * (two * mid * q0 * (q0 - r) - (b - c) * (r - R::one())),
                    (q0 - R::one()) * (r - R::one()) * (s - R::one()),
                )
            };
            if p > R::zero() {
                q = -q;
            }
            p = p.abs();
            let accept = two * p < (three * mid * q - (tol * q).abs()).min(e.abs() * q.abs());
            if accept {
                e = d;
                d = p / q;
            } else {
                d = mid;
                e = d;
            }
        } else {
            d = mid;
            e = d;
        }
        c = b;
        fc = fb;
        b += if d.abs() > tol {
            d
        } else if mid > R::zero() {
            tol
        } else {
            -tol
        };
        fb = f(b);
    }
    b
}

/// Root of a nondecreasing function known to change sign on `[lo, hi]`
/// (`f(lo) ≤ 0 ≤ f(hi)`), by plain bisection to absolute tolerance `xtol`.
/// Used for the derivative of the convex 1-D bound objectives, where
/// monotonicity is structural and robustness beats the last factor of two
/// in iteration count.
pub(crate) fn bisect_nondecreasing<R: Real>(
    f: impl Fn(R) -> R,
    mut lo: R,
    mut hi: R,
    xtol: R,
) -> R {
    let half = R::of(0.5);
    while hi - lo > xtol + R::epsilon() * hi.abs() {
        let mid = half * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval at floating-point resolution
        }
        if f(mid) < R::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    half * (lo + hi)
}
