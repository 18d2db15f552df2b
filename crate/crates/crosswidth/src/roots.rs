//! Bracketed scalar root finding.

use num_traits::Float;

/// Brent's method on `[a, b]` with `f(a)` and `f(b)` of opposite sign (or zero).
/// Iterates until the bracket is below `tol` or stops shrinking.
pub fn brent<T: Float, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T) -> Option<T> {
    let two = T::one() + T::one();
    let half = T::one() / two;
    let three = two + T::one();
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == T::zero() {
        return Some(a);
    }
    if fb == T::zero() {
        return Some(b);
    }
    if (fa > T::zero()) == (fb > T::zero()) || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if (fb > T::zero()) == (fc > T::zero()) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * T::epsilon() * b.abs() + half * tol;
        let xm = half * (c - b);
        if xm.abs() <= tol1 || fb == T::zero() {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = three * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol1 {
            b + d
        } else if xm > T::zero() {
            b + tol1
        } else {
            b - tol1
        };
        fb = f(b);
    }
    Some(b)
}

/// Sign changes (and exact zeros) of `f` on a uniform grid of `n` intervals.
pub fn brackets<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let n = n.max(2);
    let step = (hi - lo) / n as f64;
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(x0);
    for i in 1..=n {
        let x1 = if i == n { hi } else { lo + step * i as f64 };
        let f1 = f(x1);
        if f0 == 0.0 {
            out.push((x0, x0));
        } else if f1 != 0.0 && (f0 > 0.0) != (f1 > 0.0) {
            out.push((x0, x1));
        }
        if i == n && f1 == 0.0 {
            out.push((x1, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}
