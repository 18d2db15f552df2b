// Explicit Runge-Kutta 8(5,3) with step-size control, complex state.

use super::tableau::{A, B, BHH, C, ER};
use crate::C64;

#[derive(Debug, Clone, Copy)]
pub(crate) struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub hmax: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum OdeFailure {
    NonFinite { t: f64 },
    StepUnderflow { t: f64 },
    StepLimit,
}

fn axpy<const N: usize>(y: &[C64; N], h: f64, coef: &[f64], k: &[[C64; N]]) -> [C64; N] {
    let mut out = *y;
    for (c, kk) in coef.iter().zip(k) {
        if *c != 0.0 {
            let s = h * c;
            for i in 0..N {
                out[i] += kk[i] * s;
            }
        }
    }
    out
}

/// Integrate from `t0` to `t1 > t0`. Error scales are shared within each
/// `groups` range so a component passing through zero does not stall the step.
/// `h` carries the step size between calls.
pub(crate) fn integrate<const N: usize, F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: [C64; N],
    ctl: &StepControl,
    groups: &[(usize, usize)],
    h: &mut f64,
) -> Result<[C64; N], OdeFailure>
where
    F: FnMut(f64, &[C64; N]) -> [C64; N],
{
    let mut t = t0;
    let mut y = y0;
    let mut step = h.min(ctl.hmax).min(t1 - t0);
    if !(step > 0.0) {
        step = (t1 - t0).min(ctl.hmax);
    }
    let mut k = [[C64::new(0.0, 0.0); N]; 12];
    let mut last_rejected = false;
    for _ in 0..ctl.max_steps {
        if t >= t1 {
            return Ok(y);
        }
        let last = t + step >= t1;
        if last {
            step = t1 - t;
        }
        k[0] = f(t, &y);
        for s in 1..12 {
            let ys = axpy(&y, step, &A[s][..s], &k[..s]);
            k[s] = f(t + C[s] * step, &ys);
        }
        let mut bk = [C64::new(0.0, 0.0); N];
        let mut ek = [C64::new(0.0, 0.0); N];
        for s in 0..12 {
            for i in 0..N {
                bk[i] += k[s][i] * B[s];
                ek[i] += k[s][i] * ER[s];
            }
        }
        let mut ynew = y;
        for i in 0..N {
            ynew[i] += bk[i] * step;
        }
        if ynew.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(OdeFailure::NonFinite { t });
        }
        let (mut err, mut err2) = (0.0, 0.0);
        for &(lo, hi) in groups {
            let mag = |v: &[C64; N]| v[lo..hi].iter().map(|z| z.norm()).fold(0.0, f64::max);
            let sk = ctl.atol + ctl.rtol * mag(&y).max(mag(&ynew));
            for i in lo..hi {
                let e2 = bk[i] - k[0][i] * BHH[0] - k[8][i] * BHH[1] - k[11][i] * BHH[2];
                err += (ek[i] / sk).norm_sqr();
                err2 += (e2 / sk).norm_sqr();
            }
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = step * err * (1.0 / (N as f64 * deno)).sqrt();
        let fac11 = err.powf(0.125);
        let fac = (fac11 / 0.9).clamp(1.0 / 6.0, 1.0 / 0.333);
        if err <= 1.0 {
            t = if last { t1 } else { t + step };
            y = ynew;
            let mut next = (step / fac).min(ctl.hmax);
            if last_rejected {
                next = next.min(step);
            }
            if !last {
                *h = next;
            }
            step = next;
            last_rejected = false;
        } else {
            step /= (fac11 / 0.9).min(1.0 / 0.333);
            last_rejected = true;
            if step <= 1e-14 * t.abs().max(1.0) {
                return Err(OdeFailure::StepUnderflow { t });
            }
        }
    }
    if t >= t1 {
        Ok(y)
    } else {
        Err(OdeFailure::StepLimit)
    }
}
