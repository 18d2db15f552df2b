//! Action integrals, oscillatory integrals and the degenerate stationary-phase formula.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_traits::Float;
use statrs::function::gamma::gamma;

use crate::exprs::{Expr, TaylorJet};
use crate::model::{Problem, ToleranceSet};
use crate::roots::brent;
use crate::C64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadError {
    #[error("no turning points of V = {e} in the window")]
    NoTurningPoints { e: f64 },
    #[error("node budget of {budget} exhausted")]
    BudgetExceeded { budget: usize },
    #[error("non-finite integrand")]
    NonFinite,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

/// Integral value with its error estimate and evaluation count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub evals: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn c<T: Float>(v: f64) -> T {
    T::from(v).expect("representable constant")
}

fn gk15<T: Float, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = (b - a) * c(0.5);
    let mid = (a + b) * c(0.5);
    let fc = f(mid);
    let mut k = fc * c(WGK[7]);
    let mut g = fc * c(WG[3]);
    for i in 0..7 {
        let dx = half * c(XGK[i]);
        let s = f(mid - dx) + f(mid + dx);
        k = k + s * c(WGK[i]);
        if i % 2 == 1 {
            g = g + s * c(WG[i / 2]);
        }
    }
    (k * half, (k - g).abs() * half)
}

const MAX_GK_EVALS: usize = 200_000;

/// Adaptive Gauss-Kronrod 7/15 quadrature to absolute tolerance `tol`.
pub fn gauss_kronrod<T: Float, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T) -> QuadResult<T> {
    let mut evals = 0;
    let (value, error) = gk_rec(&mut f, a, b, tol, 40, &mut evals);
    QuadResult { value, error, evals }
}

fn gk_rec<T: Float, F: FnMut(T) -> T>(
    f: &mut F,
    a: T,
    b: T,
    tol: T,
    depth: u32,
    evals: &mut usize,
) -> (T, T) {
    let (k, err) = gk15(f, a, b);
    *evals += 15;
    let floor = T::epsilon() * c(50.0) * k.abs();
    if err <= tol.max(floor) || depth == 0 || !err.is_finite() || *evals > MAX_GK_EVALS {
        return (k, err);
    }
    let m = (a + b) * c(0.5);
    let half_tol = tol * c(0.5);
    let (l, el) = gk_rec(f, a, m, half_tol, depth - 1, evals);
    let (r, er) = gk_rec(f, m, b, half_tol, depth - 1, evals);
    (l + r, el + er)
}

/// `int_lo^hi f(x) dx` under `x = lo + (hi - lo)(1 - cos t)/2`, which removes
/// square-root and inverse-square-root endpoint singularities.
pub fn integrate_cosine_map<T: Float, F: FnMut(T) -> T>(
    mut f: F,
    lo: T,
    hi: T,
    tol: T,
) -> QuadResult<T> {
    let half = (hi - lo) * c(0.5);
    let pi: T = c(PI);
    let g = |t: T| {
        let s = (t * c(0.5)).sin();
        let co = (t * c(0.5)).cos();
        // 1 - cos t and 1 + cos t without cancellation
        let x = if t <= pi * c(0.5) {
            lo + half * c(2.0) * s * s
        } else {
            hi - half * c(2.0) * co * co
        };
        f(x) * half * t.sin()
    };
    gauss_kronrod(g, T::zero(), pi, tol)
}

/// `int sqrt(max(E - V, 0)) dx` over `[lo, hi]`.
pub fn sqrt_integral<T: Float, V: FnMut(T) -> T>(mut v: V, e: T, lo: T, hi: T, tol: T) -> QuadResult<T> {
    integrate_cosine_map(|x| (e - v(x)).max(T::zero()).sqrt(), lo, hi, tol)
}

/// `int dx / (2 sqrt(E - V))` over `[lo, hi]`, the energy derivative of [`sqrt_integral`].
pub fn inv_sqrt_integral<T: Float, V: FnMut(T) -> T>(mut v: V, e: T, lo: T, hi: T, tol: T) -> QuadResult<T> {
    integrate_cosine_map(
        |x| {
            let d = e - v(x);
            if d > T::zero() {
                c::<T>(0.5) / d.sqrt()
            } else {
                T::zero()
            }
        },
        lo,
        hi,
        tol,
    )
}

fn real_eval(e: &Expr) -> impl Fn(f64) -> f64 + '_ {
    move |x| e.eval_real(x).unwrap_or(f64::NAN)
}

fn finite(r: QuadResult<f64>) -> Result<QuadResult<f64>, QuadError> {
    if r.value.is_finite() {
        Ok(r)
    } else {
        Err(QuadError::NonFinite)
    }
}

/// Action of one monotone piece of a trajectory, `int |xi| dx` over `[lo, hi]`.
pub fn piece_action(v: &Expr, e: f64, lo: f64, hi: f64, tol: f64) -> Result<f64, QuadError> {
    if hi <= lo {
        return Ok(0.0);
    }
    finite(sqrt_integral(real_eval(v), e, lo, hi, tol)).map(|r| r.value)
}

/// Energy derivative of [`piece_action`] at fixed non-turning endpoints.
pub fn piece_action_derivative(v: &Expr, e: f64, lo: f64, hi: f64, tol: f64) -> Result<f64, QuadError> {
    if hi <= lo {
        return Ok(0.0);
    }
    finite(inv_sqrt_integral(real_eval(v), e, lo, hi, tol)).map(|r| r.value)
}

/// Root of `V(x) = e` in `[lo, hi]`, refined to machine precision.
pub fn refine_root(v: &Expr, e: f64, lo: f64, hi: f64) -> Option<f64> {
    let f = |x: f64| v.eval_real(x).map(|y| y - e).unwrap_or(f64::NAN);
    brent(f, lo, hi, 0.0)
}

/// Cached evaluator of the loop action `A(E)` of the well of `V1`.
#[derive(Debug, Clone)]
pub struct ActionFn {
    v: Expr,
    grid: Vec<(f64, f64)>,
    imin: usize,
    tol: f64,
    root_tol: f64,
}

impl ActionFn {
    pub fn new(v: &Expr, window: (f64, f64), tol: &ToleranceSet) -> Self {
        let n = tol.scan_points.max(16);
        let grid: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let x = window.0 + (window.1 - window.0) * i as f64 / n as f64;
                (x, v.eval_real(x).unwrap_or(f64::INFINITY))
            })
            .collect();
        let imin = (0..grid.len())
            .min_by(|&i, &j| grid[i].1.total_cmp(&grid[j].1))
            .unwrap_or(0);
        ActionFn {
            v: v.clone(),
            grid,
            imin,
            tol: tol.quad_tol,
            root_tol: tol.root_tol,
        }
    }

    pub fn for_problem(p: &Problem) -> Self {
        ActionFn::new(&p.v1, p.window, &p.tol)
    }

    /// Location and value of the well bottom on the scan grid.
    pub fn bottom(&self) -> (f64, f64) {
        self.grid[self.imin]
    }

    /// Turning points `a(E) < b(E)` bracketing the well bottom.
    pub fn walls(&self, e: f64) -> Result<(f64, f64), QuadError> {
        let g = &self.grid;
        let left = (0..self.imin).rev().find(|&i| g[i].1 > e);
        let right = (self.imin + 1..g.len()).find(|&i| g[i].1 > e);
        let (Some(l), Some(r)) = (left, right) else {
            return Err(QuadError::NoTurningPoints { e });
        };
        let a = refine_root(&self.v, e, g[l].0, g[l + 1].0).ok_or(QuadError::NoTurningPoints { e })?;
        let b = refine_root(&self.v, e, g[r - 1].0, g[r].0).ok_or(QuadError::NoTurningPoints { e })?;
        Ok((a, b))
    }

    fn collapsed(&self, e: f64) -> bool {
        e - self.grid[self.imin].1 <= self.root_tol
    }

    /// Quadrature details of `A(E)`.
    pub fn action_detailed(&self, e: f64) -> Result<QuadResult<f64>, QuadError> {
        if self.collapsed(e) {
            return Ok(QuadResult { value: 0.0, error: 0.0, evals: 0 });
        }
        let (a, b) = self.walls(e)?;
        let r = finite(sqrt_integral(real_eval(&self.v), e, a, b, 0.5 * self.tol))?;
        Ok(QuadResult {
            value: 2.0 * r.value,
            error: 2.0 * r.error,
            evals: r.evals,
        })
    }

    /// `A(E) = 2 int_a^b sqrt(E - V1) dx`.
    pub fn action(&self, e: f64) -> Result<f64, QuadError> {
        self.action_detailed(e).map(|r| r.value)
    }

    /// `A'(E) = int_a^b dx / sqrt(E - V1)`.
    pub fn derivative(&self, e: f64) -> Result<f64, QuadError> {
        let (a, b) = self.walls(e)?;
        let r = finite(inv_sqrt_integral(real_eval(&self.v), e, a, b, 0.5 * self.tol))?;
        Ok(2.0 * r.value)
    }
}

pub fn action_loop(p: &Problem, e: f64) -> Result<f64, QuadError> {
    ActionFn::for_problem(p).action(e)
}

pub fn action_derivative(p: &Problem, e: f64) -> Result<f64, QuadError> {
    ActionFn::for_problem(p).derivative(e)
}

fn gl16() -> &'static ([f64; 16], [f64; 16]) {
    static NODES: OnceLock<([f64; 16], [f64; 16])> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = 16;
        let mut x = [0.0; 16];
        let mut w = [0.0; 16];
        for i in 0..n {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (x, w)
    })
}

/// Default node budget of [`oscillatory_integral`].
pub const NODE_BUDGET: usize = 2_000_000;

/// `int_I sigma(x) exp(i phi(x)/h) dx` by Gauss-Legendre panels that each span
/// at most half a local wavelength.
pub fn oscillatory_integral<S, P>(
    sigma: S,
    phi: P,
    interval: (f64, f64),
    h: f64,
    budget: usize,
) -> Result<C64, QuadError>
where
    S: Fn(f64) -> C64,
    P: Fn(f64) -> f64,
{
    let (a, b) = interval;
    if !(h > 0.0) {
        return Err(QuadError::PreconditionViolated("h must be positive".into()));
    }
    let (xs, ws) = gl16();
    let mut total = C64::new(0.0, 0.0);
    let mut comp = C64::new(0.0, 0.0);
    let mut used = 0usize;
    let mut x = a;
    while x < b {
        let d = 1e-6 * (1.0 + x.abs());
        let slope = (phi(x + d) - phi(x - d)) / (2.0 * d);
        let mut w = (PI * h / slope.abs().max(1e-300)).min(0.02).min(b - x);
        while (phi(x + w) - phi(x)).abs() > 1.5 * PI * h && w > 1e-15 {
            w *= 0.5;
        }
        let half = 0.5 * w;
        let mid = x + half;
        let mut panel = C64::new(0.0, 0.0);
        for (t, wt) in xs.iter().zip(ws) {
            let xi = mid + half * t;
            panel += sigma(xi) * C64::from_polar(1.0, phi(xi) / h) * *wt;
        }
        // Kahan summation keeps 1e5+ panels from drifting
        let y = panel * half - comp;
        let t = total + y;
        comp = (t - total) - y;
        total = t;
        used += 16;
        if used > budget {
            return Err(QuadError::BudgetExceeded { budget });
        }
        x += w;
    }
    if !(total.re.is_finite() && total.im.is_finite()) {
        return Err(QuadError::NonFinite);
    }
    Ok(total)
}

/// Phase factor of the degenerate stationary point: `e^{i pi s/(2(m+1))}` for
/// odd `m`, `cos(pi/(2(m+1)))` for even `m`.
pub fn stationary_phase_mu(m: usize, s: f64) -> C64 {
    let q = 2.0 * (m as f64 + 1.0);
    if m % 2 == 1 {
        C64::from_polar(1.0, PI * s.signum() / q)
    } else {
        C64::new((PI / q).cos(), 0.0)
    }
}

/// Leading term of `int sigma e^{i phi/h}` at a stationary point of order `m`.
pub fn stationary_phase(sigma0: C64, phi_jet: &TaylorJet, m: usize, h: f64, calib: f64) -> Result<C64, QuadError> {
    if m == 0 || phi_jet.coeffs.len() < m + 2 {
        return Err(QuadError::PreconditionViolated(format!(
            "need a jet of order at least {}",
            m + 1
        )));
    }
    let top = phi_jet.coeffs[m + 1];
    let scale = top.abs().max(1.0);
    if top == 0.0 || phi_jet.coeffs[1..=m].iter().any(|v| v.abs() > 1e-12 * scale) {
        return Err(QuadError::PreconditionViolated(format!(
            "phase is not stationary of order {m} at {}",
            phi_jet.x0
        )));
    }
    let dk = phi_jet.derivative(m + 1);
    let mp1 = m as f64 + 1.0;
    let fact = gamma(mp1 + 1.0);
    let omega = stationary_phase_mu(m, dk)
        * sigma0
        * (fact / dk.abs()).powf(1.0 / mp1)
        * gamma((mp1 + 1.0) / mp1);
    Ok(omega * calib * C64::from_polar(1.0, phi_jet.coeffs[0] / h) * h.powf(1.0 / mp1))
}
