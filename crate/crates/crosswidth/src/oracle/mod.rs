//! Direct numerical resonances of the full system.
//!
//! The ODE is integrated along complex-scaled rays from both ends, inward
//! to a matching point, with decaying/outgoing boundary data. Resonances are
//! zeros of the matching determinant, located by Muller's method.

mod dop853;
mod tableau;

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector4};

use crate::exprs::{eval, eval_with_derivative, Expr};
use crate::model::{well_walls, ModelError, Problem};
use crate::semiclassics::bohr_sommerfeld;
use crate::C64;
use dop853::{integrate, OdeFailure, StepControl};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("integration produced a non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step limit exceeded")]
    StepLimit,
    #[error("Muller iteration did not converge after {iters} iterations (last step {last_step:e})")]
    NotConverged { iters: usize, last_step: f64 },
    #[error("resonance moves with the scaling angle: Im E = {im:e}, {im_minus:e} (theta - d), {im_plus:e} (theta + d)")]
    ThetaUnstable { im: f64, im_minus: f64, im_plus: f64 },
    #[error("matching matrix has no usable null vector")]
    Singular,
    #[error("need at least {need} points, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("no Bohr-Sommerfeld energy in the box")]
    NoSeed,
    #[error("invalid oracle setting: {0}")]
    Invalid(String),
}

impl From<OdeFailure> for OracleError {
    fn from(f: OdeFailure) -> Self {
        match f {
            OdeFailure::NonFinite { t } => OracleError::NonFinite { t },
            OdeFailure::StepUnderflow { t } => OracleError::StepUnderflow { t },
            OdeFailure::StepLimit => OracleError::StepLimit,
        }
    }
}

/// Contour and solver settings. `None` fields are derived from the well.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Complex scaling angle of the outer rays.
    pub theta: f64,
    /// Start of the rays; defaults to `max(4, |a0| + 1, |b0| + 1)`.
    pub r0: Option<f64>,
    /// Outer end of the rays, measured along their real projection.
    pub x_max: f64,
    /// Matching point; defaults to the well midpoint plus 0.2.
    pub xm: Option<f64>,
    /// Renormalization spacing along the contour.
    pub checkpoint: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_iter: usize,
    /// Re-solve at `theta +- theta_delta` and require agreement of `Im E`.
    pub theta_check: bool,
    pub theta_delta: f64,
    pub theta_rel_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            theta: 0.3,
            r0: None,
            x_max: 12.0,
            xm: None,
            checkpoint: 0.25,
            rtol: 1e-12,
            atol: 1e-300,
            max_iter: 60,
            theta_check: true,
            theta_delta: 0.05,
            theta_rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: C64,
    dir: C64,
    len: f64,
}

impl Segment {
    fn x(&self, t: f64) -> C64 {
        self.start + self.dir * t
    }
}

#[derive(Debug, Clone, Copy)]
struct Coeffs {
    v1: C64,
    v2: C64,
    r0: C64,
    r1: C64,
    r1p: C64,
}

fn coeffs(p: &Problem, x: C64) -> Option<Coeffs> {
    let ev = |e: &Expr| eval(e, x).ok();
    let (r1, r1p) = eval_with_derivative(&p.r1, x).ok()?;
    Some(Coeffs {
        v1: ev(&p.v1)?,
        v2: ev(&p.v2)?,
        r0: ev(&p.r0)?,
        r1,
        r1p,
    })
}

const NAN: C64 = C64::new(f64::NAN, f64::NAN);

/// Derivative of one solution column `(v1, h v1', v2, h v2')` in x.
fn column_rhs(c: &Coeffs, e: C64, h: f64, y: &[C64]) -> [C64; 4] {
    let (v1, p1, v2, p2) = (y[0], y[1], y[2], y[3]);
    [
        p1 / h,
        (c.v1 - e) * v1 / h + c.r0 * v2 + c.r1 * p2,
        p2 / h,
        (c.v2 - e) * v2 / h + (c.r0 - c.r1p * h) * v1 - c.r1 * p1,
    ]
}

type Cols = Matrix4x2<C64>;

/// Matching determinant of one problem at fixed `h`.
///
/// The solution pairs are renormalized at checkpoints by `Y <- Y S^{-1}`,
/// where `S` is a 2x2 row block of `Y`. The rows are chosen once at a
/// reference energy, so `W` stays meromorphic in `E` with unchanged zeros.
#[derive(Debug, Clone)]
pub struct Shooter<'a> {
    p: &'a Problem,
    pub h: f64,
    pub cfg: OracleConfig,
    pub xm: f64,
    pub a0: f64,
    pub b0: f64,
    left: Vec<Segment>,
    right: Vec<Segment>,
    pivots: [Vec<(usize, usize)>; 2],
    pub e_ref: C64,
}

impl<'a> Shooter<'a> {
    pub fn new(p: &'a Problem, h: f64, cfg: &OracleConfig, e_ref: C64) -> Result<Shooter<'a>, OracleError> {
        if !(h > 0.0) {
            return Err(OracleError::Invalid("h must be positive".into()));
        }
        if !(cfg.theta > 0.0 && cfg.theta < std::f64::consts::FRAC_PI_2) {
            return Err(OracleError::Invalid("theta must lie in (0, pi/2)".into()));
        }
        let (a, b) = well_walls(p, p.e0)?;
        let (a0, b0) = (a.x, b.x);
        let r0 = cfg.r0.unwrap_or_else(|| 4f64.max(a0.abs() + 1.0).max(b0.abs() + 1.0));
        let xm = cfg.xm.unwrap_or(0.5 * (a0 + b0) + 0.2);
        if !(cfg.x_max > r0) || !(xm > -r0 && xm < r0) {
            return Err(OracleError::Invalid(format!(
                "contour needs -R0 < xm < R0 < X (R0 = {r0}, xm = {xm}, X = {})",
                cfg.x_max
            )));
        }
        let s = cfg.x_max - r0;
        let eith = C64::from_polar(1.0, cfg.theta);
        let left = vec![
            Segment { start: -r0 - eith * s, dir: eith, len: s },
            Segment { start: C64::new(-r0, 0.0), dir: C64::new(1.0, 0.0), len: r0 + xm },
        ];
        let right = vec![
            Segment { start: r0 + eith * s, dir: -eith, len: s },
            Segment { start: C64::new(r0, 0.0), dir: C64::new(-1.0, 0.0), len: r0 - xm },
        ];
        let mut sh = Shooter {
            p,
            h,
            cfg: cfg.clone(),
            xm,
            a0,
            b0,
            left,
            right,
            pivots: [Vec::new(), Vec::new()],
            e_ref,
        };
        for side in 0..2 {
            let mut record = Vec::new();
            sh.propagate(side, e_ref, Some(&mut record))?;
            sh.pivots[side] = record;
        }
        Ok(sh)
    }

    fn segments(&self, side: usize) -> &[Segment] {
        if side == 0 {
            &self.left
        } else {
            &self.right
        }
    }

    fn end_columns(&self, side: usize, e: C64) -> Result<Cols, OracleError> {
        let x = self.segments(side)[0].start;
        let c = coeffs(self.p, x).ok_or(OracleError::NonFinite { t: 0.0 })?;
        let eith = C64::from_polar(1.0, self.cfg.theta);
        let mut y = Cols::zeros();
        for (j, v) in [c.v1, c.v2].into_iter().enumerate() {
            let k = (v - e).sqrt();
            let outward = (k * eith).re.signum();
            let s = if side == 0 { outward } else { -outward };
            y[(2 * j, j)] = C64::new(1.0, 0.0);
            y[(2 * j + 1, j)] = k * s;
        }
        Ok(y)
    }

    fn propagate(&self, side: usize, e: C64, mut record: Option<&mut Vec<(usize, usize)>>) -> Result<Cols, OracleError> {
        let ctl = StepControl {
            rtol: self.cfg.rtol,
            atol: self.cfg.atol,
            hmax: self.cfg.checkpoint,
            max_steps: 2_000_000,
        };
        let mut y = self.end_columns(side, e)?;
        let mut step = 0.1 * self.h;
        let mut idx = 0;
        for seg in self.segments(side) {
            let n = ((seg.len / self.cfg.checkpoint).ceil() as usize).max(1);
            let rhs = |t: f64, s: &[C64; 8]| -> [C64; 8] {
                let Some(c) = coeffs(self.p, seg.x(t)) else {
                    return [NAN; 8];
                };
                let a = column_rhs(&c, e, self.h, &s[..4]);
                let b = column_rhs(&c, e, self.h, &s[4..]);
                let mut out = [a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]];
                for z in &mut out {
                    *z *= seg.dir;
                }
                out
            };
            for i in 0..n {
                let (t0, t1) = (seg.len * i as f64 / n as f64, seg.len * (i + 1) as f64 / n as f64);
                let mut state = [C64::new(0.0, 0.0); 8];
                for r in 0..4 {
                    state[r] = y[(r, 0)];
                    state[4 + r] = y[(r, 1)];
                }
                let out = integrate(rhs, t0, t1, state, &ctl, &[(0, 4), (4, 8)], &mut step)?;
                for r in 0..4 {
                    y[(r, 0)] = out[r];
                    y[(r, 1)] = out[4 + r];
                }
                let (i, j) = match record.as_deref_mut() {
                    Some(rec) => {
                        let best = best_rows(&y);
                        rec.push(best);
                        best
                    }
                    None => self.pivots[side][idx],
                };
                let block = Matrix2::new(y[(i, 0)], y[(i, 1)], y[(j, 0)], y[(j, 1)]);
                y *= block.try_inverse().ok_or(OracleError::Singular)?;
                idx += 1;
            }
        }
        Ok(y)
    }

    /// Solution columns at the matching point: decaying/outgoing on the left and right.
    pub fn columns(&self, e: C64) -> Result<(Cols, Cols), OracleError> {
        Ok((self.propagate(0, e, None)?, self.propagate(1, e, None)?))
    }

    /// Matching determinant `W(E) = det[Y_L Y_R]`.
    pub fn w(&self, e: C64) -> Result<C64, OracleError> {
        let (l, r) = self.columns(e)?;
        Ok(matching_matrix(&l, &r).determinant())
    }
}

/// Row pair whose 2x2 block of `y` has the largest determinant.
fn best_rows(y: &Cols) -> (usize, usize) {
    let mut best = (0, 1);
    let mut size = -1.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let d = (y[(i, 0)] * y[(j, 1)] - y[(i, 1)] * y[(j, 0)]).norm();
            if d > size {
                size = d;
                best = (i, j);
            }
        }
    }
    best
}

fn matching_matrix(l: &Cols, r: &Cols) -> Matrix4<C64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<4, 2>(0, 0).copy_from(l);
    m.fixed_view_mut::<4, 2>(0, 2).copy_from(r);
    m
}

/// Muller's method on a complex function, stopping when `|dz| <= tol`.
pub fn muller<F>(mut f: F, z: [C64; 3], tol: f64, max_iter: usize) -> Result<(C64, usize), OracleError>
where
    F: FnMut(C64) -> Result<C64, OracleError>,
{
    let [mut x0, mut x1, mut x2] = z;
    let (mut f0, mut f1, mut f2) = (f(x0)?, f(x1)?, f(x2)?);
    let mut last_step = f64::INFINITY;
    for it in 1..=max_iter {
        if f2 == C64::new(0.0, 0.0) {
            return Ok((x2, it));
        }
        let q = (x2 - x1) / (x1 - x0);
        let a = q * f2 - q * (1.0 + q) * f1 + q * q * f0;
        let b = (2.0 * q + 1.0) * f2 - (1.0 + q) * (1.0 + q) * f1 + q * q * f0;
        let c = (1.0 + q) * f2;
        let disc = (b * b - 4.0 * a * c).sqrt();
        let den = if (b + disc).norm() > (b - disc).norm() { b + disc } else { b - disc };
        let x3 = if den.norm() == 0.0 {
            x2 + (x2 - x1)
        } else {
            x2 - (x2 - x1) * 2.0 * c / den
        };
        last_step = (x3 - x2).norm();
        (x0, x1, x2) = (x1, x2, x3);
        (f0, f1) = (f1, f2);
        f2 = f(x3)?;
        if last_step <= tol {
            return Ok((x2, it));
        }
    }
    Err(OracleError::NotConverged { iters: max_iter, last_step })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResonance {
    pub e: C64,
    pub seed: C64,
    pub h: f64,
    pub iterations: usize,
    /// `Im E` at `theta -+ theta_delta`, when checked.
    pub theta_im: Option<(f64, f64)>,
}

/// Stopping tolerance on `|dE|` for a resonance of expected width order `expo`.
pub fn muller_tol(h: f64, expo: f64) -> f64 {
    1e-14f64.max(1e-6 * h.powf(expo))
}

fn solve_at(p: &Problem, h: f64, cfg: &OracleConfig, seed: C64, tol: f64) -> Result<(C64, usize), OracleError> {
    let sh = Shooter::new(p, h, cfg, seed)?;
    let d = 1e-3 * h;
    muller(|e| sh.w(e), [seed - d, seed + d, seed + C64::new(0.0, -d)], tol, cfg.max_iter)
}

/// Resonance near `seed`; `expo` sets the stopping tolerance.
pub fn refine_resonance(p: &Problem, h: f64, seed: C64, expo: f64, cfg: &OracleConfig) -> Result<OracleResonance, OracleError> {
    let tol = muller_tol(h, expo);
    let (e, iterations) = solve_at(p, h, cfg, seed, tol)?;
    let mut theta_im = None;
    if cfg.theta_check {
        let mut ims = [0.0; 2];
        for (k, s) in [-1.0, 1.0].into_iter().enumerate() {
            let c = OracleConfig {
                theta: cfg.theta + s * cfg.theta_delta,
                ..cfg.clone()
            };
            ims[k] = solve_at(p, h, &c, e, tol)?.0.im;
        }
        let scale = e.im.abs().max(tol);
        if ims.iter().any(|im| (im - e.im).abs() > cfg.theta_rel_tol * scale) {
            return Err(OracleError::ThetaUnstable {
                im: e.im,
                im_minus: ims[0],
                im_plus: ims[1],
            });
        }
        theta_im = Some((ims[0], ims[1]));
    }
    Ok(OracleResonance {
        e,
        seed,
        h,
        iterations,
        theta_im,
    })
}

/// Bohr-Sommerfeld energy closest to E0.
pub fn nearest_seed(p: &Problem, h: f64) -> Result<f64, OracleError> {
    let seeds = bohr_sommerfeld(p, h).map_err(|e| OracleError::Invalid(e.to_string()))?;
    seeds
        .into_iter()
        .min_by(|a, b| (a - p.e0).abs().total_cmp(&(b - p.e0).abs()))
        .ok_or(OracleError::NoSeed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenWidth {
    /// `Im E` from the flux through the ends of `[x1, x2]`.
    pub im: f64,
    pub norm: f64,
    pub x1: f64,
    pub x2: f64,
}

/// Flux `Im[-h p1 conj(v1) - h p2 conj(v2) + h^2 r1 v2 conj(v1)]` of a state at real `x`.
fn flux(p: &Problem, h: f64, x: f64, y: &[C64]) -> Result<f64, OracleError> {
    let r1 = p.r1.eval_real(x).map_err(|source| ModelError::Domain { x, source })?;
    let (v1, p1, v2, p2) = (y[0], y[1], y[2], y[3]);
    Ok((-h * p1 * v1.conj() - h * p2 * v2.conj() + h * h * r1 * v2 * v1.conj()).im)
}

/// Width from the resonant state at `e` via the flux identity on
/// `[a0 - 0.5, b0 + 0.5]`.
pub fn width_from_state(sh: &Shooter<'_>, e: C64) -> Result<GreenWidth, OracleError> {
    let (l, r) = sh.columns(e)?;
    let m = matching_matrix(&l, &r);
    let svd = m.svd(false, true);
    let vt = svd.v_t.ok_or(OracleError::Singular)?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(OracleError::Singular)?;
    let c: Vector4<C64> = vt.row(imin).adjoint();
    let wl = l * c.fixed_rows::<2>(0);
    let wr = -(r * c.fixed_rows::<2>(2));
    let (x1, x2) = (sh.a0 - 0.5, sh.b0 + 0.5);
    let ctl = StepControl {
        rtol: sh.cfg.rtol,
        atol: sh.cfg.atol,
        hmax: sh.cfg.checkpoint,
        max_steps: 2_000_000,
    };
    let run = |w: nalgebra::Vector4<C64>, dir: f64, len: f64| -> Result<[C64; 5], OracleError> {
        let rhs = |t: f64, s: &[C64; 5]| -> [C64; 5] {
            let x = C64::new(sh.xm + dir * t, 0.0);
            let Some(c) = coeffs(sh.p, x) else {
                return [NAN; 5];
            };
            let d = column_rhs(&c, e, sh.h, &s[..4]);
            let dens = s[0].norm_sqr() + s[2].norm_sqr();
            [d[0] * dir, d[1] * dir, d[2] * dir, d[3] * dir, C64::new(dens, 0.0)]
        };
        let mut step = 0.1 * sh.h;
        let y0 = [w[0], w[1], w[2], w[3], C64::new(0.0, 0.0)];
        Ok(integrate(rhs, 0.0, len, y0, &ctl, &[(0, 4), (4, 5)], &mut step)?)
    };
    let yl = run(wl, -1.0, sh.xm - x1)?;
    let yr = run(wr, 1.0, x2 - sh.xm)?;
    let norm = yl[4].re + yr[4].re;
    let im = (flux(sh.p, sh.h, x2, &yr[..4])? - flux(sh.p, sh.h, x1, &yl[..4])?) / norm;
    Ok(GreenWidth { im, norm, x1, x2 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

/// Least-squares slope of `log|Im E|` against `log h`.
pub fn exponent_fit(hs: &[f64], ims: &[f64]) -> Result<ExponentFit, OracleError> {
    let n = hs.len().min(ims.len());
    if n < 4 {
        return Err(OracleError::InsufficientData { need: 4, got: n });
    }
    let xs: Vec<f64> = hs[..n].iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = ims[..n].iter().map(|v| v.abs().ln()).collect();
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(OracleError::Invalid("h and Im E must be nonzero and finite".into()));
    }
    let nf = n as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / nf, ys.iter().sum::<f64>() / nf);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(OracleError::Invalid("h values must differ".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ExponentFit {
        slope,
        intercept,
        residual,
    })
}
