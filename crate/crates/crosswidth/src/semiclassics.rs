//! Transfer matrices, probability amplitudes, the monodromy matrix,
//! pseudo-resonances and width coefficients.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma;

use crate::geometry::{build_graph, EdgeAction, Graph, GeometryError, Link, PathSeq};
use crate::model::{validate_structure, Channel, CrossingPoint, ModelError, Problem, StructureReport};
use crate::quadrature::{piece_action, stationary_phase_mu, refine_root, ActionFn, QuadError};
use crate::roots::brent;
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, thiserror::Error)]
pub enum SemiError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("linear system is singular")]
    SingularSystem,
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("argument principle counts {arg_count} zeros, Newton found {roots}")]
    CountMismatch { arg_count: i64, roots: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Off-diagonal scale `omega` of the transfer matrix at a crossing, for the
/// vertex with momentum sign `sign`.
pub fn omega(c: &CrossingPoint, sign: i8, calib: f64) -> C64 {
    let m = c.m as f64;
    let mu = stationary_phase_mu(c.m, f64::from(sign) * c.dv);
    let fact = gamma(m + 2.0);
    let mag = (2.0 * fact / c.dv.abs()).powf(1.0 / (m + 1.0))
        * (c.xi * c.xi).powf(-m / (2.0 * (m + 1.0)))
        * gamma((m + 2.0) / (m + 1.0));
    mu * mag * c.u(sign).conj() * calib
}

/// `T = Id + h^{1/(m+1)} (0, -i conj(omega); -i omega, 0)`, indexed `[out][in]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub t: [[C64; 2]; 2],
    pub crossing: usize,
    pub h: f64,
}

pub fn transfer_matrix(c: &CrossingPoint, crossing: usize, sign: i8, h: f64, calib: f64) -> TransferMatrix {
    let w = omega(c, sign, calib);
    let s = h.powf(1.0 / (c.m as f64 + 1.0));
    let one = C64::new(1.0, 0.0);
    TransferMatrix {
        t: [[one, -I * w.conj() * s], [-I * w * s, one]],
        crossing,
        h,
    }
}

/// Everything derived once from a problem: validated structure, graph and `A'(E0)`.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub problem: Problem,
    pub report: StructureReport,
    pub graph: Graph,
    pub action: ActionFn,
    pub a_prime0: f64,
    pub calib: f64,
}

impl Analysis {
    pub fn new(problem: Problem) -> Result<Analysis, SemiError> {
        let report = validate_structure(&problem)?;
        let graph = build_graph(&report)?;
        let action = ActionFn::for_problem(&problem);
        let a_prime0 = action.derivative(problem.e0)?;
        Ok(Analysis {
            problem,
            report,
            graph,
            action,
            a_prime0,
            calib: 1.0,
        })
    }

    pub fn with_calib(mut self, calib: f64) -> Self {
        self.calib = calib;
        self
    }

    pub fn with_graph(&self, graph: Graph) -> Analysis {
        Analysis {
            graph,
            ..self.clone()
        }
    }

    pub fn m0(&self) -> usize {
        self.report.m0
    }

    /// `(m0 + 3)/(m0 + 1)`, the width exponent.
    pub fn width_exponent(&self) -> f64 {
        let m = self.m0() as f64;
        (m + 3.0) / (m + 1.0)
    }

    pub fn box_bounds(&self, h: f64) -> (f64, f64) {
        let l = self.problem.l * h;
        (self.problem.e0 - l, self.problem.e0 + l)
    }

    pub fn transfer(&self, vertex: usize, h: f64) -> TransferMatrix {
        let v = self.graph.vertices[vertex];
        transfer_matrix(&self.graph.crossings[v.crossing], v.crossing, v.sign, h, self.calib)
    }

    /// Edge actions and transfer matrices frozen at one energy.
    pub fn at(&self, e: C64, h: f64) -> Result<EnergyEval<'_>, SemiError> {
        let actions = self.graph.edge_actions(&self.problem, e.re)?;
        let tau = (0..self.graph.vertices.len()).map(|v| self.transfer(v, h).t).collect();
        Ok(EnergyEval {
            an: self,
            e,
            h,
            actions,
            tau,
        })
    }
}

/// Phase data of the graph at a fixed (complex) energy.
#[derive(Debug, Clone)]
pub struct EnergyEval<'a> {
    an: &'a Analysis,
    pub e: C64,
    pub h: f64,
    pub actions: Vec<EdgeAction>,
    tau: Vec<[[C64; 2]; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Full,
    First,
    Second,
}

/// How a path is delimited for [`EnergyEval::probability_amplitude`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Span {
    /// From the source vertex of the first edge to the target vertex of the last.
    Edges,
    /// From the base point of the first edge to the base point of the last.
    Bases,
    /// Closed loop through every edge, back to the first.
    Cycle,
}

impl EnergyEval<'_> {
    fn phase(&self, edge: usize, part: Part) -> C64 {
        let a = &self.actions[edge];
        let (s, ds) = match part {
            Part::Full => (a.s, a.ds),
            Part::First => (a.first, a.dfirst),
            Part::Second => (a.second, a.dsecond),
        };
        let (n1, n2) = self.an.graph.edges[edge].maslov_halves();
        let nu = match part {
            Part::Full => n1 + n2,
            Part::First => n1,
            Part::Second => n2,
        };
        let arg = C64::new(s, self.e.im * ds) / self.h;
        (I * arg).exp() * C64::from_polar(1.0, -PI * nu as f64 / 2.0)
    }

    /// Transfer entry for passing vertex `v` from channel `from` to channel `to`.
    pub fn tau(&self, v: usize, from: Channel, to: Channel) -> C64 {
        self.tau[v][to.index()][from.index()]
    }

    fn junction(&self, a: usize, b: usize) -> C64 {
        let g = &self.an.graph;
        self.tau(g.edges[a].target, g.edges[a].channel, g.edges[b].channel)
    }

    /// Amplitude of a generalized trajectory: phases, Maslov factors and transfer entries.
    pub fn probability_amplitude(&self, path: &PathSeq, span: Span) -> C64 {
        let g = &self.an.graph;
        let es = &path.edges;
        let n = es.len();
        if n == 0 {
            return C64::new(1.0, 0.0);
        }
        let mut amp = C64::new(1.0, 0.0);
        for w in es.windows(2) {
            amp *= self.junction(w[0], w[1]);
        }
        if let Some(t) = path.tail {
            let last = es[n - 1];
            let v = g.tails[t].attach.expect("attached tail");
            debug_assert_eq!(v, g.edges[last].target);
            amp *= self.tau(v, g.edges[last].channel, Channel::Two);
            amp *= self.phase(es[0], Part::Second);
            for &e in &es[1..] {
                amp *= self.phase(e, Part::Full);
            }
            return amp;
        }
        match span {
            Span::Edges => {
                for &e in es {
                    amp *= self.phase(e, Part::Full);
                }
            }
            Span::Cycle => {
                amp *= self.junction(es[n - 1], es[0]);
                for &e in es {
                    amp *= self.phase(e, Part::Full);
                }
            }
            Span::Bases => {
                if n == 1 {
                    return C64::new(1.0, 0.0);
                }
                amp *= self.phase(es[0], Part::Second);
                for &e in &es[1..n - 1] {
                    amp *= self.phase(e, Part::Full);
                }
                amp *= self.phase(es[n - 1], Part::First);
            }
        }
        amp
    }

    /// `m_{e,e'}`: amplitude from the base of `e'` to the base of `e`.
    pub fn monodromy(&self) -> DMatrix<C64> {
        let g = &self.an.graph;
        let n = g.edges.len();
        DMatrix::from_fn(n, n, |e, ep| {
            if g.consecutive(ep, e) {
                self.junction(ep, e) * self.phase(ep, Part::Second) * self.phase(e, Part::First)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `det(I - M)` by LU.
    pub fn det(&self) -> C64 {
        let m = self.monodromy();
        (DMatrix::identity(m.nrows(), m.ncols()) - m).lu().determinant()
    }

    /// `det(I - M)` as a sum over sets of disjoint edge-simple cycles.
    pub fn det_cycle_expansion(&self) -> C64 {
        let m = self.monodromy();
        let cycles = self.an.graph.edge_cycles();
        let weights: Vec<C64> = cycles
            .iter()
            .map(|c| {
                let k = c.len();
                (0..k).map(|i| m[(c[(i + 1) % k], c[i])]).product()
            })
            .collect();
        fn rec(i: usize, used: u64, cycles: &[Vec<usize>], w: &[C64]) -> C64 {
            if i == cycles.len() {
                return C64::new(1.0, 0.0);
            }
            let mut total = rec(i + 1, used, cycles, w);
            let mask: u64 = cycles[i].iter().fold(0, |acc, &e| acc | (1 << e));
            if mask & used == 0 {
                total -= w[i] * rec(i + 1, used | mask, cycles, w);
            }
            total
        }
        rec(0, 0, &cycles, &weights)
    }

    /// `alpha = (I - M~)^{-1} delta_{e0}` with row `e0` of `M` removed.
    pub fn amplitude_vector(&self) -> Result<DVector<C64>, SemiError> {
        let g = &self.an.graph;
        let n = g.edges.len();
        let mut mt = self.monodromy();
        mt.row_mut(g.e0).fill(C64::new(0.0, 0.0));
        let a = DMatrix::identity(n, n) - mt;
        let mut rhs = DVector::zeros(n);
        rhs[g.e0] = C64::new(1.0, 0.0);
        a.lu().solve(&rhs).ok_or(SemiError::SingularSystem)
    }

    /// Spectral radius of `M~` (row `e0` removed).
    pub fn reduced_spectral_radius(&self) -> f64 {
        let mut mt = self.monodromy();
        mt.row_mut(self.an.graph.e0).fill(C64::new(0.0, 0.0));
        mt.schur()
            .eigenvalues()
            .map(|ev| ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
            .unwrap_or(f64::NAN)
    }

    /// Amplitude on `tail` assembled from the per-edge vector `alpha`.
    pub fn tail_amplitude(&self, tail: usize, alpha: &DVector<C64>) -> C64 {
        let g = &self.an.graph;
        let Some(v) = g.tails[tail].attach else {
            return C64::new(0.0, 0.0);
        };
        g.incoming[v]
            .iter()
            .filter_map(|l| match l {
                Some(Link::Edge(e)) => Some(*e),
                _ => None,
            })
            .map(|e| self.tau(v, g.edges[e].channel, Channel::Two) * self.phase(e, Part::Second) * alpha[e])
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthVariant {
    OneSwitch,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailAmplitude {
    pub tail: usize,
    pub amplitude: C64,
    pub paths: Vec<(PathSeq, C64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidthBreakdown {
    pub e: f64,
    pub h: f64,
    pub d: f64,
    pub tails: Vec<TailAmplitude>,
    pub variant: WidthVariant,
}

/// Width coefficient `D(E)` so that `Im z = -D h^{(m0+3)/(m0+1)}`.
pub fn width_coefficient(an: &Analysis, e: f64, h: f64, variant: WidthVariant) -> Result<WidthBreakdown, SemiError> {
    let ev = an.at(C64::new(e, 0.0), h)?;
    let g = &an.graph;
    let alpha = match variant {
        WidthVariant::Full => Some(ev.amplitude_vector()?),
        WidthVariant::OneSwitch => None,
    };
    let mut tails = Vec::new();
    for t in g.outgoing_tails() {
        if g.tails[t].attach.is_none() {
            continue;
        }
        let (amplitude, paths) = match &alpha {
            Some(a) => (ev.tail_amplitude(t, a), Vec::new()),
            None => {
                let paths: Vec<(PathSeq, C64)> = g
                    .paths_one_switch(t)
                    .into_iter()
                    .map(|p| {
                        let a = ev.probability_amplitude(&p, Span::Bases);
                        (p, a)
                    })
                    .collect();
                (paths.iter().map(|(_, a)| a).sum(), paths)
            }
        };
        tails.push(TailAmplitude {
            tail: t,
            amplitude,
            paths,
        });
    }
    let sum: f64 = tails.iter().map(|t| t.amplitude.norm_sqr()).sum();
    let m0 = an.m0() as f64;
    let d = h.powf(-2.0 / (m0 + 1.0)) / (2.0 * an.a_prime0.abs()) * sum;
    Ok(WidthBreakdown {
        e,
        h,
        d,
        tails,
        variant,
    })
}

/// Bohr-Sommerfeld energies `A(E) = (2k+1) pi h` inside the box around E0.
pub fn bohr_sommerfeld(p: &Problem, h: f64) -> Result<Vec<f64>, SemiError> {
    bohr_sommerfeld_with(&ActionFn::for_problem(p), p, h)
}

pub fn bohr_sommerfeld_with(action: &ActionFn, p: &Problem, h: f64) -> Result<Vec<f64>, SemiError> {
    if !(h > 0.0) {
        return Err(SemiError::Invalid("h must be positive".into()));
    }
    let l = p.l * h;
    let (_, vmin) = action.bottom();
    let ceiling = p
        .v1
        .eval_real(p.window.0)
        .unwrap_or(f64::INFINITY)
        .min(p.v1.eval_real(p.window.1).unwrap_or(f64::INFINITY));
    let lo = (p.e0 - l).max(vmin);
    let hi = (p.e0 + l).min(ceiling - 1e-9);
    if hi <= lo {
        return Ok(Vec::new());
    }
    let a_lo = action.action(lo)?;
    let a_hi = action.action(hi)?;
    let k0 = ((a_lo / (PI * h) - 1.0) / 2.0).ceil() as i64;
    let k1 = ((a_hi / (PI * h) - 1.0) / 2.0).floor() as i64;
    let mut out = Vec::new();
    for k in k0..=k1 {
        let target = (2 * k + 1) as f64 * PI * h;
        let f = |e: f64| action.action(e).map(|a| a - target).unwrap_or(f64::NAN);
        if let Some(e) = brent(f, lo, hi, 0.0) {
            if e >= p.e0 - l && e <= p.e0 + l {
                out.push(e);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoResonance {
    pub e: C64,
    pub seed: f64,
    pub residual: f64,
    pub newton_iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoReport {
    pub h: f64,
    pub seeds: Vec<f64>,
    /// One entry per seed; duplicates are dropped.
    pub roots: Vec<PseudoResonance>,
    /// Roots inside the box.
    pub in_box: usize,
    /// Winding number of `det(I - M)` around the box.
    pub arg_count: i64,
}

fn det_at(an: &Analysis, e: C64, h: f64) -> Result<C64, SemiError> {
    Ok(an.at(e, h)?.det())
}

/// Damped two-dimensional Newton on `det(I - M(E))` from a real seed.
pub fn refine_pseudo(an: &Analysis, seed: f64, h: f64) -> Result<PseudoResonance, SemiError> {
    let tol = an.problem.tol.newton_tol;
    let d = 1e-3 * h;
    let mut z = C64::new(seed, 0.0);
    let mut f = det_at(an, z, h)?;
    let mut iters = 0;
    let mut converged = f.norm() <= tol;
    while !converged && iters < 50 {
        iters += 1;
        let fx = (det_at(an, z + d, h)? - det_at(an, z - d, h)?) / (2.0 * d);
        let fy = (det_at(an, z + I * d, h)? - det_at(an, z - I * d, h)?) / (2.0 * d);
        // J [dx, dy] = -f in real coordinates
        let (a, b, c, dd) = (fx.re, fy.re, fx.im, fy.im);
        let det = a * dd - b * c;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = -(dd * f.re - b * f.im) / det;
        let dy = -(-c * f.re + a * f.im) / det;
        let mut step = C64::new(dx, dy);
        let mut next = z + step;
        let mut fnext = det_at(an, next, h)?;
        let mut halvings = 0;
        while fnext.norm() > f.norm() && halvings < 20 {
            step *= 0.5;
            next = z + step;
            fnext = det_at(an, next, h)?;
            halvings += 1;
        }
        z = next;
        f = fnext;
        if f.norm() <= tol {
            converged = true;
        } else if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            converged = f.norm() <= 1e3 * tol;
            break;
        }
    }
    Ok(PseudoResonance {
        e: z,
        seed,
        residual: f.norm(),
        newton_iters: iters,
        converged,
    })
}

/// Winding number of `det(I - M)` along the boundary of the box.
pub fn argument_count(an: &Analysis, h: f64, nodes: usize) -> Result<i64, SemiError> {
    let l = an.problem.l * h;
    let e0 = an.problem.e0;
    let corners = [
        C64::new(e0 - l, -l),
        C64::new(e0 + l, -l),
        C64::new(e0 + l, l),
        C64::new(e0 - l, l),
    ];
    let per_side = (nodes / 4).max(8);
    let mut pts = Vec::with_capacity(4 * per_side);
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        for j in 0..per_side {
            pts.push(a + (b - a) * (j as f64 / per_side as f64));
        }
    }
    let vals: Vec<C64> = pts.iter().map(|&z| det_at(an, z, h)).collect::<Result<_, _>>()?;
    let mut total = 0.0;
    for k in 0..vals.len() {
        let (a, b) = (vals[k], vals[(k + 1) % vals.len()]);
        total += (b / a).arg();
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Pseudo-resonances from every Bohr-Sommerfeld seed, with the argument-principle count.
pub fn pseudo_resonances(an: &Analysis, h: f64) -> Result<PseudoReport, SemiError> {
    let seeds = bohr_sommerfeld_with(&an.action, &an.problem, h)?;
    let mut roots: Vec<PseudoResonance> = Vec::new();
    for &s in &seeds {
        let r = refine_pseudo(an, s, h)?;
        if r.converged && roots.iter().any(|q| q.converged && (q.e - r.e).norm() < h * h) {
            continue;
        }
        roots.push(r);
    }
    let l = an.problem.l * h;
    let in_box = roots
        .iter()
        .filter(|r| r.converged && (r.e.re - an.problem.e0).abs() <= l && r.e.im.abs() <= l)
        .count();
    let arg_count = argument_count(an, h, 4096)?;
    Ok(PseudoReport {
        h,
        seeds,
        roots,
        in_box,
        arg_count,
    })
}

/// Orientation and turning point of the single Gamma2 arc in the simple-model topology.
struct SimpleModel {
    crossing: CrossingPoint,
    sigma: f64,
    c0: f64,
}

fn simple_model(an: &Analysis) -> Result<SimpleModel, SemiError> {
    let r = &an.report;
    if r.crossings.len() != 1 || an.graph.edges.len() != 3 {
        return Err(SemiError::TopologyMismatch(format!(
            "{} crossings and {} edges, expected 1 and 3",
            r.crossings.len(),
            an.graph.edges.len()
        )));
    }
    let crossing = r.crossings[0];
    let comp = r
        .components
        .iter()
        .find(|c| c.contains(crossing.x))
        .ok_or_else(|| SemiError::TopologyMismatch("crossing outside {V2 <= E0}".into()))?;
    let (sigma, c0) = match (comp.lo, comp.hi) {
        (None, Some(c)) => (1.0, c.x),
        (Some(c), None) => (-1.0, c.x),
        _ => {
            return Err(SemiError::TopologyMismatch(
                "Gamma2 arc must have exactly one turning point".into(),
            ))
        }
    };
    Ok(SimpleModel { crossing, sigma, c0 })
}

fn v2_turning_at(p: &Problem, e: f64, c0: f64) -> Result<f64, SemiError> {
    let mut d = 0.05;
    for _ in 0..30 {
        if let Some(x) = refine_root(&p.v2, e, c0 - d, c0 + d) {
            return Ok(x);
        }
        d *= 1.5;
    }
    Err(QuadError::NoTurningPoints { e }.into())
}

/// Action of the mixed cycle (Gamma1 arc plus Gamma2 arc) of the simple model.
pub fn mixed_cycle_action(an: &Analysis, e: f64) -> Result<f64, SemiError> {
    let sm = simple_model(an)?;
    let p = &an.problem;
    let tol = p.tol.quad_tol;
    let (a, b) = an.action.walls(e)?;
    let c = v2_turning_at(p, e, sm.c0)?;
    let x = sm.crossing.x;
    let s = if sm.sigma > 0.0 {
        piece_action(&p.v1, e, a, x, tol)? + piece_action(&p.v2, e, x, c, tol)?
    } else {
        piece_action(&p.v1, e, x, b, tol)? + piece_action(&p.v2, e, c, x, tol)?
    };
    Ok(2.0 * s)
}

/// `eta = mu (2(m+1)!/|dv|)^{1/(m+1)} Gamma((m+2)/(m+1))`.
pub fn eta(c: &CrossingPoint) -> C64 {
    let m = c.m as f64;
    stationary_phase_mu(c.m, c.dv) * (2.0 * gamma(m + 2.0) / c.dv.abs()).powf(1.0 / (m + 1.0)) * gamma((m + 2.0) / (m + 1.0))
}

/// Explicit width coefficient of the single-crossing-pair model.
pub fn closed_form_width_example(an: &Analysis, e: f64, h: f64) -> Result<f64, SemiError> {
    let sm = simple_model(an)?;
    let c = &sm.crossing;
    let m = c.m as f64;
    let k2 = (c.xi * c.xi).powf(-m / (m + 1.0));
    let s_gamma = mixed_cycle_action(an, e)?;
    let z = eta(c) * c.u_plus.conj() * C64::from_polar(1.0, sm.sigma * s_gamma / (2.0 * h));
    Ok(an.calib * an.calib * 2.0 * k2 / an.a_prime0.abs() * z.im * z.im)
}

/// Energies in `[lo, hi]` where the simple-model width coefficient vanishes.
pub fn vanishing_energies(an: &Analysis, h: f64, window: (f64, f64)) -> Result<Vec<f64>, SemiError> {
    let sm = simple_model(an)?;
    let c = &sm.crossing;
    if c.u_plus.norm() == 0.0 {
        return Ok(Vec::new());
    }
    let offset = 2.0 * eta(c).arg() - 2.0 * c.u_plus.im.atan2(c.u_plus.re);
    let g = |e: f64| mixed_cycle_action(an, e).map(|s| sm.sigma * s / h + offset);
    let (lo, hi) = window;
    let (g_lo, g_hi) = (g(lo)?, g(hi)?);
    let (k0, k1) = if g_lo <= g_hi { (g_lo, g_hi) } else { (g_hi, g_lo) };
    let mut out = Vec::new();
    for k in (k0 / (2.0 * PI)).ceil() as i64..=(k1 / (2.0 * PI)).floor() as i64 {
        let target = 2.0 * PI * k as f64;
        let f = |e: f64| g(e).map(|v| v - target).unwrap_or(f64::NAN);
        if let Some(e) = brent(f, lo, hi, 0.0) {
            out.push(e);
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceRecord {
    pub seed: f64,
    pub pseudo: PseudoResonance,
    pub d: f64,
    pub im_pred: f64,
    pub m0: usize,
    pub h: f64,
}

/// Per-seed pseudo-resonance and predicted width.
pub fn resonance_table(an: &Analysis, h: f64) -> Result<Vec<ResonanceRecord>, SemiError> {
    let seeds = bohr_sommerfeld_with(&an.action, &an.problem, h)?;
    let expo = an.width_exponent();
    seeds
        .into_iter()
        .map(|seed| {
            let pseudo = refine_pseudo(an, seed, h)?;
            let d = width_coefficient(an, seed, h, WidthVariant::OneSwitch)?.d;
            Ok(ResonanceRecord {
                seed,
                pseudo,
                d,
                im_pred: -d * h.powf(expo),
                m0: an.m0(),
                h,
            })
        })
        .collect()
}
