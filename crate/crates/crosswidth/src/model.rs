//! Problem definition, structural validation, turning points and crossings.

use std::fmt;

use crate::exprs::{self, taylor_jet, Expr, ParseError};
use crate::roots::{brackets, brent};
use crate::scalar::DomainError;
use crate::C64;

pub mod fixtures;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("cannot parse `{field}`: {source}")]
    Parse {
        field: &'static str,
        #[source]
        source: ParseError,
    },
    #[error("evaluation failed at x = {x}: {source}")]
    Domain {
        x: f64,
        #[source]
        source: DomainError,
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("degenerate turning point at x = {x} (|V'| = {slope:e})")]
    DegenerateTurningPoint { x: f64, slope: f64 },
    #[error("crossing at x = {x} touches a turning point")]
    CrossingAtTurningPoint { x: f64 },
    #[error("no differing derivative up to order {k_max} at x = {x}")]
    ContactOrderOverflow { x: f64, k_max: usize },
    #[error("V1 has no simple well at E0 = {e0}: {detail}")]
    NoWell { e0: f64, detail: String },
    #[error("no crossing point below E0")]
    NoCrossing,
    #[error("structure validation failed: {}", .0.join("; "))]
    ValidationFailed(Vec<String>),
}

fn domain(x: f64) -> impl Fn(DomainError) -> ModelError {
    move |source| ModelError::Domain { x, source }
}

/// Numerical tolerances shared by every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceSet {
    pub root_tol: f64,
    pub contact_tol: f64,
    pub newton_tol: f64,
    pub quad_tol: f64,
    pub ode_tol: f64,
    pub scan_points: usize,
    /// Highest jet order used for contact-order detection.
    pub k_max: usize,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        ToleranceSet {
            root_tol: 1e-12,
            contact_tol: 1e-9,
            newton_tol: 1e-12,
            quad_tol: 1e-11,
            ode_tol: 1e-12,
            scan_points: 4096,
            k_max: 12,
        }
    }
}

impl ToleranceSet {
    pub fn check(&self) -> Result<(), ModelError> {
        let vals = [
            ("root_tol", self.root_tol),
            ("contact_tol", self.contact_tol),
            ("newton_tol", self.newton_tol),
            ("quad_tol", self.quad_tol),
            ("ode_tol", self.ode_tol),
        ];
        for (name, v) in vals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::Invalid(format!("{name} must be positive")));
            }
        }
        if self.scan_points < 2 {
            return Err(ModelError::Invalid("scan_points must be at least 2".into()));
        }
        if self.k_max == 0 {
            return Err(ModelError::Invalid("k_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    One,
    Two,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::One => 0,
            Channel::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn other(self) -> Channel {
        match self {
            Channel::One => Channel::Two,
            Channel::Two => Channel::One,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Side of the classically allowed interval a turning point bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Allowed region lies to the right.
    Left,
    /// Allowed region lies to the left.
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurningPoint {
    pub x: f64,
    pub channel: Channel,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingPoint {
    pub x: f64,
    pub xi: f64,
    pub m: usize,
    /// `V2^(m)(x) - V1^(m)(x)`.
    pub dv: f64,
    pub u_plus: C64,
    pub u_minus: C64,
}

impl CrossingPoint {
    /// `U(x, sign * xi)`.
    pub fn u(&self, sign: i8) -> C64 {
        if sign >= 0 {
            self.u_plus
        } else {
            self.u_minus
        }
    }
}

/// End of the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum End {
    MinusInf,
    PlusInf,
}

impl End {
    pub fn sign(self) -> i8 {
        match self {
            End::MinusInf => -1,
            End::PlusInf => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TailKind {
    Incoming,
    Outgoing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TailInfo {
    pub direction: End,
    pub xi_sign: i8,
    pub kind: TailKind,
}

impl TailInfo {
    pub fn new(direction: End, xi_sign: i8) -> Self {
        let outgoing = direction.sign() == xi_sign;
        TailInfo {
            direction,
            xi_sign,
            kind: if outgoing {
                TailKind::Outgoing
            } else {
                TailKind::Incoming
            },
        }
    }
}

/// A connected component of `{V2 <= E0}`; `None` bounds are unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub lo: Option<TurningPoint>,
    pub hi: Option<TurningPoint>,
}

impl Component {
    pub fn contains(&self, x: f64) -> bool {
        self.lo.is_none_or(|t| x > t.x) && self.hi.is_none_or(|t| x < t.x)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionFlag {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub e0: f64,
    pub a0: Option<TurningPoint>,
    pub b0: Option<TurningPoint>,
    pub v2_turning: Vec<TurningPoint>,
    pub components: Vec<Component>,
    pub crossings: Vec<CrossingPoint>,
    pub m0: usize,
    pub tails: Vec<TailInfo>,
    pub flags: Vec<AssumptionFlag>,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.flags.iter().all(|f| f.passed)
    }

    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        if self.passed() {
            return Ok(());
        }
        Err(ModelError::ValidationFailed(
            self.flags
                .iter()
                .filter(|f| !f.passed)
                .map(|f| format!("{}: {}", f.name, f.detail))
                .collect(),
        ))
    }

    pub fn well(&self) -> Option<(f64, f64)> {
        Some((self.a0?.x, self.b0?.x))
    }
}

/// The 2x2 system: potentials, coupling `r0 + i r1 hD`, reference energy and box.
#[derive(Debug, Clone)]
pub struct Problem {
    pub v1: Expr,
    pub v2: Expr,
    pub r0: Expr,
    pub r1: Expr,
    pub e0: f64,
    pub window: (f64, f64),
    /// Box half-size in units of h.
    pub l: f64,
    pub tol: ToleranceSet,
}

impl Problem {
    pub fn parse(
        v1: &str,
        v2: &str,
        r0: &str,
        r1: &str,
        e0: f64,
        window: (f64, f64),
        l: f64,
    ) -> Result<Problem, ModelError> {
        let p = |field, s: &str| exprs::parse(s).map_err(|source| ModelError::Parse { field, source });
        Problem::new(p("v1", v1)?, p("v2", v2)?, p("r0", r0)?, p("r1", r1)?, e0, window, l)
    }

    pub fn new(
        v1: Expr,
        v2: Expr,
        r0: Expr,
        r1: Expr,
        e0: f64,
        window: (f64, f64),
        l: f64,
    ) -> Result<Problem, ModelError> {
        if !(window.0 < window.1) || !window.0.is_finite() || !window.1.is_finite() {
            return Err(ModelError::Invalid("window must satisfy x_min < x_max".into()));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(ModelError::Invalid("L must be positive".into()));
        }
        if !e0.is_finite() {
            return Err(ModelError::Invalid("E0 must be finite".into()));
        }
        Ok(Problem {
            v1,
            v2,
            r0,
            r1,
            e0,
            window,
            l,
            tol: ToleranceSet::default(),
        })
    }

    pub fn with_tolerances(mut self, tol: ToleranceSet) -> Self {
        self.tol = tol;
        self
    }

    /// Same problem with the coupling switched off.
    pub fn decoupled(&self) -> Problem {
        Problem {
            r0: Expr::Num(0.0),
            r1: Expr::Num(0.0),
            ..self.clone()
        }
    }

    /// Mirror image under `x -> -x`. The coupling `r0 + i r1 hD` maps to
    /// `r0(-x) - i r1(-x) hD`.
    pub fn reflected(&self) -> Problem {
        let minus_x = Expr::Neg(Box::new(Expr::X));
        Problem {
            v1: self.v1.substitute(&minus_x),
            v2: self.v2.substitute(&minus_x),
            r0: self.r0.substitute(&minus_x),
            r1: if self.r1.is_literal_zero() {
                Expr::Num(0.0)
            } else {
                Expr::Neg(Box::new(self.r1.substitute(&minus_x)))
            },
            window: (-self.window.1, -self.window.0),
            ..self.clone()
        }
    }

    pub fn is_decoupled(&self) -> bool {
        self.r0.is_literal_zero() && self.r1.is_literal_zero()
    }

    pub fn potential(&self, ch: Channel) -> &Expr {
        match ch {
            Channel::One => &self.v1,
            Channel::Two => &self.v2,
        }
    }

    pub fn v(&self, ch: Channel, x: f64) -> Result<f64, ModelError> {
        self.potential(ch).eval_real(x).map_err(domain(x))
    }

    /// Symbol `U(x, xi) = r0(x) + i r1(x) xi`.
    pub fn u(&self, x: f64, xi: f64) -> Result<C64, ModelError> {
        let r0 = self.r0.eval_real(x).map_err(domain(x))?;
        let r1 = self.r1.eval_real(x).map_err(domain(x))?;
        Ok(C64::new(r0, r1 * xi))
    }
}

/// Simple roots of `V(x) = E` in the window, sorted.
pub fn turning_points(
    v: &Expr,
    channel: Channel,
    e: f64,
    window: (f64, f64),
    tol: &ToleranceSet,
) -> Result<Vec<TurningPoint>, ModelError> {
    let f = |x: f64| v.eval_real(x).map(|y| y - e).unwrap_or(f64::NAN);
    let mut out = Vec::new();
    for (lo, hi) in brackets(f, window.0, window.1, tol.scan_points) {
        let x = if lo == hi {
            lo
        } else {
            brent(f, lo, hi, tol.root_tol).unwrap_or(0.5 * (lo + hi))
        };
        let jet = taylor_jet(v, x, 1).map_err(domain(x))?;
        let slope = jet.coeffs[1];
        if slope.abs() <= tol.contact_tol {
            return Err(ModelError::DegenerateTurningPoint { x, slope });
        }
        let side = if slope < 0.0 { Side::Left } else { Side::Right };
        if out.last().is_some_and(|t: &TurningPoint| (t.x - x).abs() < tol.root_tol) {
            continue;
        }
        out.push(TurningPoint { x, channel, side });
    }
    Ok(out)
}

/// Well walls `a < b` of V1 at energy `e`.
pub fn well_walls(p: &Problem, e: f64) -> Result<(TurningPoint, TurningPoint), ModelError> {
    let tps = turning_points(&p.v1, Channel::One, e, p.window, &p.tol)?;
    match tps.as_slice() {
        [a, b] if a.side == Side::Left && b.side == Side::Right => Ok((*a, *b)),
        _ => Err(ModelError::NoWell {
            e0: e,
            detail: format!("{} roots of V1 = E in the window", tps.len()),
        }),
    }
}

/// Contact order of V1 and V2 at `x`, with `dv = V2^(m) - V1^(m)`.
pub fn contact_order(p: &Problem, x: f64) -> Result<(usize, f64), ModelError> {
    let (m, d, _) = contact_data(p, x)?;
    Ok((m, d[m] * exprs::factorial(m)))
}

fn contact_data(p: &Problem, x: f64) -> Result<(usize, Vec<f64>, f64), ModelError> {
    let k = p.tol.k_max;
    let j1 = taylor_jet(&p.v1, x, k).map_err(domain(x))?;
    let j2 = taylor_jet(&p.v2, x, k).map_err(domain(x))?;
    let d: Vec<f64> = j2.coeffs.iter().zip(&j1.coeffs).map(|(b, a)| b - a).collect();
    let m = (1..=k)
        .find(|&i| {
            let scale = 1f64.max(j1.coeffs[i].abs()).max(j2.coeffs[i].abs());
            d[i].abs() > p.tol.contact_tol * scale
        })
        .ok_or(ModelError::ContactOrderOverflow { x, k_max: k })?;
    Ok((m, d, j1.coeffs[0]))
}

/// Newton on each derivative `d_k` of `V2 - V1` from `x0`; the highest order
/// whose root stays within `radius` and kills every lower derivative wins.
fn refine_contact(p: &Problem, x0: f64, radius: f64) -> Result<f64, ModelError> {
    let vanishes_below = |x: f64, k: usize| -> Result<bool, ModelError> {
        let (m, d, v1) = contact_data(p, x)?;
        let v2 = v1 + d[0];
        let scale = 1f64.max(v1.abs()).max(v2.abs());
        Ok(d[0].abs() <= p.tol.contact_tol * scale && m > k)
    };
    let mut best = x0;
    for k in 0..p.tol.k_max {
        let mut x = x0;
        let mut converged = false;
        for _ in 0..200 {
            let (_, d, _) = contact_data(p, x)?;
            if d[k + 1] == 0.0 {
                break;
            }
            let step = (d[k] / ((k + 1) as f64 * d[k + 1])).clamp(-0.05, 0.05);
            x -= step;
            if (x - x0).abs() > radius {
                break;
            }
            if step.abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if converged && vanishes_below(x, k)? {
            best = x;
        }
    }
    Ok(best)
}

/// All crossings of V1 and V2 strictly inside the well at E0.
pub fn crossing_points(p: &Problem) -> Result<Vec<CrossingPoint>, ModelError> {
    let (a, b) = well_walls(p, p.e0)?;
    crossings_in(p, a.x, b.x)
}

fn crossings_in(p: &Problem, a: f64, b: f64) -> Result<Vec<CrossingPoint>, ModelError> {
    let tol = &p.tol;
    let g = |x: f64| match (p.v1.eval_real(x), p.v2.eval_real(x)) {
        (Ok(u), Ok(v)) => u - v,
        _ => f64::NAN,
    };
    let dg = |x: f64| match (taylor_jet(&p.v1, x, 1), taylor_jet(&p.v2, x, 1)) {
        (Ok(u), Ok(v)) => u.coeffs[1] - v.coeffs[1],
        _ => f64::NAN,
    };
    let n = tol.scan_points;
    let step = (b - a) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| if i == n { b } else { a + step * i as f64 }).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();

    let mut cands = Vec::new();
    for i in 0..n {
        let (g0, g1) = (gs[i], gs[i + 1]);
        if g0 != 0.0 && g1 != 0.0 && (g0 > 0.0) != (g1 > 0.0) {
            if let Some(x) = brent(g, xs[i], xs[i + 1], tol.root_tol) {
                cands.push(x);
            }
        } else if g0 == 0.0 && i > 0 {
            cands.push(xs[i]);
        }
    }
    // tangential contacts: interior minima of |g| without a sign change
    for i in 1..n {
        let (l, c, r) = (gs[i - 1].abs(), gs[i].abs(), gs[i + 1].abs());
        let same_sign = (gs[i - 1] > 0.0) == (gs[i] > 0.0) && (gs[i] > 0.0) == (gs[i + 1] > 0.0);
        if c <= l && c <= r && same_sign {
            if let Some(x) = brent(dg, xs[i - 1], xs[i + 1], tol.root_tol) {
                cands.push(x);
            }
        }
    }

    // (x, contact order); candidates closer than two grid cells are one contact
    let mut roots: Vec<(f64, usize)> = Vec::new();
    for x0 in cands {
        let x = refine_contact(p, x0, 4.0 * step)?;
        // contacts sitting on a well wall are not crossings of the allowed region
        let wall = 1e-6 * (b - a);
        if !(x > a + wall && x < b - wall) {
            continue;
        }
        let scale = 1f64.max(p.v(Channel::One, x)?.abs());
        if g(x).abs() > 10.0 * tol.root_tol * scale {
            continue;
        }
        let m = contact_order(p, x)?.0;
        match roots.iter_mut().find(|(r, _)| (r - x).abs() < 2.0 * step) {
            Some(slot) if slot.1 < m => *slot = (x, m),
            Some(_) => {}
            None => roots.push((x, m)),
        }
    }
    roots.sort_by(|l, r| l.0.total_cmp(&r.0));
    let roots = roots.into_iter().map(|(x, _)| x);

    let mut out = Vec::with_capacity(roots.len());
    for x in roots {
        let v1 = p.v(Channel::One, x)?;
        if v1 >= p.e0 - tol.contact_tol {
            return Err(ModelError::CrossingAtTurningPoint { x });
        }
        let (m, dv) = contact_order(p, x)?;
        let xi = (p.e0 - v1).sqrt();
        out.push(CrossingPoint {
            x,
            xi,
            m,
            dv,
            u_plus: p.u(x, xi)?,
            u_minus: p.u(x, -xi)?,
        });
    }
    Ok(out)
}

fn components_of(tps: &[TurningPoint], starts_allowed: bool) -> Vec<Component> {
    let mut out = Vec::new();
    let mut open: Option<Option<TurningPoint>> = if starts_allowed { Some(None) } else { None };
    for t in tps {
        match t.side {
            Side::Left => open = Some(Some(*t)),
            Side::Right => {
                if let Some(lo) = open.take() {
                    out.push(Component { lo, hi: Some(*t) });
                }
            }
        }
    }
    if let Some(lo) = open {
        out.push(Component { lo, hi: None });
    }
    out
}

fn flag(name: &'static str, passed: bool, detail: impl Into<String>) -> AssumptionFlag {
    AssumptionFlag {
        name,
        passed,
        detail: detail.into(),
    }
}

/// Check the structural assumptions at E0 and collect the geometric data.
pub fn validate_structure(p: &Problem) -> Result<StructureReport, ModelError> {
    p.tol.check()?;
    let e0 = p.e0;
    let (xl, xr) = p.window;
    let mut flags = Vec::new();
    let mut report = StructureReport {
        e0,
        a0: None,
        b0: None,
        v2_turning: Vec::new(),
        components: Vec::new(),
        crossings: Vec::new(),
        m0: 0,
        tails: Vec::new(),
        flags: Vec::new(),
    };

    match well_walls(p, e0) {
        Ok((a, b)) => {
            let inside_ok = (1..64).all(|i| {
                let x = a.x + (b.x - a.x) * i as f64 / 64.0;
                p.v(Channel::One, x).map(|v| v < e0).unwrap_or(false)
            });
            flags.push(flag(
                "simple_well",
                inside_ok,
                format!("a0 = {}, b0 = {}", a.x, b.x),
            ));
            report.a0 = Some(a);
            report.b0 = Some(b);
        }
        Err(e) => flags.push(flag("simple_well", false, e.to_string())),
    }

    match turning_points(&p.v2, Channel::Two, e0, p.window, &p.tol) {
        Ok(tps) => {
            flags.push(flag("v2_turning_simple", true, format!("{} turning points", tps.len())));
            let starts = p.v(Channel::Two, xl)? < e0;
            let comps = components_of(&tps, starts);
            let bounded: Vec<String> = comps
                .iter()
                .filter(|c| c.is_bounded())
                .map(|c| format!("[{}, {}]", c.lo.unwrap().x, c.hi.unwrap().x))
                .collect();
            flags.push(flag(
                "v2_unbounded_components",
                bounded.is_empty(),
                if bounded.is_empty() {
                    "all components reach the window boundary".to_string()
                } else {
                    format!("bounded components {}", bounded.join(", "))
                },
            ));
            for c in &comps {
                if c.lo.is_none() {
                    report.tails.push(TailInfo::new(End::MinusInf, 1));
                    report.tails.push(TailInfo::new(End::MinusInf, -1));
                }
                if c.hi.is_none() {
                    report.tails.push(TailInfo::new(End::PlusInf, 1));
                    report.tails.push(TailInfo::new(End::PlusInf, -1));
                }
            }
            report.v2_turning = tps;
            report.components = comps;
        }
        Err(e) => flags.push(flag("v2_turning_simple", false, e.to_string())),
    }

    let mut limit_issues = Vec::new();
    for ch in [Channel::One, Channel::Two] {
        for x in [xl, xr] {
            let jet = taylor_jet(p.potential(ch), x, 1).map_err(domain(x))?;
            if (jet.coeffs[0] - e0).abs() <= p.tol.contact_tol {
                limit_issues.push(format!("V{ch}({x}) = E0"));
            }
            if jet.coeffs[1].abs() > 1e-6 {
                limit_issues.push(format!("V{ch} not flat at x = {x}"));
            }
        }
    }
    flags.push(flag(
        "window_limits",
        limit_issues.is_empty(),
        if limit_issues.is_empty() {
            "potentials settled at the window boundary".to_string()
        } else {
            limit_issues.join(", ")
        },
    ));

    if let (Some(a), Some(b)) = (report.a0, report.b0) {
        match crossings_in(p, a.x, b.x) {
            Ok(cs) if cs.is_empty() => {
                flags.push(flag("crossings", false, ModelError::NoCrossing.to_string()))
            }
            Ok(cs) => {
                report.m0 = cs.iter().map(|c| c.m).max().unwrap_or(0);
                let outside: Vec<String> = cs
                    .iter()
                    .filter(|c| !report.components.iter().any(|k| k.contains(c.x)))
                    .map(|c| c.x.to_string())
                    .collect();
                flags.push(flag(
                    "crossings",
                    outside.is_empty(),
                    if outside.is_empty() {
                        format!("{} crossing(s), m0 = {}", cs.len(), report.m0)
                    } else {
                        format!("crossings outside {{V2 <= E0}}: {}", outside.join(", "))
                    },
                ));
                report.crossings = cs;
            }
            Err(e) => flags.push(flag("crossings", false, e.to_string())),
        }
    }

    report.flags = flags;
    Ok(report)
}
