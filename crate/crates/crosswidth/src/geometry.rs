//! Directed phase-space graph of the characteristic set: vertices at crossing
//! points, edges along the Hamiltonian flow, tails escaping to infinity.

use crate::model::{Channel, CrossingPoint, End, ModelError, Problem, Side, StructureReport, TailInfo, TailKind};
use crate::quadrature::{piece_action, piece_action_derivative, QuadError};
use crate::exprs::taylor_jet;
use crate::roots::brent;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("turning point near x = {x0} lost at E = {e}")]
    TurningPointLost { x0: f64, e: f64 },
    #[error("invalid base point: {0}")]
    InvalidBasePoint(String),
}

/// A crossing point together with the sign of its momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub crossing: usize,
    pub sign: i8,
    pub x: f64,
}

/// End of a monotone piece: a crossing abscissa (fixed in E) or a turning point (moves with E).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    Fixed(f64),
    Turning { x0: f64, side: Side },
}

impl Endpoint {
    pub fn is_turning(&self) -> bool {
        matches!(self, Endpoint::Turning { .. })
    }

    /// Abscissa at the reference energy.
    pub fn x0(&self) -> f64 {
        match *self {
            Endpoint::Fixed(x) | Endpoint::Turning { x0: x, .. } => x,
        }
    }

    pub fn at(&self, p: &Problem, ch: Channel, e: f64) -> Result<f64, GeometryError> {
        match *self {
            Endpoint::Fixed(x) => Ok(x),
            Endpoint::Turning { x0, .. } => turning_near(p, ch, e, x0),
        }
    }
}

fn turning_near(p: &Problem, ch: Channel, e: f64, x0: f64) -> Result<f64, GeometryError> {
    let v = p.potential(ch);
    let f = |x: f64| v.eval_real(x).map(|y| y - e).unwrap_or(f64::NAN);
    if f(x0) == 0.0 {
        return Ok(x0);
    }
    let mut d = 1e-3;
    for _ in 0..40 {
        let (lo, hi) = (x0 - d, x0 + d);
        let (fl, f0, fh) = (f(lo), f(x0), f(hi));
        if (fl > 0.0) != (f0 > 0.0) {
            return brent(f, lo, x0, 0.0).ok_or(GeometryError::TurningPointLost { x0, e });
        }
        if (fh > 0.0) != (f0 > 0.0) {
            return brent(f, x0, hi, 0.0).ok_or(GeometryError::TurningPointLost { x0, e });
        }
        d *= 1.6;
    }
    Err(GeometryError::TurningPointLost { x0, e })
}

/// Monotone stretch of a trajectory on one momentum branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub from: Endpoint,
    pub to: Endpoint,
    pub branch: i8,
}

impl Piece {
    pub fn span(&self, p: &Problem, ch: Channel, e: f64) -> Result<(f64, f64), GeometryError> {
        let a = self.from.at(p, ch, e)?;
        let b = self.to.at(p, ch, e)?;
        Ok((a.min(b), a.max(b)))
    }
}

/// Base point of an edge: a fraction of the way along one of its pieces.
/// `x` is its position at the reference energy; at other energies the same
/// fraction of the moved piece is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePoint {
    pub piece: usize,
    pub frac: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub channel: Channel,
    pub source: usize,
    pub target: usize,
    pub pieces: Vec<Piece>,
    pub turning_count: usize,
    pub base: BasePoint,
}

impl Edge {
    /// Turning points before / after the base point.
    pub fn maslov_halves(&self) -> (usize, usize) {
        (self.base.piece, self.turning_count - self.base.piece)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tail {
    pub id: usize,
    pub info: TailInfo,
    pub attach: Option<usize>,
}

/// Out- or in-link of a vertex on one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Edge(usize),
    Tail(usize),
}

#[derive(Debug, Clone)]
pub struct Graph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub tails: Vec<Tail>,
    pub crossings: Vec<CrossingPoint>,
    pub m0: usize,
    pub e_ref: f64,
    /// Designated Gamma1 edge whose base point is the path origin.
    pub e0: usize,
    /// `incoming[v][channel]`, `outgoing[v][channel]`.
    pub incoming: Vec<[Option<Link>; 2]>,
    pub outgoing: Vec<[Option<Link>; 2]>,
}

/// Ordered edge sequence, optionally ending in a tail.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PathSeq {
    pub edges: Vec<usize>,
    pub tail: Option<usize>,
    pub switch_count: usize,
}

/// Actions of one edge at a real energy, with energy derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeAction {
    pub s: f64,
    pub first: f64,
    pub second: f64,
    pub ds: f64,
    pub dfirst: f64,
    pub dsecond: f64,
}

struct Builder {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    tails: Vec<Tail>,
}

impl Builder {
    fn vertex(&self, crossing: usize, sign: i8) -> usize {
        self.vertices
            .iter()
            .position(|v| v.crossing == crossing && v.sign == sign)
            .expect("vertex exists")
    }

    fn edge(&mut self, channel: Channel, source: usize, target: usize, pieces: Vec<Piece>) {
        let turning_count = pieces.len() - 1;
        let base = BasePoint {
            piece: 0,
            frac: 0.5,
            x: 0.5 * (pieces[0].from.x0() + pieces[0].to.x0()),
        };
        self.edges.push(Edge {
            id: self.edges.len(),
            channel,
            source,
            target,
            pieces,
            turning_count,
            base,
        });
    }

    fn tail(&mut self, direction: End, xi_sign: i8, attach: Option<usize>) {
        self.tails.push(Tail {
            id: self.tails.len(),
            info: TailInfo::new(direction, xi_sign),
            attach,
        });
    }

    /// Chain of vertices along one branch, joined by single-piece edges.
    fn chain(&mut self, ch: Channel, xs: &[(usize, f64)], sign: i8) {
        for w in xs.windows(2) {
            let (i, xi) = w[0];
            let (j, xj) = w[1];
            let (s, t) = (self.vertex(i, sign), self.vertex(j, sign));
            let piece = Piece {
                from: Endpoint::Fixed(xi),
                to: Endpoint::Fixed(xj),
                branch: sign,
            };
            self.edge(ch, s, t, vec![piece]);
        }
    }

    /// Edge from `(x, sign)` around a turning point back to `(x, -sign)`.
    fn around(&mut self, ch: Channel, crossing: usize, x: f64, turn: Endpoint, sign: i8) {
        let s = self.vertex(crossing, sign);
        let t = self.vertex(crossing, -sign);
        let pieces = vec![
            Piece {
                from: Endpoint::Fixed(x),
                to: turn,
                branch: sign,
            },
            Piece {
                from: turn,
                to: Endpoint::Fixed(x),
                branch: -sign,
            },
        ];
        self.edge(ch, s, t, pieces);
    }
}

/// Build the graph of the characteristic set at the report's energy.
pub fn build_graph(report: &StructureReport) -> Result<Graph, GeometryError> {
    report.ensure_valid()?;
    let (a0, b0) = (report.a0.expect("valid"), report.b0.expect("valid"));
    let cs = &report.crossings;
    let mut b = Builder {
        vertices: Vec::new(),
        edges: Vec::new(),
        tails: Vec::new(),
    };
    for (i, c) in cs.iter().enumerate() {
        for sign in [1, -1] {
            b.vertices.push(Vertex { crossing: i, sign, x: c.x });
        }
    }
    let all: Vec<(usize, f64)> = cs.iter().enumerate().map(|(i, c)| (i, c.x)).collect();
    let rev: Vec<(usize, f64)> = all.iter().rev().copied().collect();

    // Gamma1: upper branch rightwards, around b, lower branch leftwards, around a
    b.chain(Channel::One, &all, 1);
    let (il, xl) = all[all.len() - 1];
    b.around(Channel::One, il, xl, Endpoint::Turning { x0: b0.x, side: Side::Right }, 1);
    b.chain(Channel::One, &rev, -1);
    let (i0, x0) = all[0];
    b.around(Channel::One, i0, x0, Endpoint::Turning { x0: a0.x, side: Side::Left }, -1);

    for comp in &report.components {
        let inside: Vec<(usize, f64)> = all.iter().copied().filter(|&(_, x)| comp.contains(x)).collect();
        let inside_rev: Vec<(usize, f64)> = inside.iter().rev().copied().collect();
        let first = inside.first().map(|&(i, _)| i);
        let last = inside.last().map(|&(i, _)| i);
        let vx = |b: &Builder, i: Option<usize>, s: i8| i.map(|i| b.vertex(i, s));
        match (comp.lo, comp.hi) {
            (None, None) => {
                b.chain(Channel::Two, &inside, 1);
                b.chain(Channel::Two, &inside_rev, -1);
                let (uf, ul) = (vx(&b, first, 1), vx(&b, last, 1));
                let (lf, ll) = (vx(&b, first, -1), vx(&b, last, -1));
                b.tail(End::MinusInf, 1, uf);
                b.tail(End::PlusInf, 1, ul);
                b.tail(End::PlusInf, -1, ll);
                b.tail(End::MinusInf, -1, lf);
            }
            (None, Some(c)) => {
                b.chain(Channel::Two, &inside, 1);
                if let Some((i, x)) = inside.last().copied() {
                    b.around(Channel::Two, i, x, Endpoint::Turning { x0: c.x, side: Side::Right }, 1);
                }
                b.chain(Channel::Two, &inside_rev, -1);
                let (uf, lf) = (vx(&b, first, 1), vx(&b, first, -1));
                b.tail(End::MinusInf, 1, uf);
                b.tail(End::MinusInf, -1, lf);
            }
            (Some(c), None) => {
                b.chain(Channel::Two, &inside_rev, -1);
                if let Some((i, x)) = inside.first().copied() {
                    b.around(Channel::Two, i, x, Endpoint::Turning { x0: c.x, side: Side::Left }, -1);
                }
                b.chain(Channel::Two, &inside, 1);
                let (ll, ul) = (vx(&b, last, -1), vx(&b, last, 1));
                b.tail(End::PlusInf, -1, ll);
                b.tail(End::PlusInf, 1, ul);
            }
            (Some(_), Some(_)) => {
                return Err(GeometryError::InternalInconsistency(
                    "bounded component of {V2 <= E0}".into(),
                ))
            }
        }
    }

    let nv = b.vertices.len();
    let mut incoming = vec![[None; 2]; nv];
    let mut outgoing = vec![[None; 2]; nv];
    let put = |slot: &mut Option<Link>, link: Link, what: &str, v: usize| -> Result<(), GeometryError> {
        if slot.replace(link).is_some() {
            return Err(GeometryError::InternalInconsistency(format!("vertex {v} has two {what}")));
        }
        Ok(())
    };
    for e in &b.edges {
        let ch = e.channel.index();
        put(&mut outgoing[e.source][ch], Link::Edge(e.id), "out-links", e.source)?;
        put(&mut incoming[e.target][ch], Link::Edge(e.id), "in-links", e.target)?;
    }
    for t in &b.tails {
        if let Some(v) = t.attach {
            match t.info.kind {
                TailKind::Outgoing => put(&mut outgoing[v][1], Link::Tail(t.id), "out-links", v)?,
                TailKind::Incoming => put(&mut incoming[v][1], Link::Tail(t.id), "in-links", v)?,
            }
        }
    }
    for v in 0..nv {
        if incoming[v].iter().chain(&outgoing[v]).any(Option::is_none) {
            return Err(GeometryError::InternalInconsistency(format!(
                "vertex {v} does not have two in- and two out-links"
            )));
        }
    }

    let mut g = Graph {
        vertices: b.vertices,
        edges: b.edges,
        tails: b.tails,
        crossings: cs.clone(),
        m0: report.m0,
        e_ref: report.e0,
        e0: 0,
        incoming,
        outgoing,
    };
    g.e0 = g.default_e0();
    let maslov: usize = g.gamma1_cycle().iter().map(|&e| g.edges[e].turning_count).sum();
    if maslov != 2 {
        return Err(GeometryError::InternalInconsistency(format!(
            "Gamma1 cycle has Maslov count {maslov}"
        )));
    }
    Ok(g)
}

impl Graph {
    pub fn edge_channel(&self, e: usize) -> Channel {
        self.edges[e].channel
    }

    /// Gamma1 edges in flow order, starting with edge 0.
    pub fn gamma1_cycle(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut e = 0;
        loop {
            out.push(e);
            match self.outgoing[self.edges[e].target][0] {
                Some(Link::Edge(n)) if n != 0 && out.len() <= self.edges.len() => e = n,
                _ => break,
            }
        }
        out
    }

    pub fn outgoing_tails(&self) -> Vec<usize> {
        self.tails
            .iter()
            .filter(|t| t.info.kind == TailKind::Outgoing)
            .map(|t| t.id)
            .collect()
    }

    fn gamma1_in_edge(&self, v: usize) -> usize {
        match self.incoming[v][0] {
            Some(Link::Edge(e)) => e,
            _ => unreachable!("Gamma1 in-link is always an edge"),
        }
    }

    /// Gamma1 in-edges at the attach vertices of the outgoing tails.
    pub fn admissible_e0(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .outgoing_tails()
            .into_iter()
            .filter_map(|t| self.tails[t].attach)
            .map(|v| self.gamma1_in_edge(v))
            .collect();
        out.dedup();
        out
    }

    fn default_e0(&self) -> usize {
        let pick = |dir: End| {
            self.tails
                .iter()
                .find(|t| t.info.kind == TailKind::Outgoing && t.info.direction == dir && t.attach.is_some())
        };
        match pick(End::MinusInf).or_else(|| pick(End::PlusInf)) {
            Some(t) => self.gamma1_in_edge(t.attach.expect("attached")),
            None => 0,
        }
    }

    pub fn with_e0(&self, e0: usize) -> Result<Graph, GeometryError> {
        if self.edges.get(e0).map(|e| e.channel) != Some(Channel::One) {
            return Err(GeometryError::InvalidBasePoint(format!("edge {e0} is not on Gamma1")));
        }
        Ok(Graph { e0, ..self.clone() })
    }

    /// Move the base point of `edge` to fraction `frac` of its piece `piece`.
    pub fn with_base(&self, edge: usize, piece: usize, frac: f64) -> Result<Graph, GeometryError> {
        let e = self
            .edges
            .get(edge)
            .ok_or_else(|| GeometryError::InvalidBasePoint(format!("no edge {edge}")))?;
        let pc = e
            .pieces
            .get(piece)
            .ok_or_else(|| GeometryError::InvalidBasePoint(format!("edge {edge} has no piece {piece}")))?;
        if !(frac > 0.0 && frac < 1.0) {
            return Err(GeometryError::InvalidBasePoint("fraction must lie in (0, 1)".into()));
        }
        let x = pc.from.x0() + frac * (pc.to.x0() - pc.from.x0());
        let mut g = self.clone();
        g.edges[edge].base = BasePoint { piece, frac, x };
        Ok(g)
    }

    /// Actions of every edge at a real energy.
    pub fn edge_actions(&self, p: &Problem, e: f64) -> Result<Vec<EdgeAction>, GeometryError> {
        self.edges.iter().map(|edge| edge_action(p, edge, e)).collect()
    }

    /// Sum of Gamma1 edge actions (the loop action).
    pub fn gamma1_action(&self, p: &Problem, e: f64) -> Result<f64, GeometryError> {
        let mut s = 0.0;
        for ed in self.gamma1_cycle() {
            s += edge_action(p, &self.edges[ed], e)?.s;
        }
        Ok(s)
    }

    fn out_links(&self, e: usize) -> [Option<Link>; 2] {
        self.outgoing[self.edges[e].target]
    }

    /// Paths from the base of `e0` to `tail` with at most `max_switch` channel
    /// changes, never re-entering `e0`.
    pub fn paths_bounded(&self, tail: usize, max_switch: usize) -> Vec<PathSeq> {
        let mut out = Vec::new();
        if self.tails[tail].info.kind != TailKind::Outgoing || self.tails[tail].attach.is_none() {
            return out;
        }
        let mut stack = vec![self.e0];
        self.dfs(tail, max_switch, 0, &mut stack, &mut out);
        out
    }

    fn dfs(&self, tail: usize, budget: usize, used: usize, stack: &mut Vec<usize>, out: &mut Vec<PathSeq>) {
        let cur = *stack.last().expect("non-empty");
        let ch = self.edges[cur].channel;
        for (k, link) in self.out_links(cur).iter().enumerate() {
            let switch = usize::from(k != ch.index());
            if used + switch > budget {
                continue;
            }
            match *link {
                Some(Link::Tail(t)) if t == tail => out.push(PathSeq {
                    edges: stack.clone(),
                    tail: Some(t),
                    switch_count: used + switch,
                }),
                Some(Link::Edge(n)) if n != self.e0 => {
                    stack.push(n);
                    self.dfs(tail, budget, used + switch, stack, out);
                    stack.pop();
                }
                _ => {}
            }
        }
    }

    /// Paths to `tail` that leave Gamma1 exactly once.
    pub fn paths_one_switch(&self, tail: usize) -> Vec<PathSeq> {
        self.paths_bounded(tail, 1)
            .into_iter()
            .filter(|p| p.switch_count == 1)
            .collect()
    }

    /// Number of channel changes along consecutive edges (closing back to the
    /// first edge when `closed`).
    pub fn count_switches(&self, edges: &[usize], closed: bool) -> usize {
        let mut n = edges
            .windows(2)
            .filter(|w| self.edges[w[0]].channel != self.edges[w[1]].channel)
            .count();
        if closed && edges.len() > 1 {
            let (a, b) = (edges[edges.len() - 1], edges[0]);
            n += usize::from(self.edges[a].channel != self.edges[b].channel);
        }
        if closed && edges.len() == 1 {
            n = 0;
        }
        n
    }

    /// Whether `b` can follow `a` (target of `a` is the source of `b`).
    pub fn consecutive(&self, a: usize, b: usize) -> bool {
        self.edges[a].target == self.edges[b].source
    }

    /// Simple cycles of the edge-adjacency digraph (each edge used at most once),
    /// each listed from its smallest edge.
    pub fn edge_cycles(&self) -> Vec<Vec<usize>> {
        let n = self.edges.len();
        let succ: Vec<Vec<usize>> = (0..n)
            .map(|a| (0..n).filter(|&b| self.consecutive(a, b)).collect())
            .collect();
        let mut out = Vec::new();
        for start in 0..n {
            let mut path = vec![start];
            let mut on = vec![false; n];
            on[start] = true;
            cycle_dfs(&succ, start, &mut path, &mut on, &mut out);
        }
        out
    }

    /// Directed cycles passing each vertex at most once.
    pub fn primitive_cycles(&self) -> Vec<PathSeq> {
        self.edge_cycles()
            .into_iter()
            .filter(|c| {
                let mut seen: Vec<usize> = c.iter().map(|&e| self.edges[e].source).collect();
                seen.sort_unstable();
                seen.windows(2).all(|w| w[0] != w[1])
            })
            .map(|c| PathSeq {
                switch_count: self.count_switches(&c, true),
                edges: c,
                tail: None,
            })
            .collect()
    }
}

fn cycle_dfs(succ: &[Vec<usize>], start: usize, path: &mut Vec<usize>, on: &mut [bool], out: &mut Vec<Vec<usize>>) {
    let cur = *path.last().expect("non-empty");
    for &nx in &succ[cur] {
        if nx == start {
            out.push(path.clone());
        } else if nx > start && !on[nx] {
            on[nx] = true;
            path.push(nx);
            cycle_dfs(succ, start, path, on, out);
            path.pop();
            on[nx] = false;
        }
    }
}

fn edge_action(p: &Problem, edge: &Edge, e: f64) -> Result<EdgeAction, GeometryError> {
    let ch = edge.channel;
    let v = p.potential(ch);
    let tol = p.tol.quad_tol;
    let mut s = 0.0;
    let mut ds = 0.0;
    let mut first = 0.0;
    let mut dfirst = 0.0;
    for (k, pc) in edge.pieces.iter().enumerate() {
        let (lo, hi) = pc.span(p, ch, e)?;
        let a = piece_action(v, e, lo, hi, tol)?;
        let da = piece_action_derivative(v, e, lo, hi, tol)?;
        s += a;
        ds += da;
        if k < edge.base.piece {
            first += a;
            dfirst += da;
        } else if k == edge.base.piece {
            let start = pc.from.at(p, ch, e)?;
            let end = pc.to.at(p, ch, e)?;
            let f = edge.base.frac;
            let xb = start + f * (end - start);
            let (l, h) = (start.min(xb), start.max(xb));
            first += piece_action(v, e, l, h, tol)?;
            dfirst += piece_action_derivative(v, e, l, h, tol)?;
            // the base slides with the endpoints
            let slope = |ep: &Endpoint| -> Result<f64, GeometryError> {
                match ep {
                    Endpoint::Fixed(_) => Ok(0.0),
                    Endpoint::Turning { .. } => {
                        let x = ep.at(p, ch, e)?;
                        let j = taylor_jet(v, x, 1).map_err(|source| ModelError::Domain { x, source })?;
                        Ok(1.0 / j.derivative(1))
                    }
                }
            };
            let dxb = (1.0 - f) * slope(&pc.from)? + f * slope(&pc.to)?;
            let vb = v.eval_real(xb).map_err(|source| ModelError::Domain { x: xb, source })?;
            dfirst += (e - vb).max(0.0).sqrt() * dxb * (xb - start).signum();
        }
    }
    Ok(EdgeAction {
        s,
        first,
        second: s - first,
        ds,
        dfirst,
        dsecond: ds - dfirst,
    })
}
