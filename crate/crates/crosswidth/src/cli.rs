//! Config loading, subcommand dispatch and fixed-format JSON/CSV output.
//!
//! The config is TOML with four sections:
//!
//! ```toml
//! [problem]
//! v1 = "1 - 1/cosh(x)^2"
//! v2 = "0.35 - 0.25*tanh(x)"
//! r0 = "0.2"
//! r1 = "0"
//! e0 = 0.75
//! window = [-10, 10]
//! L = 3
//!
//! [numerics]          # optional: tolerance overrides and calib
//! quad_tol = 1e-11
//!
//! [sweep]
//! h_list = "0.08,0.06,0.05,0.04,0.03"
//!
//! [oracle]            # optional: theta, X, R0, xm, ode_tol, checkpoint
//! theta = 0.3
//! ```

use std::fmt::{self, Write as _};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use toml::Spanned;

use crate::exprs::{self, Expr};
use crate::geometry::Link;
use crate::model::{validate_structure, Channel, End, ModelError, Problem, StructureReport, TailKind, ToleranceSet};
use crate::oracle::{self, exponent_fit, width_from_state, OracleConfig, OracleError, Shooter};
use crate::quadrature::{oscillatory_integral, stationary_phase, QuadError, NODE_BUDGET};
use crate::semiclassics::{
    bohr_sommerfeld_with, closed_form_width_example, pseudo_resonances, refine_pseudo, resonance_table,
    vanishing_energies, width_coefficient, Analysis, SemiError, WidthVariant,
};
use crate::C64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{source_name}:{line}: {message}")]
    Config {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for input and validation problems, 3 for numerical non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Usage(_) => "usage",
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<QuadError> for CliError {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::PreconditionViolated(_) | QuadError::NoTurningPoints { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SemiError> for CliError {
    fn from(e: SemiError) -> Self {
        match e {
            SemiError::Model(m) => m.into(),
            SemiError::Quad(q) => q.into(),
            SemiError::Geometry(_) | SemiError::TopologyMismatch(_) | SemiError::Invalid(_) => {
                CliError::Validation(e.to_string())
            }
            SemiError::SingularSystem | SemiError::CountMismatch { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Model(m) => m.into(),
            OracleError::Invalid(_) | OracleError::InsufficientData { .. } | OracleError::NoSeed => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Everything a subcommand needs from the config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    pub calib: f64,
    pub h_list: Vec<f64>,
    pub oracle: OracleConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Spanned<RawProblem>,
    numerics: Option<RawNumerics>,
    sweep: Option<RawSweep>,
    oracle: Option<RawOracle>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    v1: Spanned<String>,
    v2: Spanned<String>,
    r0: Spanned<String>,
    r1: Option<Spanned<String>>,
    e0: Spanned<f64>,
    window: Spanned<Vec<f64>>,
    #[serde(rename = "L")]
    l: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    root_tol: Option<f64>,
    contact_tol: Option<f64>,
    newton_tol: Option<f64>,
    quad_tol: Option<f64>,
    scan_points: Option<usize>,
    k_max: Option<usize>,
    calib: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum HList {
    Text(String),
    List(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    h_list: Spanned<HList>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    theta: Option<f64>,
    #[serde(rename = "X")]
    x_max: Option<f64>,
    #[serde(rename = "R0")]
    r0: Option<f64>,
    xm: Option<f64>,
    ode_tol: Option<f64>,
    checkpoint: Option<f64>,
    theta_check: Option<bool>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

/// Parse config text; `name` labels error messages.
pub fn parse_config(text: &str, name: &str) -> Result<RunConfig, CliError> {
    let err = |span: Range<usize>, message: String| CliError::Config {
        source_name: name.to_string(),
        line: line_of(text, span.start),
        message,
    };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let span = e.span().unwrap_or(0..0);
        err(span, e.message().to_string())
    })?;

    let pspan = raw.problem.span();
    let rp = raw.problem.into_inner();
    let expr = |key: &str, s: &Spanned<String>| -> Result<Expr, CliError> {
        exprs::parse(s.get_ref()).map_err(|e| err(s.span(), format!("{key}: {e}")))
    };
    let v1 = expr("v1", &rp.v1)?;
    let v2 = expr("v2", &rp.v2)?;
    let r0 = expr("r0", &rp.r0)?;
    let r1 = match &rp.r1 {
        Some(s) => expr("r1", s)?,
        None => Expr::Num(0.0),
    };
    let window = match rp.window.get_ref().as_slice() {
        [lo, hi] if lo < hi => (*lo, *hi),
        _ => return Err(err(rp.window.span(), "window must be [x_min, x_max] with x_min < x_max".into())),
    };
    let e0 = *rp.e0.get_ref();
    let l = match &rp.l {
        Some(v) if !(*v.get_ref() > 0.0) => return Err(err(v.span(), "L must be positive".into())),
        Some(v) => *v.get_ref(),
        None => crate::model::fixtures::BOX_L,
    };
    let mut tol = ToleranceSet::default();
    let mut calib = 1.0;
    if let Some(n) = raw.numerics {
        tol.root_tol = n.root_tol.unwrap_or(tol.root_tol);
        tol.contact_tol = n.contact_tol.unwrap_or(tol.contact_tol);
        tol.newton_tol = n.newton_tol.unwrap_or(tol.newton_tol);
        tol.quad_tol = n.quad_tol.unwrap_or(tol.quad_tol);
        tol.scan_points = n.scan_points.unwrap_or(tol.scan_points);
        tol.k_max = n.k_max.unwrap_or(tol.k_max);
        if let Some(c) = n.calib {
            if !(*c.get_ref() > 0.0) {
                return Err(err(c.span(), "calib must be positive".into()));
            }
            calib = *c.get_ref();
        }
    }
    let mut oracle = OracleConfig::default();
    if let Some(o) = raw.oracle {
        oracle.theta = o.theta.unwrap_or(oracle.theta);
        oracle.x_max = o.x_max.unwrap_or(oracle.x_max);
        oracle.r0 = o.r0.or(oracle.r0);
        oracle.xm = o.xm.or(oracle.xm);
        oracle.checkpoint = o.checkpoint.unwrap_or(oracle.checkpoint);
        oracle.theta_check = o.theta_check.unwrap_or(oracle.theta_check);
        if let Some(t) = o.ode_tol {
            oracle.rtol = t;
            tol.ode_tol = t;
        }
    }
    tol.check().map_err(|e| err(0..0, e.to_string()))?;
    let problem = Problem::new(v1, v2, r0, r1, e0, window, l)
        .map_err(|e| err(pspan, e.to_string()))?
        .with_tolerances(tol);
    let h_list = match raw.sweep {
        Some(s) => {
            let span = s.h_list.span();
            let list = match s.h_list.into_inner() {
                HList::List(v) => v,
                HList::Text(t) => parse_h_list(&t).map_err(|m| err(span.clone(), m))?,
            };
            check_h_list(&list).map_err(|m| err(span, m))?;
            list
        }
        None => Vec::new(),
    };
    Ok(RunConfig {
        problem,
        calib,
        h_list,
        oracle,
    })
}

/// Comma-separated list of step sizes.
pub fn parse_h_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("h_list entry {:?}: {e}", s.trim())))
        .collect()
}

fn check_h_list(list: &[f64]) -> Result<(), String> {
    if list.is_empty() {
        return Err("h_list is empty".into());
    }
    if list.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err("h_list entries must be positive".into());
    }
    if list.windows(2).any(|w| w[1] >= w[0]) {
        return Err("h_list must be strictly decreasing".into());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Bs,
    Pseudo,
    Widths,
    Oracle,
    Compare,
    Stphase,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Analyze,
        Command::Bs,
        Command::Pseudo,
        Command::Widths,
        Command::Oracle,
        Command::Compare,
        Command::Stphase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Bs => "bs",
            Command::Pseudo => "pseudo",
            Command::Widths => "widths",
            Command::Oracle => "oracle",
            Command::Compare => "compare",
            Command::Stphase => "stphase",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown subcommand {s:?}")))
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub h: Option<f64>,
    pub h_list: Option<Vec<f64>>,
    pub seed_index: Option<usize>,
    pub theta: Option<f64>,
    pub x_max: Option<f64>,
    pub full: bool,
    pub m: Option<usize>,
    pub calib: Option<f64>,
    pub phi: Option<String>,
    pub sigma: Option<String>,
}

/// Result of a subcommand: the primary document, an optional CSV table and the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub code: i32,
    pub text: String,
    pub table: Option<String>,
}

/// Minimal JSON value with fixed 17-significant-digit numbers.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn obj<I: IntoIterator<Item = (&'static str, Json)>>(items: I) -> Json {
        Json::Obj(items.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    fn opt(v: Option<f64>) -> Json {
        v.map_or(Json::Null, Json::Num)
    }

    fn complex(z: C64) -> Json {
        Json::Arr(vec![Json::Num(z.re), Json::Num(z.im)])
    }

    fn nums(v: &[f64]) -> Json {
        Json::Arr(v.iter().copied().map(Json::Num).collect())
    }
}

/// `{:.16e}`, i.e. 17 significant digits; non-finite values become `null`.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".into()
    }
}

impl fmt::Display for Json {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Json::Null => f.write_str("null"),
            Json::Bool(b) => write!(f, "{b}"),
            Json::Int(i) => write!(f, "{i}"),
            Json::Num(v) => f.write_str(&fmt_num(*v)),
            Json::Str(s) => f.write_str(&serde_json::to_string(s).map_err(|_| fmt::Error)?),
            Json::Arr(items) => {
                f.write_str("[")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{it}")?;
                }
                f.write_str("]")
            }
            Json::Obj(items) => {
                f.write_str("{")?;
                for (i, (k, v)) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}:{v}", serde_json::to_string(k).map_err(|_| fmt::Error)?)?;
                }
                f.write_str("}")
            }
        }
    }
}

fn error_doc(cmd: Command, e: &CliError, diagnostics: Vec<String>) -> Output {
    let doc = Json::obj([
        ("command", Json::Str(cmd.name().into())),
        (
            "error",
            Json::obj([("kind", Json::Str(e.kind().into())), ("message", Json::Str(e.to_string()))]),
        ),
        ("diagnostics", Json::Arr(diagnostics.into_iter().map(Json::Str).collect())),
    ]);
    Output {
        code: e.exit_code(),
        text: format!("{doc}\n"),
        table: None,
    }
}

/// Run one subcommand. Failures come back as a JSON error document with the
/// matching exit code rather than as a panic.
pub fn run_subcommand(cmd: Command, cfg: &RunConfig, flags: &Flags) -> Output {
    let result = match cmd {
        Command::Analyze => analyze(cfg),
        Command::Bs => bs(cfg, flags),
        Command::Pseudo => pseudo(cfg, flags),
        Command::Widths => widths(cfg, flags),
        Command::Oracle => oracle_cmd(cfg, flags),
        Command::Compare => compare(cfg, flags),
        Command::Stphase => stphase(cfg, flags),
    };
    match result {
        Ok(out) => out,
        Err(e) => error_doc(cmd, &e, Vec::new()),
    }
}

fn ok(doc: Json) -> Result<Output, CliError> {
    Ok(Output {
        code: 0,
        text: format!("{doc}\n"),
        table: None,
    })
}

fn h_values(cfg: &RunConfig, flags: &Flags) -> Result<Vec<f64>, CliError> {
    let list = if let Some(h) = flags.h {
        vec![h]
    } else if let Some(l) = &flags.h_list {
        l.clone()
    } else {
        cfg.h_list.clone()
    };
    check_h_list(&list).map_err(CliError::Usage)?;
    Ok(list)
}

fn analysis(cfg: &RunConfig, flags: &Flags) -> Result<Analysis, CliError> {
    let calib = flags.calib.unwrap_or(cfg.calib);
    Ok(Analysis::new(cfg.problem.clone())?.with_calib(calib))
}

fn end_name(e: End) -> &'static str {
    match e {
        End::MinusInf => "-inf",
        End::PlusInf => "+inf",
    }
}

fn report_json(r: &StructureReport) -> Json {
    let tp = |t: Option<crate::model::TurningPoint>| Json::opt(t.map(|t| t.x));
    Json::obj([
        ("e0", Json::Num(r.e0)),
        ("passed", Json::Bool(r.passed())),
        ("m0", Json::Int(r.m0 as i64)),
        ("a0", tp(r.a0)),
        ("b0", tp(r.b0)),
        (
            "flags",
            Json::Arr(
                r.flags
                    .iter()
                    .map(|f| {
                        Json::obj([
                            ("name", Json::Str(f.name.to_string())),
                            ("passed", Json::Bool(f.passed)),
                            ("detail", Json::Str(f.detail.clone())),
                        ])
                    })
                    .collect(),
            ),
        ),
        (
            "crossings",
            Json::Arr(
                r.crossings
                    .iter()
                    .map(|c| {
                        Json::obj([
                            ("x", Json::Num(c.x)),
                            ("xi", Json::Num(c.xi)),
                            ("m", Json::Int(c.m as i64)),
                            ("dv", Json::Num(c.dv)),
                            ("u_plus", Json::complex(c.u_plus)),
                            ("u_minus", Json::complex(c.u_minus)),
                        ])
                    })
                    .collect(),
            ),
        ),
        (
            "v2_components",
            Json::Arr(
                r.components
                    .iter()
                    .map(|c| Json::obj([("lo", tp(c.lo)), ("hi", tp(c.hi))]))
                    .collect(),
            ),
        ),
    ])
}

fn analyze(cfg: &RunConfig) -> Result<Output, CliError> {
    let report = validate_structure(&cfg.problem)?;
    if !report.passed() {
        let action = crate::quadrature::ActionFn::for_problem(&cfg.problem);
        let num = |r: Result<f64, _>| r.map(Json::Num).unwrap_or(Json::Null);
        let doc = Json::obj([
            ("structure", report_json(&report)),
            ("graph", Json::Null),
            ("action", num(action.action(cfg.problem.e0))),
            ("action_derivative", num(action.derivative(cfg.problem.e0))),
        ]);
        return Ok(Output {
            code: 2,
            text: format!("{doc}\n"),
            table: None,
        });
    }
    let an = Analysis::new(cfg.problem.clone())?;
    let g = &an.graph;
    let link = |l: &Option<Link>| match l {
        Some(Link::Edge(e)) => Json::Str(format!("edge {e}")),
        Some(Link::Tail(t)) => Json::Str(format!("tail {t}")),
        None => Json::Null,
    };
    let graph = Json::obj([
        ("vertex_count", Json::Int(g.vertices.len() as i64)),
        ("edge_count", Json::Int(g.edges.len() as i64)),
        (
            "vertices",
            Json::Arr(
                g.vertices
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        Json::obj([
                            ("id", Json::Int(i as i64)),
                            ("crossing", Json::Int(v.crossing as i64)),
                            ("sign", Json::Int(v.sign as i64)),
                            ("x", Json::Num(v.x)),
                            ("in", Json::Arr(g.incoming[i].iter().map(link).collect())),
                            ("out", Json::Arr(g.outgoing[i].iter().map(link).collect())),
                        ])
                    })
                    .collect(),
            ),
        ),
        (
            "edges",
            Json::Arr(
                g.edges
                    .iter()
                    .map(|e| {
                        Json::obj([
                            ("id", Json::Int(e.id as i64)),
                            ("channel", Json::Int(e.channel.number() as i64)),
                            ("source", Json::Int(e.source as i64)),
                            ("target", Json::Int(e.target as i64)),
                            ("turning_points", Json::Int(e.turning_count as i64)),
                            ("base_x", Json::Num(e.base.x)),
                        ])
                    })
                    .collect(),
            ),
        ),
        (
            "tails",
            Json::Arr(
                g.tails
                    .iter()
                    .map(|t| {
                        Json::obj([
                            ("id", Json::Int(t.id as i64)),
                            ("direction", Json::Str(end_name(t.info.direction).into())),
                            ("outgoing", Json::Bool(t.info.kind == TailKind::Outgoing)),
                            ("attach", t.attach.map_or(Json::Null, |v| Json::Int(v as i64))),
                        ])
                    })
                    .collect(),
            ),
        ),
        (
            "gamma1_cycle",
            Json::Arr(g.gamma1_cycle().into_iter().map(|e| Json::Int(e as i64)).collect()),
        ),
        ("e0_edge", Json::Int(g.e0 as i64)),
    ]);
    let a = an.action.action(cfg.problem.e0)?;
    ok(Json::obj([
        ("structure", report_json(&an.report)),
        ("graph", graph),
        ("action", Json::Num(a)),
        ("action_derivative", Json::Num(an.a_prime0)),
    ]))
}

fn bs(cfg: &RunConfig, flags: &Flags) -> Result<Output, CliError> {
    let action = crate::quadrature::ActionFn::for_problem(&cfg.problem);
    let mut csv = String::from("h,index,E\n");
    for h in h_values(cfg, flags)? {
        for (i, e) in bohr_sommerfeld_with(&action, &cfg.problem, h)?.into_iter().enumerate() {
            let _ = writeln!(csv, "{},{i},{}", fmt_num(h), fmt_num(e));
        }
    }
    Ok(Output {
        code: 0,
        text: csv,
        table: None,
    })
}

fn wrap_runs(runs: Vec<Json>) -> Json {
    if runs.len() == 1 {
        runs.into_iter().next().expect("one run")
    } else {
        Json::obj([("runs", Json::Arr(runs))])
    }
}

fn pseudo(cfg: &RunConfig, flags: &Flags) -> Result<Output, CliError> {
    let an = analysis(cfg, flags)?;
    let expo = an.width_exponent();
    let mut runs = Vec::new();
    let mut code = 0;
    let mut diagnostics = Vec::new();
    for h in h_values(cfg, flags)? {
        let rep = pseudo_resonances(&an, h)?;
        let mut records = Vec::new();
        for r in &rep.roots {
            let d = width_coefficient(&an, r.seed, h, WidthVariant::OneSwitch)?.d;
            if !r.converged {
                code = 3;
                diagnostics.push(format!("h = {h}: Newton did not converge from seed {}", r.seed));
            }
            records.push(Json::obj([
                ("seed", Json::Num(r.seed)),
                ("pseudo_re", Json::Num(r.e.re)),
                ("pseudo_im", Json::Num(r.e.im)),
                ("D", Json::Num(d)),
                ("im_pred", Json::Num(-d * h.powf(expo))),
                ("residual", Json::Num(r.residual)),
                ("converged", Json::Bool(r.converged)),
            ]));
        }
        if rep.in_box as i64 != rep.arg_count || rep.in_box != rep.seeds.len() {
            diagnostics.push(format!(
                "h = {h}: {} roots in the box, {} seeds, argument principle {}",
                rep.in_box,
                rep.seeds.len(),
                rep.arg_count
            ));
        }
        runs.push(Json::obj([
            ("h", Json::Num(h)),
            ("records", Json::Arr(records)),
            ("in_box", Json::Int(rep.in_box as i64)),
            ("seed_count", Json::Int(rep.seeds.len() as i64)),
            ("arg_count", Json::Int(rep.arg_count)),
        ]));
    }
    let mut doc = wrap_runs(runs);
    if let Json::Obj(items) = &mut doc {
        items.push(("diagnostics".into(), Json::Arr(diagnostics.into_iter().map(Json::Str).collect())));
    }
    Ok(Output {
        code,
        text: format!("{doc}\n"),
        table: None,
    })
}

fn widths(cfg: &RunConfig, flags: &Flags) -> Result<Output, CliError> {
    let an = analysis(cfg, flags)?;
    let variant = if flags.full { WidthVariant::Full } else { WidthVariant::OneSwitch };
    let expo = an.width_exponent();
    let mut runs = Vec::new();
    let mut code = 0;
    for h in h_values(cfg, flags)? {
        let mut records = Vec::new();
        for rec in resonance_table(&an, h)? {
            let d = match variant {
                WidthVariant::OneSwitch => rec.d,
                WidthVariant::Full => width_coefficient(&an, rec.seed, h, variant)?.d,
            };
            if !rec.pseudo.converged {
                code = 3;
            }
            records.push(Json::obj([
                ("seed", Json::Num(rec.seed)),
                ("pseudo_re", Json::Num(rec.pseudo.e.re)),
                ("pseudo_im", Json::Num(rec.pseudo.e.im)),
                ("D", Json::Num(d)),
                ("im_pred", Json::Num(-d * h.powf(expo))),
                ("closed_form_D", Json::opt(closed_form_width_example(&an, rec.seed, h).ok())),
            ]));
        }
        let (lo, hi) = an.box_bounds(h);
        let vanish = vanishing_energies(&an, h, (lo, hi)).ok();
        runs.push(Json::obj([
            ("h", Json::Num(h)),
            ("variant", Json::Str(if flags.full { "full" } else { "one_switch" }.into())),
            ("records", Json::Arr(records)),
            ("vanishing_energies", vanish.as_deref().map_or(Json::Null, Json::nums)),
        ]));
    }
    let doc = wrap_runs(runs);
    Ok(Output {
        code,
        text: format!("{doc}\n"),
        table: None,
    })
}

fn oracle_config(cfg: &RunConfig, flags: &Flags) -> OracleConfig {
    let mut c = cfg.oracle.clone();
    if let Some(t) = flags.theta {
        c.theta = t;
    }
    if let Some(x) = flags.x_max {
        c.x_max = x;
    }
    c
}

fn pick_seed(an: &Analysis, h: f64, index: Option<usize>) -> Result<f64, CliError> {
    let seeds = bohr_sommerfeld_with(&an.action, &an.problem, h)?;
    match index {
        Some(i) => seeds
            .get(i)
            .copied()
            .ok_or_else(|| CliError::Usage(format!("seed index {i} out of range ({} seeds)", seeds.len()))),
        None => seeds
            .into_iter()
            .min_by(|a, b| (a - an.problem.e0).abs().total_cmp(&(b - an.problem.e0).abs()))
            .ok_or_else(|| CliError::Validation("no Bohr-Sommerfeld energy in the box".into())),
    }
}

struct OracleRow {
    seed: f64,
    e: C64,
    residual: f64,
    im_green: f64,
    iterations: usize,
    theta_im: Option<(f64, f64)>,
}

fn run_oracle(an: &Analysis, h: f64, seed: f64, oc: &OracleConfig) -> Result<OracleRow, CliError> {
    let p = &an.problem;
    let res = oracle::refine_resonance(p, h, C64::new(seed, 0.0), an.width_exponent(), oc)?;
    let sh = Shooter::new(p, h, oc, res.e)?;
    let residual = sh.w(res.e)?.norm();
    let g = width_from_state(&sh, res.e)?;
    Ok(OracleRow {
        seed,
        e: res.e,
        residual,
        im_green: g.im,
        iterations: res.iterations,
        theta_im: res.theta_im,
    })
}

fn oracle_cmd(cfg: &RunConfig, flags: &Flags) -> Result<Output, CliError> {
    let an = analysis(cfg, flags)?;
    let h = match flags.h {
        Some(h) => h,
        None => *h_values(cfg, flags)?.first().expect("non-empty"),
    };
    let seed = pick_seed(&an, h, flags.seed_index)?;
    let row = run_oracle(&an, h, seed, &oracle_config(cfg, flags))?;
    ok(Json::obj([
        ("h", Json::Num(h)),
        ("seed", Json::Num(row.seed)),
        ("E_re", Json::Num(row.e.re)),
        ("E_im", Json::Num(row.e.im)),
        ("residual", Json::Num(row.residual)),
        ("im_green", Json::Num(row.im_green)),
        ("iterations", Json::Int(row.iterations as i64)),
        (
            "theta_im",
            row.theta_im.map_or(Json::Null, |(a, b)| Json::nums(&[a, b])),
        ),
    ]))
}

fn compare(cfg: &RunConfig, flags: &Flags) -> Result<Output, CliError> {
    let an = analysis(cfg, flags)?;
    let oc = oracle_config(cfg, flags);
    let expo = an.width_exponent();
    let hs = h_values(cfg, flags)?;
    let mut rows = Vec::new();
    let mut csv = String::from("h,seed,pseudo_re,pseudo_im,D,im_pred,im_oracle,im_green,ratio\n");
    let (mut im_or, mut im_pr) = (Vec::new(), Vec::new());
    for &h in &hs {
        let seed = pick_seed(&an, h, flags.seed_index)?;
        let ps = refine_pseudo(&an, seed, h)?;
        let d = width_coefficient(&an, seed, h, WidthVariant::OneSwitch)?.d;
        let pred = -d * h.powf(expo);
        let row = run_oracle(&an, h, seed, &oc)?;
        let ratio = row.e.im / pred;
        im_or.push(row.e.im);
        im_pr.push(pred);
        let vals = [h, seed, ps.e.re, ps.e.im, d, pred, row.e.im, row.im_green, ratio];
        let line: Vec<String> = vals.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(csv, "{}", line.join(","));
        rows.push(Json::obj([
            ("h", Json::Num(h)),
            ("seed", Json::Num(seed)),
            ("pseudo_re", Json::Num(ps.e.re)),
            ("pseudo_im", Json::Num(ps.e.im)),
            ("D", Json::Num(d)),
            ("im_pred", Json::Num(pred)),
            ("im_oracle", Json::Num(row.e.im)),
            ("im_green", Json::Num(row.im_green)),
            ("ratio", Json::Num(ratio)),
            ("m0", Json::Int(an.m0() as i64)),
        ]));
    }
    let fit = |ims: &[f64]| exponent_fit(&hs, ims).ok().map(|f| f.slope);
    let doc = Json::obj([
        ("m0", Json::Int(an.m0() as i64)),
        ("expected_slope", Json::Num(expo)),
        ("slope", Json::opt(fit(&im_or))),
        ("slope_pred", Json::opt(fit(&im_pr))),
        ("rows", Json::Arr(rows)),
    ]);
    Ok(Output {
        code: 0,
        text: format!("{doc}\n"),
        table: Some(csv),
    })
}

/// Default step sizes of the stationary-phase check.
pub const STPHASE_H: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

/// CSV of numeric vs asymptotic `int_{-1}^{1} sigma e^{i phi/h}` with the
/// stationary point at x = 0. Defaults: phi = x^(m+1), sigma = 1, calib = 2.
fn stphase(_cfg: &RunConfig, flags: &Flags) -> Result<Output, CliError> {
    let ms: Vec<usize> = match flags.m {
        Some(m) if (1..=6).contains(&m) => vec![m],
        Some(m) => return Err(CliError::Usage(format!("order m = {m} outside 1..=6"))),
        None => vec![1, 2, 3],
    };
    let hs = match (&flags.h, &flags.h_list) {
        (Some(h), _) => vec![*h],
        (None, Some(l)) => l.clone(),
        (None, None) => STPHASE_H.to_vec(),
    };
    let calib = flags.calib.unwrap_or(2.0);
    let parse = |what: &str, src: &str| {
        exprs::parse(src).map_err(|e| CliError::Usage(format!("--{what}: {e}")))
    };
    let sigma = match &flags.sigma {
        Some(s) => parse("sigma", s)?,
        None => Expr::Num(1.0),
    };
    let domain = |e: crate::DomainError| CliError::Validation(e.to_string());
    let sigma0 = sigma.eval_real(0.0).map_err(domain)?;
    let mut csv = String::from("m,h,numeric_re,numeric_im,asym_re,asym_im,ratio,scaled_remainder\n");
    for &m in &ms {
        let phase = match &flags.phi {
            Some(s) => parse("phi", s)?,
            None => Expr::Pow(Box::new(Expr::X), m as i32 + 1),
        };
        let jet = exprs::taylor_jet(&phase, 0.0, m + 1).map_err(domain)?;
        for &h in &hs {
            let numeric = oscillatory_integral(
                |x| C64::new(sigma.eval_real(x).unwrap_or(f64::NAN), 0.0),
                |x| phase.eval_real(x).unwrap_or(f64::NAN),
                (-1.0, 1.0),
                h,
                NODE_BUDGET,
            )?;
            if !numeric.re.is_finite() || !numeric.im.is_finite() {
                return Err(CliError::Validation("phi or sigma is not finite on [-1, 1]".into()));
            }
            let asym = stationary_phase(C64::new(sigma0, 0.0), &jet, m, h, calib)?;
            let remainder = (numeric - asym).norm() / h.powf(1.0 / (m as f64 + 1.0));
            let vals = [h, numeric.re, numeric.im, asym.re, asym.im, numeric.norm() / asym.norm(), remainder];
            let cells: Vec<String> = vals.iter().map(|v| fmt_num(*v)).collect();
            let _ = writeln!(csv, "{m},{}", cells.join(","));
        }
    }
    Ok(Output {
        code: 0,
        text: csv,
        table: None,
    })
}

/// Channel label used in outputs.
pub fn channel_label(c: Channel) -> String {
    format!("V{}", c.number())
}
