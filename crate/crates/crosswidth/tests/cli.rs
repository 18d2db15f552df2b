use std::path::Path;

use crosswidth::cli::{fmt_num, load_config, parse_config, parse_h_list, run_subcommand, CliError, Command, Flags};
use serde_json::Value;

const F0: &str = r#"
[problem]
v1 = "1 - 1/cosh(x)^2"
v2 = "0.35 - 0.25*tanh(x)"
r0 = "0.2*(tanh(x) + 0.125 + sqrt(0.365625))"
r1 = "0"
e0 = 0.75
window = [-10, 10]
L = 3

[sweep]
h_list = "0.08,0.06,0.05,0.04,0.03"
"#;

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

fn config_line(e: CliError) -> (usize, String) {
    match e {
        CliError::Config { line, message, .. } => (line, message),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn parses_full_config() {
    let cfg = parse_config(F0, "f0").unwrap();
    assert_eq!(cfg.h_list, vec![0.08, 0.06, 0.05, 0.04, 0.03]);
    assert_eq!(cfg.problem.e0, 0.75);
    assert_eq!(cfg.problem.l, 3.0);
    assert_eq!(cfg.calib, 1.0);
}

#[test]
fn missing_key_is_named() {
    let text = F0.replace("e0 = 0.75\n", "");
    let e = parse_config(&text, "f0").unwrap_err();
    assert_eq!(e.exit_code(), 2);
    let (_, msg) = config_line(e);
    assert!(msg.contains("e0"), "{msg}");
}

#[test]
fn unknown_key_reports_its_line() {
    let text = F0.replace("L = 3", "L = 3\nbogus = 1");
    let (line, msg) = config_line(parse_config(&text, "f0").unwrap_err());
    assert_eq!(line, 10);
    assert!(msg.contains("bogus"), "{msg}");
}

#[test]
fn bad_expression_reports_its_line() {
    let text = F0.replace("0.35 - 0.25*tanh(x)", "0.35 - 0.25 tanh(x)");
    let (line, msg) = config_line(parse_config(&text, "f0").unwrap_err());
    assert_eq!(line, 4);
    assert!(msg.starts_with("v2"), "{msg}");
}

#[test]
fn h_list_must_decrease() {
    let text = F0.replace("0.08,0.06", "0.06,0.08");
    let (line, msg) = config_line(parse_config(&text, "f0").unwrap_err());
    assert_eq!(line, 12);
    assert!(msg.contains("decreasing"));
    assert!(parse_config(&F0.replace("\"0.08,0.06,0.05,0.04,0.03\"", "[0.1, 0.05]"), "f0").is_ok());
    assert!(parse_h_list("0.1, x").is_err());
    assert_eq!(parse_h_list("0.1, 0.05").unwrap(), vec![0.1, 0.05]);
}

#[test]
fn window_and_numerics_are_checked() {
    assert!(parse_config(&F0.replace("[-10, 10]", "[10, -10]"), "f0").is_err());
    assert!(parse_config(&F0.replace("L = 3", "L = 0"), "f0").is_err());
    let with_calib = format!("{F0}\n[numerics]\ncalib = 2\nquad_tol = 1e-10\n");
    let cfg = parse_config(&with_calib, "f0").unwrap();
    assert_eq!((cfg.calib, cfg.problem.tol.quad_tol), (2.0, 1e-10));
    assert!(parse_config(&format!("{F0}\n[numerics]\ncalib = -1\n"), "f0").is_err());
    assert!(parse_config(&format!("{F0}\n[oracle]\nX = 20\node_tol = 1e-10\n"), "f0").is_ok());
}

#[test]
fn missing_file_is_an_io_error() {
    let e = load_config(Path::new("/nonexistent/cfg.toml")).unwrap_err();
    assert!(matches!(e, CliError::Io { .. }));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn shipped_configs_load() {
    for name in ["f0", "f1", "f2", "simple", "f0_decoupled", "harmonic"] {
        let cfg = load_config(&configs().join(format!("{name}.toml"))).unwrap();
        assert!(!cfg.h_list.is_empty(), "{name}");
    }
}

#[test]
fn command_names_round_trip() {
    for c in Command::ALL {
        assert_eq!(c.name().parse::<Command>().unwrap(), c);
    }
    assert!("nope".parse::<Command>().is_err());
}

#[test]
fn number_format() {
    assert_eq!(fmt_num(0.75), "7.5000000000000000e-1");
    assert_eq!(fmt_num(f64::NAN), "null");
    assert_eq!(fmt_num(f64::INFINITY), "null");
}

#[test]
fn analyze_reports_structure_and_graph() {
    let cfg = parse_config(F0, "f0").unwrap();
    let out = run_subcommand(Command::Analyze, &cfg, &Flags::default());
    assert_eq!(out.code, 0);
    let v = json(&out.text);
    assert_eq!(v["structure"]["passed"], Value::Bool(true));
    assert_eq!(v["structure"]["m0"], 1);
    assert_eq!(v["graph"]["vertex_count"], 4);
    assert_eq!(v["graph"]["edge_count"], 6);
    let a = v["action"].as_f64().unwrap();
    assert!((a - std::f64::consts::PI).abs() < 1e-10);
    let d = v["action_derivative"].as_f64().unwrap();
    assert!((d - 2.0 * std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn analyze_fails_validation_with_exit_two() {
    let cfg = load_config(&configs().join("harmonic.toml")).unwrap();
    let out = run_subcommand(Command::Analyze, &cfg, &Flags::default());
    assert_eq!(out.code, 2);
    let v = json(&out.text);
    assert_eq!(v["graph"], Value::Null);
    assert!(v["action"].as_f64().unwrap() > 0.0);
}

#[test]
fn bs_lists_harmonic_grid() {
    let cfg = load_config(&configs().join("harmonic.toml")).unwrap();
    let flags = Flags { h: Some(0.07), ..Flags::default() };
    let out = run_subcommand(Command::Bs, &cfg, &flags);
    assert_eq!(out.code, 0);
    let mut lines = out.text.lines();
    assert_eq!(lines.next(), Some("h,index,E"));
    let es: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(es.len(), 3);
    for (e, k) in es.iter().zip([6, 7, 8]) {
        assert!((e - (2 * k + 1) as f64 * 0.07).abs() < 1e-10);
    }
}

#[test]
fn usage_errors_become_error_documents() {
    let cfg = parse_config(F0, "f0").unwrap();
    let flags = Flags { h_list: Some(vec![0.01, 0.02]), ..Flags::default() };
    let out = run_subcommand(Command::Pseudo, &cfg, &flags);
    assert_eq!(out.code, 2);
    let v = json(&out.text);
    assert_eq!(v["command"], "pseudo");
    assert_eq!(v["error"]["kind"], "usage");
}

#[test]
fn closed_form_needs_simple_topology() {
    let cfg = parse_config(F0, "f0").unwrap();
    let flags = Flags { h: Some(0.05), ..Flags::default() };
    let v = json(&run_subcommand(Command::Widths, &cfg, &flags).text);
    let recs = v["records"].as_array().unwrap();
    assert!(!recs.is_empty());
    for r in recs {
        assert_eq!(r["closed_form_D"], Value::Null);
        assert!(r["D"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn widths_of_simple_model() {
    let cfg = load_config(&configs().join("simple.toml")).unwrap();
    let flags = Flags { h: Some(0.05), ..Flags::default() };
    let out = run_subcommand(Command::Widths, &cfg, &flags);
    assert_eq!(out.code, 0, "{}", out.text);
    let v = json(&out.text);
    let recs = v["records"].as_array().unwrap();
    assert!(!recs.is_empty());
    for r in recs {
        let (d, cf) = (r["D"].as_f64().unwrap(), r["closed_form_D"].as_f64().unwrap());
        assert!((d - cf).abs() <= 1e-10 * d.max(cf));
    }
}

#[test]
fn stphase_table() {
    let cfg = parse_config(F0, "f0").unwrap();
    let flags = Flags { m: Some(1), ..Flags::default() };
    let out = run_subcommand(Command::Stphase, &cfg, &flags);
    assert_eq!(out.code, 0);
    let rows: Vec<Vec<f64>> = out
        .text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|s| s.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let last = rows.last().unwrap();
    assert_eq!(last[1], 1e-5);
    assert!((last[6] - 1.0).abs() < 0.01);
    let bad = Flags { m: Some(9), ..Flags::default() };
    assert_eq!(run_subcommand(Command::Stphase, &cfg, &bad).code, 2);
}

#[test]
fn output_is_deterministic() {
    let cfg = parse_config(F0, "f0").unwrap();
    let flags = Flags { h: Some(0.05), ..Flags::default() };
    for cmd in [Command::Analyze, Command::Pseudo, Command::Widths, Command::Bs] {
        let a = run_subcommand(cmd, &cfg, &flags);
        let b = run_subcommand(cmd, &cfg, &flags);
        assert_eq!(a, b, "{}", cmd.name());
    }
}
