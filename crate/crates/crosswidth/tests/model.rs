use crosswidth::model::fixtures::{f0, f1, f2, harmonic, simple_transversal, tangent_family, tangent_well};
use crosswidth::model::{
    contact_order, crossing_points, turning_points, validate_structure, Channel, End, ModelError, Problem, Side,
    TailKind, ToleranceSet,
};
use crosswidth::exprs::parse;
use crosswidth::C64;
use proptest::prelude::*;

fn tol() -> ToleranceSet {
    ToleranceSet::default()
}

fn quad(v1: &str, v2: &str, e0: f64) -> Problem {
    Problem::parse(v1, v2, "1", "0", e0, (-3.0, 3.0), 3.0).unwrap()
}

#[test]
fn turning_points_of_parabola() {
    let v = parse("x^2").unwrap();
    let tps = turning_points(&v, Channel::One, 1.0, (-3.0, 3.0), &tol()).unwrap();
    assert_eq!(tps.len(), 2);
    assert!((tps[0].x + 1.0).abs() < 1e-12 && (tps[1].x - 1.0).abs() < 1e-12);
    assert_eq!(tps[0].side, Side::Left);
    assert_eq!(tps[1].side, Side::Right);
    assert!(turning_points(&v, Channel::One, -1.0, (-3.0, 3.0), &tol()).unwrap().is_empty());
}

#[test]
fn turning_points_of_well() {
    let v = parse("1-1/cosh(x)^2").unwrap();
    let tps = turning_points(&v, Channel::One, 0.75, (-10.0, 10.0), &tol()).unwrap();
    let x = 2f64.acosh();
    assert_eq!(tps.len(), 2);
    assert!((tps[0].x + x).abs() < 1e-12 && (tps[1].x - x).abs() < 1e-12);
}

#[test]
fn degenerate_turning_point_is_rejected() {
    let v = parse("(x - 0.3)^3").unwrap();
    let err = turning_points(&v, Channel::Two, 0.0, (-1.0, 1.0), &tol()).unwrap_err();
    assert!(matches!(err, ModelError::DegenerateTurningPoint { .. }));
}

#[test]
fn transversal_crossing_of_parabola_and_line() {
    let cs = crossing_points(&quad("x^2", "0-x", 1.0)).unwrap();
    assert_eq!(cs.len(), 1);
    let c = cs[0];
    assert!(c.x.abs() < 1e-12);
    assert!((c.xi - 1.0).abs() < 1e-12);
    assert_eq!(c.m, 1);
    assert!((c.dv + 1.0).abs() < 1e-12);
    assert_eq!(c.u_plus, C64::new(1.0, 0.0));
}

#[test]
fn quadratic_contact() {
    // dv is a difference of second derivatives: -2 - 2.
    let cs = crossing_points(&quad("x^2", "0-x^2", 1.0)).unwrap();
    assert_eq!(cs.len(), 1);
    assert_eq!(cs[0].m, 2);
    assert!(cs[0].x.abs() < 1e-9);
    assert!((cs[0].dv + 4.0).abs() < 1e-9);
}

#[test]
fn coupling_at_crossing() {
    let p = Problem::parse("x^2", "0-x", "2 + x", "3", 1.0, (-3.0, 3.0), 3.0).unwrap();
    let c = crossing_points(&p).unwrap()[0];
    assert!((c.u_plus - C64::new(2.0, 3.0)).norm() < 1e-12);
    assert!((c.u_minus - C64::new(2.0, -3.0)).norm() < 1e-12);
}

#[test]
fn tangency_at_minus_one() {
    let p = tangent_well();
    let t = (-1f64).tanh();
    let (nu, mu) = (-2.0 * t, -t * t);
    for x in [-2.0, -0.5, 0.7] {
        let want = mu - nu * f64::tanh(x);
        assert!((p.v2.eval_real(x).unwrap() - want).abs() < 1e-12);
    }
    let cs = crossing_points(&p).unwrap();
    assert_eq!(cs.len(), 1);
    assert_eq!(cs[0].m, 2);
    assert!((cs[0].x + 1.0).abs() < 1e-6);
}

#[test]
fn contact_on_a_well_wall_is_not_a_crossing() {
    let p = quad("x^2", "1 - 2*(x - 1)", 1.0);
    assert!(crossing_points(&p).unwrap().is_empty());
    let r = validate_structure(&p).unwrap();
    assert!(!r.flags.iter().find(|f| f.name == "crossings").unwrap().passed);
}

#[test]
fn identical_potentials_overflow_contact_order() {
    let p = quad("x^2", "x^2", 1.0);
    assert!(matches!(contact_order(&p, 0.0), Err(ModelError::ContactOrderOverflow { .. })));
}

#[test]
fn f0_validates() {
    let r = validate_structure(&f0()).unwrap();
    assert!(r.passed(), "{:?}", r.flags);
    assert_eq!(r.m0, 1);
    assert_eq!(r.crossings.len(), 2);
    assert!(r.ensure_valid().is_ok());
}

#[test]
fn no_well_fails() {
    let p = Problem::parse("x^2+2", "0-x", "1", "0", 1.0, (-3.0, 3.0), 3.0).unwrap();
    let r = validate_structure(&p).unwrap();
    assert!(!r.passed());
    let f = r.flags.iter().find(|f| f.name == "simple_well").unwrap();
    assert!(!f.passed);
    assert!(matches!(r.ensure_valid(), Err(ModelError::ValidationFailed(_))));
}

#[test]
fn f1_validates_with_quadratic_contact() {
    let r = validate_structure(&f1()).unwrap();
    assert!(r.passed(), "{:?}", r.flags);
    assert_eq!(r.m0, 2);
    assert!(r.v2_turning.is_empty());
    let outgoing = r.tails.iter().filter(|t| t.kind == TailKind::Outgoing).count();
    assert_eq!((r.tails.len(), outgoing), (4, 2));
}

#[test]
fn f2_has_one_outgoing_and_one_incoming_tail() {
    let r = validate_structure(&f2()).unwrap();
    assert!(r.passed(), "{:?}", r.flags);
    assert_eq!(r.m0, 3);
    assert_eq!(r.tails.len(), 2);
    let out: Vec<_> = r.tails.iter().filter(|t| t.kind == TailKind::Outgoing).collect();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].direction, End::PlusInf);
    assert_eq!(out[0].xi_sign, 1);
}

#[test]
fn tail_orientation_rule() {
    for r in [f0(), f1(), f2(), simple_transversal()].iter().map(|p| validate_structure(p).unwrap()) {
        for t in &r.tails {
            let outgoing = t.direction.sign() == t.xi_sign;
            assert_eq!(outgoing, t.kind == TailKind::Outgoing);
        }
    }
}

#[test]
fn harmonic_fails_window_limits_only() {
    let r = validate_structure(&harmonic()).unwrap();
    let failed: Vec<_> = r.flags.iter().filter(|f| !f.passed).map(|f| f.name).collect();
    assert_eq!(failed, vec!["window_limits"]);
}

#[test]
fn crossing_invariants_on_fixtures() {
    for p in [f0(), f1(), f2(), simple_transversal(), tangent_well()] {
        let r = validate_structure(&p).unwrap();
        for c in &r.crossings {
            let d = p.v(Channel::One, c.x).unwrap() - p.v(Channel::Two, c.x).unwrap();
            assert!(d.abs() <= 10.0 * p.tol.root_tol, "|V1 - V2| = {d:e}");
            let e = c.xi * c.xi + p.v(Channel::One, c.x).unwrap();
            assert!((e - p.e0).abs() <= 1e-12);
            for dx in [-p.tol.root_tol, p.tol.root_tol] {
                assert_eq!(contact_order(&p, c.x + dx).unwrap().0, c.m);
            }
        }
    }
}

#[test]
fn report_is_deterministic() {
    let p = f1();
    assert_eq!(validate_structure(&p).unwrap(), validate_structure(&p).unwrap());
}

#[test]
fn reflection_mirrors_crossings() {
    let p = f2();
    let r = validate_structure(&p).unwrap();
    let rr = validate_structure(&p.reflected()).unwrap();
    assert_eq!(r.crossings.len(), rr.crossings.len());
    let (c, cr) = (r.crossings[0], rr.crossings[0]);
    assert!((c.x + cr.x).abs() < 1e-9);
    assert_eq!(c.m, cr.m);
    assert!((c.dv + cr.dv).abs() < 1e-6 * c.dv.abs());
}

#[test]
fn tangent_family_solves_cubic_contact() {
    let x_c = (-0.4f64).atanh();
    let p = tangent_family(x_c, 3, "0.2", "0").unwrap();
    let (m, dv) = contact_order(&p, x_c).unwrap();
    assert_eq!(m, 3);
    // V1 - V2 = sigma (t - t_c)^3 with sigma = -1/(3 t_c); t' = 1 - t_c^2 at x_c
    let sigma = -1.0 / (3.0 * -0.4);
    let want = -6.0 * sigma * (1.0f64 - 0.16).powi(3);
    assert!((dv - want).abs() < 1e-9 * want.abs());
}

#[test]
fn invalid_problems() {
    assert!(Problem::parse("x^2", "x", "1", "0", 1.0, (1.0, -1.0), 3.0).is_err());
    assert!(Problem::parse("x^2", "x", "1", "0", 1.0, (-1.0, 1.0), 0.0).is_err());
    assert!(Problem::parse("x^2", "x", "1", "0", f64::NAN, (-1.0, 1.0), 3.0).is_err());
    assert!(matches!(
        Problem::parse("x^", "x", "1", "0", 1.0, (-1.0, 1.0), 3.0),
        Err(ModelError::Parse { field: "v1", .. })
    ));
    let mut t = ToleranceSet::default();
    t.quad_tol = 0.0;
    assert!(t.check().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn polynomial_multiplicity_is_contact_order(k in 1i32..=5, r in -0.5f64..0.5, c in 0.5f64..2.0) {
        let v2 = format!("x^2 - {c}*(x - ({r}))^{k}");
        let p = quad("x^2", &v2, 1.0);
        let cs = crossing_points(&p).unwrap();
        let hit: Vec<_> = cs.iter().filter(|cp| (cp.x - r).abs() < 1e-3).collect();
        prop_assert_eq!(hit.len(), 1);
        prop_assert_eq!(hit[0].m, k as usize);
        let fact: f64 = (1..=k).map(f64::from).product();
        prop_assert!((hit[0].dv + c * fact).abs() < 1e-6 * c * fact);
    }
}
