use std::f64::consts::PI;

use crosswidth::exprs::{parse, taylor_jet};
use crosswidth::model::fixtures::{f0, harmonic};
use crosswidth::model::ToleranceSet;
use crosswidth::quadrature::{
    action_derivative, action_loop, gauss_kronrod, oscillatory_integral, piece_action, sqrt_integral,
    stationary_phase, ActionFn, QuadError, NODE_BUDGET,
};
use crosswidth::C64;
use proptest::prelude::*;

/// `A(E) = 2 pi (1 - sqrt(1 - E))` for `V = 1 - sech^2 x`.
fn well_action(e: f64) -> f64 {
    2.0 * PI * (1.0 - (1.0 - e).sqrt())
}

fn one(_: f64) -> C64 {
    C64::new(1.0, 0.0)
}

/// Composite Simpson rule on a fine uniform grid.
fn simpson<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, n: usize) -> C64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += f(a + h * i as f64) * w;
    }
    s * (h / 3.0)
}

#[test]
fn harmonic_loop_action() {
    let p = harmonic();
    assert!((action_loop(&p, 1.0).unwrap() - PI).abs() < 1e-10);
    assert!((action_loop(&p, 0.5).unwrap() - PI / 2.0).abs() < 1e-10);
    assert_eq!(action_loop(&p, 0.0).unwrap(), 0.0);
    assert!(matches!(action_loop(&p, -1.0), Err(QuadError::NoTurningPoints { .. }) | Ok(0.0)));
}

#[test]
fn harmonic_derivative() {
    let p = harmonic();
    for e in [0.3, 1.0, 2.5] {
        assert!((action_derivative(&p, e).unwrap() - PI).abs() < 1e-10);
    }
}

#[test]
fn well_action_closed_form() {
    let p = f0();
    for e in [0.1, 0.5, 0.75, 0.9] {
        assert!((action_loop(&p, e).unwrap() - well_action(e)).abs() < 1e-10);
        let d = action_derivative(&p, e).unwrap();
        assert!((d - PI / (1.0 - e).sqrt()).abs() < 1e-9 * d);
    }
}

#[test]
fn derivative_matches_central_difference() {
    let p = f0();
    let a = ActionFn::for_problem(&p);
    let d = 1e-5;
    let v = a.derivative(0.75).unwrap();
    let fd = (a.action(0.75 + d).unwrap() - a.action(0.75 - d).unwrap()) / (2.0 * d);
    assert!((v - fd).abs() <= 1e-6 * v);
}

#[test]
fn derivative_near_bottom_is_harmonic() {
    // V1''(0) = 2 so the small-oscillation value is 2 pi / sqrt(4) = pi
    let a = ActionFn::for_problem(&f0());
    let v = a.derivative(1e-3).unwrap();
    assert!((v - PI).abs() < 0.01 * PI);
}

#[test]
fn left_arc_of_harmonic_loop() {
    let v = parse("x^2").unwrap();
    let arc = 2.0 * piece_action(&v, 1.0, -1.0, 0.0, 1e-12).unwrap();
    assert!((arc - PI / 2.0).abs() < 1e-10);
    assert_eq!(piece_action(&v, 1.0, 0.3, 0.3, 1e-12).unwrap(), 0.0);
}

#[test]
fn error_estimate_within_tolerance() {
    let a = ActionFn::new(&parse("1-1/cosh(x)^2").unwrap(), (-10.0, 10.0), &ToleranceSet::default());
    let r = a.action_detailed(0.75).unwrap();
    assert!(r.error <= 1e-11);
    assert!(r.evals > 0);
}

#[test]
fn walls_of_the_well() {
    let a = ActionFn::for_problem(&f0());
    let (l, r) = a.walls(0.75).unwrap();
    assert!((r - 2f64.acosh()).abs() < 1e-12 && (l + 2f64.acosh()).abs() < 1e-12);
    assert!(a.walls(1.5).is_err());
}

#[test]
fn gauss_kronrod_generic() {
    let r64 = gauss_kronrod(|x: f64| x.sin(), 0.0, PI, 1e-13);
    assert!((r64.value - 2.0).abs() < 1e-13);
    let r32 = gauss_kronrod(|x: f32| x.exp(), 0.0, 1.0, 1e-5);
    assert!((r32.value - (std::f32::consts::E - 1.0)).abs() < 1e-5);
    let s = sqrt_integral(|x: f32| x * x, 1.0, -1.0, 1.0, 1e-5);
    assert!((s.value - std::f32::consts::PI / 2.0).abs() < 1e-4);
}

#[test]
fn fresnel_integral_at_h_001() {
    let h = 0.01;
    let got = oscillatory_integral(one, |x| x * x, (-1.0, 1.0), h, NODE_BUDGET).unwrap();
    let reference = simpson(|x| C64::from_polar(1.0, x * x / h), -1.0, 1.0, 400_000);
    assert!((got - reference).norm() < 1e-9, "{got} vs {reference}");
    let leading = C64::from_polar((PI * h).sqrt(), PI / 4.0);
    assert!((got - leading).norm() < 2.0 * h);
}

#[test]
fn zero_amplitude() {
    let z = oscillatory_integral(|_| C64::new(0.0, 0.0), |x| x * x, (-1.0, 1.0), 1e-3, NODE_BUDGET).unwrap();
    assert_eq!(z, C64::new(0.0, 0.0));
}

#[test]
fn linear_phase_closed_form() {
    let h = 0.01;
    let got = oscillatory_integral(one, |x| x, (1.0, 2.0), h, NODE_BUDGET).unwrap();
    let i = C64::new(0.0, 1.0);
    let exact = (C64::from_polar(1.0, 2.0 / h) - C64::from_polar(1.0, 1.0 / h)) * (h / i);
    assert!((got - exact).norm() < 1e-10);
    assert!(got.norm() <= 2.0 * h);
}

#[test]
fn budget_is_enforced() {
    let r = oscillatory_integral(one, |x| x * x, (-1.0, 1.0), 1e-6, 1000);
    assert!(matches!(r, Err(QuadError::BudgetExceeded { budget: 1000 })));
}

#[test]
fn stationary_phase_fresnel_normalization() {
    let jet = taylor_jet(&parse("x^2").unwrap(), 0.0, 2).unwrap();
    let h = 1e-4;
    let z = stationary_phase(C64::new(1.0, 0.0), &jet, 1, h, 2.0).unwrap();
    let want = C64::from_polar((PI * h).sqrt(), PI / 4.0);
    assert!((z - want).norm() < 1e-14);
    let half = stationary_phase(C64::new(1.0, 0.0), &jet, 1, h, 1.0).unwrap();
    assert!((half * 2.0 - z).norm() < 1e-15);
}

#[test]
fn stationary_phase_cubic_modulus() {
    let gamma_4_3 = 0.892_979_511_569_249_2;
    let jet = taylor_jet(&parse("x^3").unwrap(), 0.0, 3).unwrap();
    let h = 1e-3;
    for calib in [1.0, 2.0] {
        let z = stationary_phase(C64::new(1.0, 0.0), &jet, 2, h, calib).unwrap();
        // phi''' = 3!, so the factorial ratio is 1
        let want = calib * (PI / 6.0).cos() * gamma_4_3 * h.cbrt();
        assert!((z.norm() - want).abs() < 1e-14);
        assert!(z.im.abs() < 1e-15);
    }
}

#[test]
fn stationary_phase_zero_amplitude_and_preconditions() {
    let jet = taylor_jet(&parse("x^2").unwrap(), 0.0, 2).unwrap();
    let z = stationary_phase(C64::new(0.0, 0.0), &jet, 1, 1e-3, 2.0).unwrap();
    assert_eq!(z, C64::new(0.0, 0.0));
    let bad = taylor_jet(&parse("x + x^2").unwrap(), 0.0, 2).unwrap();
    assert!(matches!(stationary_phase(C64::new(1.0, 0.0), &bad, 1, 1e-3, 2.0), Err(QuadError::PreconditionViolated(_))));
    assert!(stationary_phase(C64::new(1.0, 0.0), &jet, 2, 1e-3, 2.0).is_err());
}

#[test]
fn stationary_phase_remainder_shrinks() {
    for m in 1..=3usize {
        let k = m as i32 + 1;
        let jet = taylor_jet(&parse(&format!("x^{k}")).unwrap(), 0.0, m + 1).unwrap();
        let mut prev = f64::INFINITY;
        for h in [1e-2, 1e-3, 1e-4] {
            let num = oscillatory_integral(one, |x| x.powi(k), (-1.0, 1.0), h, NODE_BUDGET).unwrap();
            let asym = stationary_phase(C64::new(1.0, 0.0), &jet, m, h, 2.0).unwrap();
            let r = (num - asym).norm() / h.powf(1.0 / k as f64);
            assert!(r < prev, "m = {m}, h = {h}: {r} >= {prev}");
            prev = r;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn piece_actions_are_additive(e in 0.2f64..0.95, t in 0.05f64..0.95) {
        let v = parse("1-1/cosh(x)^2").unwrap();
        let a = ActionFn::for_problem(&f0());
        let (l, r) = a.walls(e).unwrap();
        let c = l + (r - l) * t;
        let whole = piece_action(&v, e, l, r, 1e-12).unwrap();
        let parts = piece_action(&v, e, l, c, 1e-12).unwrap() + piece_action(&v, e, c, r, 1e-12).unwrap();
        prop_assert!((whole - parts).abs() < 1e-10);
        prop_assert!((2.0 * whole - well_action(e)).abs() < 1e-10);
    }

    #[test]
    fn harmonic_action_is_linear(e in 0.01f64..4.0) {
        let a = ActionFn::for_problem(&harmonic());
        prop_assert!((a.action(e).unwrap() - PI * e).abs() < 1e-10);
    }
}
