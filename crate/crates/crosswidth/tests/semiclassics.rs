use std::f64::consts::PI;

use crosswidth::geometry::PathSeq;
use crosswidth::model::fixtures::{f0, f1, f2, harmonic, simple_transversal, tangent_well};
use crosswidth::model::{crossing_points, Channel, Problem};
use crosswidth::semiclassics::{
    bohr_sommerfeld, closed_form_width_example, eta, omega, pseudo_resonances, refine_pseudo, transfer_matrix,
    vanishing_energies, width_coefficient, Analysis, Span, WidthVariant,
};
use crosswidth::C64;
use proptest::prelude::*;

const WELL: &str = "1 - 1/cosh(x)^2";

fn analysis(p: Problem) -> Analysis {
    Analysis::new(p).unwrap()
}

fn decoupled() -> Problem {
    Problem::parse(WELL, "0.35 - 0.25*tanh(x)", "0", "0", 0.75, (-10.0, 10.0), 3.0).unwrap()
}

fn well_action(e: f64) -> f64 {
    2.0 * PI * (1.0 - (1.0 - e).sqrt())
}

fn one_switch(an: &Analysis, e: f64, h: f64) -> f64 {
    width_coefficient(an, e, h, WidthVariant::OneSwitch).unwrap().d
}

#[test]
fn uncoupled_transfer_is_identity() {
    let c = crossing_points(&decoupled()).unwrap()[0];
    let t = transfer_matrix(&c, 0, 1, 0.05, 1.0);
    assert_eq!(t.t, [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]]);
}

#[test]
fn transversal_omega() {
    let p = Problem::parse("x^2", "0-x", "1", "0", 1.0, (-3.0, 3.0), 3.0).unwrap();
    let c = crossing_points(&p).unwrap()[0];
    let w = omega(&c, 1, 1.0);
    let want = C64::from_polar(PI.sqrt(), -PI / 4.0);
    assert!((w - want).norm() < 1e-12, "{w}");
    let t = transfer_matrix(&c, 0, 1, 0.01, 1.0);
    let i = C64::new(0.0, 1.0);
    assert!((t.t[1][0] - (-i * want * 0.1)).norm() < 1e-12);
    assert!((t.t[0][1] - (-i * want.conj() * 0.1)).norm() < 1e-12);
}

#[test]
fn quadratic_contact_eta_is_real() {
    let c = crossing_points(&tangent_well()).unwrap()[0];
    let e = eta(&c);
    assert!(e.im.abs() < 1e-15);
    let gamma_4_3 = 0.892_979_511_569_249_2;
    let want = 3f64.sqrt() / 2.0 * (12.0 / c.dv.abs()).cbrt() * gamma_4_3;
    assert!((e.re - want).abs() < 1e-12);
}

#[test]
fn transversal_eta_phase() {
    let c = crossing_points(&simple_transversal()).unwrap()[0];
    let e = eta(&c);
    assert!((e.norm() - (4.0 / c.dv.abs()).sqrt() * PI.sqrt() / 2.0).abs() < 1e-12);
    assert!((e.arg().abs() - PI / 4.0).abs() < 1e-12);
}

#[test]
fn amplitudes_multiply_along_paths() {
    let an = analysis(f0());
    let ev = an.at(C64::new(0.751, -2e-4), 0.05).unwrap();
    let g = &an.graph;
    for c in g.primitive_cycles() {
        let es = &c.edges;
        if es.len() < 2 {
            continue;
        }
        for cut in 1..es.len() {
            let (a, b) = es.split_at(cut);
            let pa = PathSeq { edges: a.to_vec(), tail: None, switch_count: 0 };
            let pb = PathSeq { edges: b.to_vec(), tail: None, switch_count: 0 };
            let v = g.edges[a[cut - 1]].target;
            let j = ev.tau(v, g.edge_channel(a[cut - 1]), g.edge_channel(b[0]));
            let whole = ev.probability_amplitude(&PathSeq { edges: es.clone(), tail: None, switch_count: 0 }, Span::Edges);
            let prod = ev.probability_amplitude(&pa, Span::Edges) * j * ev.probability_amplitude(&pb, Span::Edges);
            assert!((whole - prod).norm() < 1e-12 * whole.norm().max(1e-300));
        }
    }
}

#[test]
fn gamma1_cycle_amplitude() {
    let an = analysis(f0());
    let h = 0.05;
    let e = 0.74;
    let ev = an.at(C64::new(e, 0.0), h).unwrap();
    let cyc = an.graph.gamma1_cycle();
    let amp = ev.probability_amplitude(&PathSeq { edges: cyc, tail: None, switch_count: 0 }, Span::Cycle);
    let want = -C64::from_polar(1.0, well_action(e) / h);
    assert!((amp - want).norm() < 1e-9, "{amp} vs {want}");
}

#[test]
fn determinant_by_lu_matches_cycle_expansion() {
    for p in [f0(), f1(), f2(), simple_transversal(), tangent_well()] {
        let an = analysis(p);
        for z in [C64::new(0.75, 0.0), C64::new(0.73, -0.01), C64::new(0.77, 0.02)] {
            let ev = an.at(z, 0.04).unwrap();
            let (a, b) = (ev.det(), ev.det_cycle_expansion());
            assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()), "{a} vs {b}");
        }
    }
}

#[test]
fn decoupled_determinant_is_bohr_sommerfeld() {
    let an = analysis(decoupled());
    let h = 0.05;
    let d1 = an.action.derivative(0.74).unwrap();
    for z in [C64::new(0.74, 0.0), C64::new(0.74, -3e-3)] {
        let a = C64::new(well_action(z.re), z.im * d1);
        let want = C64::new(1.0, 0.0) + (C64::new(0.0, 1.0) * a / h).exp();
        let got = an.at(z, h).unwrap().det();
        assert!((got - want).norm() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn harmonic_bohr_sommerfeld_grid() {
    let h = 0.07;
    let es = bohr_sommerfeld(&harmonic(), h).unwrap();
    assert_eq!(es.len(), 3);
    for (e, k) in es.iter().zip([6, 7, 8]) {
        assert!((e - (2 * k + 1) as f64 * h).abs() < 1e-10, "{e}");
    }
    assert!(bohr_sommerfeld(&harmonic(), -1.0).is_err());
}

#[test]
fn well_bohr_sommerfeld_closed_form() {
    let h = 0.05;
    let es = bohr_sommerfeld(&f0(), h).unwrap();
    for e in &es {
        let k = (well_action(*e) / (PI * h) - 1.0) / 2.0;
        assert!((k - k.round()).abs() < 1e-9);
        assert!((e - 0.75).abs() <= 3.0 * h);
    }
    let n = es.len();
    let expected = {
        let n_of = |e: f64| (well_action(e) / (PI * h) - 1.0) / 2.0;
        (n_of(0.9).floor() - n_of(0.6).ceil()) as usize + 1
    };
    assert_eq!(n, expected);
}

#[test]
fn pseudo_resonance_count_matches_winding() {
    let an = analysis(f0());
    let r = pseudo_resonances(&an, 0.05).unwrap();
    assert_eq!(r.in_box, r.seeds.len());
    assert_eq!(r.arg_count, r.seeds.len() as i64);
    assert!(r.roots.iter().all(|q| q.converged));
}

#[test]
fn tangential_pseudo_resonance_leaves_the_axis() {
    let an = analysis(f1());
    let h = 0.05;
    let seeds = bohr_sommerfeld(&an.problem, h).unwrap();
    let r = refine_pseudo(&an, seeds[0], h).unwrap();
    assert!(r.converged);
    assert!(r.e.im <= 0.0);
    assert!((r.e.re - seeds[0]).abs() < h);
    assert!(an.at(r.e, h).unwrap().det().norm() <= 1e-10);
}

#[test]
fn decoupled_width_vanishes() {
    let an = analysis(decoupled());
    for v in [WidthVariant::OneSwitch, WidthVariant::Full] {
        assert_eq!(width_coefficient(&an, 0.75, 0.05, v).unwrap().d, 0.0);
    }
}

#[test]
fn closed_form_equals_one_switch() {
    let cases = [simple_transversal(), tangent_well(), f2(), simple_transversal().reflected(), f2().reflected()];
    for p in cases {
        let an = analysis(p);
        for h in [0.05, 0.02] {
            for k in 0..10 {
                let e = 0.72 + 0.006 * k as f64;
                let a = one_switch(&an, e, h);
                let b = closed_form_width_example(&an, e, h).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn closed_form_rejects_other_topologies() {
    assert!(closed_form_width_example(&analysis(f0()), 0.75, 0.05).is_err());
}

#[test]
fn width_vanishes_at_predicted_energies() {
    let an = analysis(simple_transversal());
    let h = 0.02;
    let zs = vanishing_energies(&an, h, (0.7, 0.8)).unwrap();
    assert!(!zs.is_empty());
    let scale = (0..20).map(|k| one_switch(&an, 0.7 + 0.005 * k as f64, h)).fold(0.0, f64::max);
    for e in zs {
        assert!(one_switch(&an, e, h) < 1e-10 * scale, "D({e})");
    }
}

#[test]
fn full_and_one_switch_agree_to_leading_order() {
    let an = analysis(f0());
    for h in [0.05, 0.02] {
        let a = one_switch(&an, 0.75, h);
        let b = width_coefficient(&an, 0.75, h, WidthVariant::Full).unwrap().d;
        assert!((a - b).abs() < 0.5 * a, "{a} vs {b}");
    }
}

#[test]
fn width_independent_of_base_and_origin() {
    let an = analysis(f0());
    let h = 0.05;
    let g = &an.graph;
    let base = one_switch(&an, 0.75, h);
    for e0 in g.admissible_e0() {
        let d = one_switch(&an.with_graph(g.with_e0(e0).unwrap()), 0.75, h);
        assert!((d - base).abs() <= 1e-12 * base, "e0 = {e0}");
    }
    for edge in 0..g.edges.len() {
        for piece in 0..g.edges[edge].pieces.len() {
            for frac in [0.2, 0.7] {
                let moved = an.with_graph(g.with_base(edge, piece, frac).unwrap());
                let d = one_switch(&moved, 0.75, h);
                assert!((d - base).abs() <= 1e-12 * base, "edge {edge} piece {piece}");
            }
        }
    }
}

#[test]
fn width_scales_with_calibration() {
    let an = analysis(simple_transversal());
    let d1 = one_switch(&an, 0.75, 0.05);
    let d2 = one_switch(&an.clone().with_calib(2.0), 0.75, 0.05);
    assert!((d2 - 4.0 * d1).abs() < 1e-12 * d2);
}

#[test]
fn one_switch_paths_end_at_their_tail() {
    let an = analysis(f0());
    let g = &an.graph;
    let w = width_coefficient(&an, 0.75, 0.05, WidthVariant::OneSwitch).unwrap();
    assert!(!w.tails.is_empty());
    for t in &w.tails {
        assert!(!t.paths.is_empty());
        for (p, _) in &t.paths {
            let last = *p.edges.last().unwrap();
            assert_eq!(g.tails[t.tail].attach, Some(g.edges[last].target));
            let tail_switch = usize::from(g.edge_channel(last) != Channel::Two);
            assert_eq!(g.count_switches(&p.edges, false) + tail_switch, 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn width_is_nonnegative_and_finite(e in 0.7f64..0.8, h in 0.01f64..0.08) {
        for p in [f0(), f1(), f2()] {
            let an = analysis(p);
            let d = one_switch(&an, e, h);
            prop_assert!(d.is_finite() && d >= 0.0);
        }
    }

    #[test]
    fn lu_and_cycles_agree_off_axis(re in 0.72f64..0.78, im in -0.02f64..0.02) {
        let an = analysis(f1());
        let ev = an.at(C64::new(re, im), 0.03).unwrap();
        let (a, b) = (ev.det(), ev.det_cycle_expansion());
        prop_assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
    }
}
