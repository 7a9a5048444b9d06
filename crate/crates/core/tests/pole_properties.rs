mod common;

use mhj_core::physics::{big_theta, vartheta, PhysicalParams};
use mhj_core::poles::{dispersion_roots, min_lambda_denominator, pole_sensitivity, solve_pole, viete_modulus};
use num_complex::Complex64;
use proptest::prelude::*;

use common::{companion_roots, dispersion_coeffs, grid_min_denominator, poly_eval};

fn params() -> impl Strategy<Value = PhysicalParams> {
    (-4.0f64..-1.0, 0.5f64..3.0, -10.0f64..-2.0, prop_oneof![Just(0.0), 0.001f64..1.0])
        .prop_map(|(lt, c, ld, w0)| PhysicalParams::new(10f64.powf(lt), c, 10f64.powf(ld), w0).unwrap())
}

fn lambda() -> impl Strategy<Value = f64> {
    (-2.0f64..4.0).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn pole_solves_the_dispersion_relation(p in params(), lam in lambda()) {
        let e = solve_pole(lam, &p).unwrap();
        let g = vartheta(e.pole, &p) + big_theta(e.pole, &p) * lam;
        let size = vartheta(e.pole, &p).norm() + big_theta(e.pole, &p).norm() * lam;
        prop_assert!(g.norm() <= 1e-10 * size);
        prop_assert!(e.pole.re <= 0.0);
        prop_assert!(e.pole.im >= 0.0);
    }

    #[test]
    fn roots_agree_with_naive_companion(p in params(), lam in lambda()) {
        let coeffs = dispersion_coeffs(p.tau(), p.c(), p.delta(), p.omega0(), lam);
        let roots = dispersion_roots(lam, &p).unwrap();
        for z in companion_roots(&coeffs) {
            let near = roots.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(near <= 1e-9 * z.norm(), "oracle root {z} unmatched ({near:e})");
        }
    }

    #[test]
    fn vieta_sum_and_product_of_roots(p in params(), lam in lambda()) {
        let r = dispersion_roots(lam, &p).unwrap();
        let sum: Complex64 = r.iter().sum();
        let prod: Complex64 = r.iter().product();
        let want_prod = -p.c_sq() * lam / p.tau();
        prop_assert!((sum + 1.0 / p.tau()).norm() <= 1e-9 / p.tau());
        prop_assert!((prod - want_prod).norm() <= 1e-9 * want_prod.abs());
    }

    #[test]
    fn time_rescaling_scales_poles(p in params(), lam in lambda(), s in 0.01f64..100.0) {
        // t' = s·t: τ' = sτ, c' = c/s, δ' = δ/s, ω₀' = ω₀/s and p' = p/s.
        let q = PhysicalParams::new(p.tau() * s, p.c() / s, p.delta() / s, p.omega0() / s).unwrap();
        let a = solve_pole(lam, &p).unwrap().pole;
        let b = solve_pole(lam, &q).unwrap().pole;
        prop_assert!((b * s - a).norm() <= 1e-9 * a.norm());
    }

    #[test]
    fn length_rescaling_leaves_poles(p in params(), lam in lambda(), s in 0.01f64..100.0) {
        // x' = s·x: λ' = λ/s², c' = sc, δ' = s²δ with time untouched.
        let q = PhysicalParams::new(p.tau(), p.c() * s, p.delta() * s * s, p.omega0()).unwrap();
        let a = solve_pole(lam, &p).unwrap().pole;
        let b = solve_pole(lam / (s * s), &q).unwrap().pole;
        prop_assert!((b - a).norm() <= 1e-9 * a.norm());
    }

    #[test]
    fn gap_identity_on_the_imaginary_axis(p in params(), w in 0.01f64..1e3) {
        let o = Complex64::new(0.0, w);
        let th = vartheta(o, &p);
        let bt = big_theta(o, &p);
        let (a2, d2, b) = (bt.norm_sqr(), th.norm_sqr(), -(th * bt.conj()).re);
        let gap = (p.delta() * w.powi(3) + p.omega0() * p.c_sq() * w).powi(2);
        prop_assert!((a2 * d2 - b * b - gap).abs() <= 1e-9 * a2 * d2);
        if p.omega0() == 0.0 {
            prop_assert!((gap - p.delta().powi(2) * w.powi(6)).abs() <= 1e-12 * gap);
        }
    }

    #[test]
    fn min_denominator_matches_search(p in params(), lw in -1.0f64..2.0, alpha in 0.0f64..2.0, l1 in 0.001f64..10.0) {
        let o = Complex64::new(0.0, 10f64.powf(lw));
        let th = vartheta(o, &p);
        let bt = big_theta(o, &p);
        let got = min_lambda_denominator(o, alpha, l1, &p);
        let want = grid_min_denominator(th, bt, alpha, l1, 1e3 * l1.max(th.norm() / bt.norm()));
        prop_assert!((got - want).abs() <= 1e-6 * want, "got {got:e} want {want:e}");
    }
}

#[test]
fn sensitivities_match_finite_differences() {
    let lams = [0.1, 3.0, 80.0, 2500.0];
    for (tau, delta, w0) in [(0.01, 6e-7, 0.0), (0.002, 1e-3, 0.3), (0.05, 0.02, 0.0)] {
        for &lam in &lams {
            let make = |t: f64, d: f64| PhysicalParams::new(t, 1.5, d, w0).unwrap();
            let p = make(tau, delta);
            let s = pole_sensitivity(&solve_pole(lam, &p).unwrap(), &p).unwrap();
            let f = |t: f64, d: f64| -solve_pole(lam, &make(t, d)).unwrap().pole.re;
            let dd = common::central_difference(|d| f(tau, d), delta, 1e-3 * delta);
            let dt = common::central_difference(|t| f(t, delta), tau, 1e-3 * tau);
            assert!((s.d_neg_re_d_delta - dd).abs() <= 1e-4 * dd.abs(), "delta: {} vs {dd}", s.d_neg_re_d_delta);
            assert!((s.d_neg_re_d_tau - dt).abs() <= 1e-4 * dt.abs(), "tau: {} vs {dt}", s.d_neg_re_d_tau);
        }
    }
}

#[test]
fn viete_modulus_tracks_solver_beyond_low_modes() {
    let p = PhysicalParams::jmgt(0.005, 1.5, 6e-8).unwrap();
    for j in 5..=200 {
        let lam = (j as f64 * std::f64::consts::PI / 10.0).powi(2);
        let e = solve_pole(lam, &p).unwrap();
        let r = viete_modulus(e.argument, lam, &p).unwrap();
        assert!((r - e.modulus).abs() <= 1e-8 * r);
    }
}

#[test]
fn naive_evaluation_vanishes_at_pole() {
    let p = PhysicalParams::new(0.01, 1.5, 6e-7, 0.2).unwrap();
    let e = solve_pole(42.0, &p).unwrap();
    let c = dispersion_coeffs(0.01, 1.5, 6e-7, 0.2, 42.0);
    let scale: f64 = c.iter().enumerate().map(|(k, v)| v.abs() * e.pole.norm().powi(k as i32)).sum();
    assert!(poly_eval(&c, e.pole).norm() <= 1e-13 * scale);
}
