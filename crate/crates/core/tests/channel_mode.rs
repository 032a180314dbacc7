use std::cmp::Ordering;
use std::f64::consts::PI;

use proptest::prelude::*;
use tubelab::channel_mode::*;
use tubelab::cross_section::{disk_ground_mode, upsilon, Hemisphere, SphereMode};

const J01: f64 = 2.404825557695773;

fn two_exp(a: f64, b: f64, eps: f64, k: f64) -> impl Fn(f64) -> f64 {
    move |t| a * (k * (t - 1.0) / eps).exp() + b * (-k * (t - 1.0) / eps).exp()
}

fn window(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn decay_exponent_at_the_left_end() {
    let fit = ModeFit {
        eps: 0.01,
        kappa: J01,
        a: ScaledAmplitude::ONE,
        b: ScaledAmplitude::ZERO,
        c: ScaledAmplitude::ZERO,
        window: [0.5, 0.9],
        residual: 0.0,
        b_resolved: false,
        flagged: false,
    };
    let v = propagate(&fit, 0.0);
    assert_eq!(v.sign, 1);
    assert!((v.ln_abs() + J01 / 0.01).abs() < 1e-11);
    assert!((v.ln_abs() + 240.4825557695773).abs() < 1e-9);
}

#[test]
fn channel_fit_round_trip() {
    let (eps, k) = (0.2, J01);
    // both modes of comparable size inside the window
    let (a, b) = (1.3, 2.1e-3);
    let f = two_exp(a, b, eps, k);
    let samples: Vec<(f64, f64)> = window(0.55, 0.85, 16).into_iter().map(|t| (t, f(t))).collect();
    let fit = fit_channel_mode(&samples, eps, k).unwrap();
    assert!((fit.a.to_f64() / a - 1.0).abs() < 1e-12);
    assert!((fit.b.to_f64() / b - 1.0).abs() < 1e-12);
    assert!(fit.b_resolved && !fit.flagged);
    assert!(fit.residual < 1e-14);
    let c = c_from_b(&fit.b, k, eps).to_f64();
    assert!((c + 2.0 * k * b / eps).abs() < 1e-12 * c.abs());
    assert_eq!(fit.c, c_from_b(&fit.b, k, eps));
    // propagation reproduces the samples and extends them in scaled arithmetic
    for &(t, v) in &samples {
        assert!((propagate(&fit, t).to_f64() / v - 1.0).abs() < 1e-12);
    }
    assert!((propagate(&fit, 0.0).to_f64() / f(0.0) - 1.0).abs() < 1e-10);
}

#[test]
fn unresolved_decaying_mode_is_dropped() {
    let (eps, k) = (0.1, J01);
    let f = two_exp(1.0, 1e-30, eps, k);
    let samples: Vec<(f64, f64)> = window(0.55, 0.85, 16).into_iter().map(|t| (t, f(t))).collect();
    let fit = fit_channel_mode(&samples, eps, k).unwrap();
    assert!(!fit.b_resolved);
    assert!(fit.b.is_zero() && fit.c.is_zero());
    assert!((fit.a.to_f64() - 1.0).abs() < 1e-12);
}

#[test]
fn fit_rejects_bad_windows() {
    let s: Vec<(f64, f64)> = window(0.5, 0.9, 3).into_iter().map(|t| (t, t)).collect();
    assert!(fit_channel_mode(&s, 0.2, J01).is_err());
    let narrow: Vec<(f64, f64)> = window(0.5, 0.51, 8).into_iter().map(|t| (t, t)).collect();
    assert!(fit_channel_mode(&narrow, 0.2, J01).is_err());
    let outside: Vec<(f64, f64)> = window(0.8, 1.2, 8).into_iter().map(|t| (t, t)).collect();
    assert!(fit_channel_mode(&outside, 0.2, J01).is_err());
}

#[test]
fn derivative_form_recovers_c() {
    let (eps, k) = (0.15, J01);
    let (a, b) = (0.7, 4e-6);
    let kk = k / eps;
    let f = two_exp(a, b, eps, k);
    let df = |t: f64| kk * a * (kk * (t - 1.0)).exp() - kk * b * (-kk * (t - 1.0)).exp();
    let samples: Vec<(f64, f64, f64)> = window(0.075, 0.225, 9).into_iter().map(|t| (t, f(t), df(t))).collect();
    let (c, unc) = fit_derivative_c(&samples, eps, k).unwrap();
    let expect = -2.0 * k * b / eps;
    // normal equations on two smooth exponentials: ~1e-8 on exact data
    assert!((c.to_f64() / expect - 1.0).abs() < 1e-7, "{} vs {expect}", c.to_f64());
    assert!(unc < 1e-7, "{unc}");
    // a 1% bias on φ′ is reported through the growing-term coefficient
    let biased: Vec<(f64, f64, f64)> = samples.iter().map(|&(t, p, d)| (t, p, d + 0.01 * kk * a * (kk * (t - 1.0)).exp())).collect();
    let (cb, unc) = fit_derivative_c(&biased, eps, k).unwrap();
    let hi = samples.last().unwrap().0;
    let expect_unc = 0.5 * 0.01 * a * (kk * (hi - 1.0)).exp() / f(hi);
    assert!((unc / expect_unc - 1.0).abs() < 1e-6, "{unc} vs {expect_unc}");
    // the growing term is absorbed, so C itself is unaffected
    assert!((cb.to_f64() / expect - 1.0).abs() < 1e-7);
    assert!(fit_derivative_c(&samples[..2], eps, k).is_err());
}

#[test]
fn spherical_fit_is_exact_on_its_model() {
    let (alpha, beta) = (0.4, -1.7);
    let samples: Vec<(f64, f64)> = [0.5, 0.8, 1.2, 2.0, 3.0].iter().map(|&r| (r, alpha * r + beta / (r * r))).collect();
    let s = spherical_fit(&samples, 3, 0.2).unwrap();
    assert!((s.alpha - alpha).abs() < 1e-12 && (s.beta - beta).abs() < 1e-12);
    assert!((s.d + 3.0 * beta).abs() < 1e-12);
    assert!(s.residual < 1e-14);
}

#[test]
fn section_mass_of_a_pure_mode() {
    let m = disk_ground_mode(3, 1e-14).unwrap();
    let eps = 0.1;
    let u = |x: f64, r: f64| Ok((J01 * (x - 1.0) / eps).exp() * m.psi1(r / eps));
    let (h1, c1) = htilde(&u, 0.4, eps, &m, [0.0, 1.0]).unwrap();
    let (h2, _) = htilde(&u, 0.7, eps, &m, [0.0, 1.0]).unwrap();
    assert!((h2 / h1 / (2.0 * J01 * 0.3 / eps).exp() - 1.0).abs() < 1e-12);
    assert!((h1 / (2.0 * J01 * (0.4 - 1.0) / eps).exp() - 1.0).abs() < 1e-12);
    assert!((c1 / (eps * eps * h1) - 1.0).abs() < 1e-15);
    assert!(htilde(&u, 1.1, eps, &m, [0.0, 1.0]).is_err());
}

#[test]
fn hemisphere_mass_oracles() {
    let minus = SphereMode::new(3, Hemisphere::Minus);
    let profile = |x: f64, r: f64| {
        let s = x.hypot(r);
        Ok(minus.eval(x / s) / (s * s))
    };
    let dipole = |x: f64, r: f64| Ok(x / (x * x + r * r).powf(1.5));
    for t in [0.3, 1.0, 2.5] {
        assert!((hminus(&profile, t).unwrap() * t.powi(4) - 1.0).abs() < 1e-12);
        let d = hminus(&dipole, t).unwrap() * t.powi(4);
        assert!((d - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!((d - upsilon(3).powi(2)).abs() < 1e-12);
        assert!((d - 2.0944).abs() < 1e-4);
    }
}

fn amp() -> impl Strategy<Value = f64> {
    prop_oneof![-1e4..1e4f64, -50.0..50.0f64]
}

proptest! {
    #[test]
    fn exponents_add_under_multiplication(a in amp(), b in amp()) {
        let x = ScaledAmplitude::exp(a);
        let y = ScaledAmplitude::exp(b);
        let tol = 1e-15 * (a.abs() + b.abs()) + 1e-14;
        prop_assert!((x.mul(&y).ln_abs() - (a + b)).abs() <= tol);
        prop_assert!((x.div(&y).ln_abs() - (a - b)).abs() <= tol);
        prop_assert!((x.sqrt().ln_abs() - a / 2.0).abs() <= tol);
        prop_assert!((x.ln_abs() - a).abs() <= 1e-15 * a.abs() + 1e-15);
        prop_assert_eq!(x.mul(&y).sign, 1);
    }

    #[test]
    fn normalized_form(a in amp(), m in -1e6..1e6f64) {
        prop_assume!(m != 0.0);
        let x = ScaledAmplitude::from_f64(m).mul(&ScaledAmplitude::exp(a));
        prop_assert!(x.mantissa >= 1.0 && x.mantissa < std::f64::consts::E);
        prop_assert_eq!(x.exponent, x.exponent.round());
        prop_assert_eq!(x.sign as f64, m.signum());
    }

    #[test]
    fn double_round_trip(v in -1e300..1e300f64) {
        let x = ScaledAmplitude::from_f64(v);
        prop_assert!((x.to_f64() - v).abs() <= 4.0 * f64::EPSILON * v.abs());
        prop_assert!((x.neg().to_f64() + v).abs() <= 4.0 * f64::EPSILON * v.abs());
        prop_assert!((x.abs().to_f64() - v.abs()).abs() <= 4.0 * f64::EPSILON * v.abs());
    }

    #[test]
    fn addition_matches_doubles(p in -1e3..1e3f64, q in -1e3..1e3f64, s in -300.0..300.0f64) {
        let scale = ScaledAmplitude::exp(s);
        let x = ScaledAmplitude::from_f64(p).mul(&scale);
        let y = ScaledAmplitude::from_f64(q).mul(&scale);
        let sum = x.add(&y).div(&scale).to_f64();
        prop_assert!((sum - (p + q)).abs() <= 1e-12 * (p.abs() + q.abs()));
        let diff = x.sub(&y).div(&scale).to_f64();
        prop_assert!((diff - (p - q)).abs() <= 1e-12 * (p.abs() + q.abs()));
        prop_assert!(x.sub(&x).is_zero());
    }

    #[test]
    fn ordering_by_magnitude(a in amp(), b in amp()) {
        let x = ScaledAmplitude::exp(a).neg();
        let y = ScaledAmplitude::exp(b);
        prop_assert_eq!(x.cmp_abs(&y), a.partial_cmp(&b).unwrap_or(Ordering::Equal));
    }

    #[test]
    fn overflow_is_an_error(a in 710.0..1e4f64) {
        prop_assert!(ScaledAmplitude::exp(a).try_to_f64().is_err());
        prop_assert_eq!(ScaledAmplitude::exp(-a).try_to_f64().unwrap_or(0.0), 0.0);
    }

    #[test]
    fn fit_round_trip(a in 0.1..10.0f64, ratio in 1e-3..1e3f64, eps in 0.1..0.3f64) {
        let k = J01;
        // B scaled so both modes matter at the window centre
        let b = a * ratio * (-2.0 * k * 0.3 / eps).exp();
        let f = two_exp(a, b, eps, k);
        let samples: Vec<(f64, f64)> = window(0.55, 0.85, 16).into_iter().map(|t| (t, f(t))).collect();
        let fit = fit_channel_mode(&samples, eps, k).unwrap();
        prop_assert!((fit.a.to_f64() / a - 1.0).abs() < 1e-10);
        prop_assert!((fit.b.to_f64() / b - 1.0).abs() < 1e-8);
    }
}
