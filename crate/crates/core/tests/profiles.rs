use proptest::prelude::*;
use tubelab::cross_section::{upsilon, Hemisphere, SphereMode};
use tubelab::elliptic::WeightModel;
use tubelab::mesh::MeshConfig;
use tubelab::profiles::identities::*;
use tubelab::profiles::*;

const J01: f64 = 2.404825557695773;

#[test]
fn step_is_a_c2_switch() {
    assert_eq!(step(0.3), (0.0, 0.0, 0.0));
    assert_eq!(step(1.0), (0.0, 0.0, 0.0));
    assert_eq!(step(2.0), (1.0, 0.0, 0.0));
    assert_eq!(step(7.0), (1.0, 0.0, 0.0));
    assert!((step(1.5).0 - 0.5).abs() < 1e-15);
    // one-sided limits of value, slope and curvature match at both ends
    for r in [1.0 + 1e-7, 2.0 - 1e-7] {
        let (v, d1, d2) = step(r);
        assert!(v.min(1.0 - v) < 1e-19 && d1.abs() < 1e-12 && d2.abs() < 1e-5);
    }
    // derivatives against central differences
    let h = 1e-5;
    for r in [1.1, 1.37, 1.5, 1.81, 1.96] {
        let (_, d1, d2) = step(r);
        let fd1 = (step(r + h).0 - step(r - h).0) / (2.0 * h);
        let fd2 = (step(r + h).1 - step(r - h).1) / (2.0 * h);
        assert!((d1 - fd1).abs() < 1e-9 && (d2 - fd2).abs() < 1e-8);
    }
}

#[test]
fn singular_kernel_is_the_normalized_dipole() {
    let ups = upsilon(3);
    for (x, r) in [(-0.5, 0.2), (-2.0, 1.5), (-0.1, 3.0)] {
        let s = singular_kernel(x, r, ups);
        assert!((s + x / (ups * (x * x + r * r).powf(1.5))).abs() < 1e-15);
        // cylindrical Laplacian u_xx + u_rr + u_r/r vanishes
        let h = 1e-3;
        let u = |a: f64, b: f64| singular_kernel(a, b, ups);
        let lap = (u(x + h, r) - 2.0 * s + u(x - h, r)) / (h * h)
            + (u(x, r + h) - 2.0 * s + u(x, r - h)) / (h * h)
            + 1.0 / r * (u(x, r + h) - u(x, r - h)) / (2.0 * h);
        assert!(lap.abs() < 1e-4 * s.abs() / (x * x + r * r), "{lap}");
    }
    // the cut-off version and its gradient, inside, across and beyond the switch
    let cut = |x: f64, r: f64| (1.0 - step(x.hypot(r)).0) * singular_kernel(x, r, ups);
    for (x, r) in [(-0.5, 0.2), (-1.0, 0.9), (-0.3, 1.6), (-2.0, 1.5)] {
        let (v, g) = singular_with_grad(x, r, ups);
        assert!((v - cut(x, r)).abs() <= 1e-15 * v.abs());
        let h = 1e-6;
        let gx = (cut(x + h, r) - cut(x - h, r)) / (2.0 * h);
        let gr = (cut(x, r + h) - cut(x, r - h)) / (2.0 * h);
        assert!((g[0] - gx).abs() < 1e-7 * (1.0 + gx.abs()));
        assert!((g[1] - gr).abs() < 1e-7 * (1.0 + gr.abs()));
    }
    assert_eq!(singular_with_grad(-2.0, 1.5, ups), (0.0, [0.0, 0.0]));
    // the projection onto the lower hemisphere mode at radius t is t^-2
    let minus = SphereMode::new(3, Hemisphere::Minus);
    for t in [0.5, 1.0, 3.0] {
        let p = minus
            .integrate(40, |phi| {
                let (s, c) = phi.sin_cos();
                Ok::<f64, tubelab::Error>(singular_kernel(t * c, t * s, ups) * minus.eval(c))
            })
            .unwrap();
        assert!((p * t * t - 1.0).abs() < 1e-12, "{p}");
    }
}

#[test]
fn gamma_norm_of_the_hemisphere_profile() {
    let minus = SphereMode::new(3, Hemisphere::Minus);
    let f = |x: f64, r: f64| {
        let s = x.hypot(r);
        Ok(minus.eval(x / s) / (s * s))
    };
    for t in [0.25, 1.0, 4.0] {
        assert!((gamma_norm(&f, t).unwrap() * t * t - 1.0).abs() < 1e-12);
    }
    let ups = upsilon(3);
    let s = |x: f64, r: f64| Ok(singular_kernel(x, r, ups));
    assert!((gamma_norm(&s, 2.0).unwrap() * 4.0 - 1.0).abs() < 1e-12);
}

#[test]
fn neville_is_exact_on_polynomials() {
    let x = [0.4, 0.2, 0.1, 0.05];
    let p = |t: f64| 1.25 - 3.0 * t + 0.7 * t * t - 2.0 * t * t * t;
    let y: Vec<f64> = x.iter().map(|&t| p(t)).collect();
    assert!((extrapolate(&x, &y) - 1.25).abs() < 1e-13);
    // a cubic is not captured by three points
    assert!((extrapolate(&x[1..], &y[1..]) - 1.25).abs() > 1e-5);
    assert_eq!(extrapolate(&[0.3], &[2.0]), 2.0);
}

#[test]
fn truncation_extrapolation_in_inverse_cubes() {
    let radii = [6.0, 8.0, 12.0];
    let y: Vec<f64> = radii.iter().map(|&r: &f64| 0.83 + 4.0 / r.powi(3)).collect();
    let (full, unc) = extrapolate_truncation(&radii, &y, 3);
    assert!((full - 0.83).abs() < 1e-13);
    assert!(unc < 1e-13);
    let y2: Vec<f64> = radii.iter().map(|&r: &f64| 0.83 + 4.0 / r.powi(3) + 50.0 / r.powi(6)).collect();
    let (full, unc) = extrapolate_truncation(&radii, &y2, 3);
    assert!((full - 0.83).abs() < 1e-12);
    // dropping the coarsest radius misses the r^-6 term
    assert!(unc > 1e-5);
}

#[test]
fn discrete_tube_rate_is_the_disk_eigenvalue() {
    let cfg = ProfileConfig::default();
    let k = discrete_tube_rate(&cfg.mesh).unwrap();
    assert!((k - J01).abs() < 1e-4, "{k}");
    // frozen for the default profile mesh
    assert!((k - 2.4048607939523317).abs() < 1e-9, "{k}");
}

#[test]
fn zero_weight_ubar_matches_the_truncated_dipole() {
    let cfg = ProfileConfig::default();
    let ubar = compute_ubar(&cfg, &WeightModel::zero(), 0.0).unwrap();
    let ups = upsilon(3);
    let r_out = ubar.r_out;
    let exact = |x: f64, r: f64| -x / ups * ((x * x + r * r).powf(-1.5) - r_out.powi(-3));
    let mut worst: f64 = 0.0;
    for (x, r) in [(-0.5, 0.5), (-1.0, 2.0), (-3.0, 1.0), (-0.2, 4.0), (-6.0, 3.0)] {
        let u = ubar.total(x, r).unwrap();
        worst = worst.max((u - exact(x, r)).abs() / exact(x, r).abs());
    }
    assert!(worst < 1e-3, "{worst}");
}

proptest! {
    #[test]
    fn sphere_identity_holds_for_its_two_mode_family(d in -3.0..3.0f64, r in 0.2..5.0f64) {
        prop_assume!((r - 1.0).abs() > 1e-2 && d.abs() > 1e-3);
        let ups = upsilon(3);
        let v = |s: f64| ups * s + d / (s * s);
        prop_assert!(sphere_mean(v(1.0), v(r), r) < 1e-11);
        prop_assert!(sphere_mean(v(1.0), v(r) * 1.01, r) > 1e-5);
    }

    #[test]
    fn tube_and_step_identities_vanish_on_exact_data(
        a in 0.1..10.0f64, rho in 0.1..3.0f64, h in 0.2..3.0f64, sec0 in -2.0..2.0f64, m in 0.1..10.0f64
    ) {
        prop_assert!(tube_decay(a, a * (-rho * J01).exp(), rho, J01) < 1e-13);
        prop_assert!(left_sphere(a, a / (h * h), h) < 1e-14);
        let e = (-2.0 * h * J01).exp();
        let sech = (h * J01).exp() * (1.0 - e + sec0 * e);
        prop_assert!(left_tube(sec0, sech, h, J01, m) < 1e-12);
    }
}
