use std::f64::consts::PI;

use proptest::prelude::*;
use tubelab::cross_section::*;

/// y(z) for y'' + y'/r + y = 0, y(0) = 1, by RK4 from a series start.
fn shoot(z: f64) -> f64 {
    let r0: f64 = 1e-3;
    let mut r = r0;
    let mut y = [1.0 - r0 * r0 / 4.0 + r0.powi(4) / 64.0, -r0 / 2.0 + r0.powi(3) / 16.0];
    let n = 20_000;
    let h = (z - r0) / n as f64;
    let f = |r: f64, y: [f64; 2]| [y[1], -y[1] / r - y[0]];
    for _ in 0..n {
        let k1 = f(r, y);
        let k2 = f(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = f(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = f(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r += h;
    }
    y[0]
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// J_ν(x) for integer ν by its power series.
fn bessel_j(nu: i32, x: f64) -> f64 {
    let mut term = (x / 2.0).powi(nu) / (1..=nu).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..80 {
        term *= -(x * x / 4.0) / (k as f64 * (k + nu) as f64);
        sum += term;
    }
    sum
}

const J01: f64 = 2.404825557695773;

#[test]
fn ground_root_matches_shooting_and_series() {
    let m = disk_ground_mode(3, 1e-14).unwrap();
    let shot = bisect(shoot, 2.0, 3.0);
    assert!((shot - J01).abs() < 1e-9, "shooting oracle drifted: {shot}");
    assert!((m.sqrt_lambda1 / shot - 1.0).abs() < 1e-10);
    assert!((m.sqrt_lambda1 / J01 - 1.0).abs() < 1e-10);
    assert!(bessel_j(0, m.sqrt_lambda1).abs() < 1e-14);
    assert!((m.lambda1 - 5.783185962946785).abs() < 1e-12);
}

#[test]
fn second_radial_root() {
    let m = disk_radial_mode(3, 2, 1e-14).unwrap();
    let shot = bisect(shoot, 5.0, 6.0);
    assert!((m.sqrt_lambda1 / shot - 1.0).abs() < 1e-9);
}

#[test]
fn mode_is_normalized_and_solves_its_ode() {
    let m = disk_ground_mode(3, 1e-14).unwrap();
    let c = 1.0 / (PI.sqrt() * bessel_j(1, J01));
    assert!((m.norm_constant - c).abs() < 1e-12);
    assert!((m.norm_squared(DEFAULT_ORDER) - 1.0).abs() < 1e-12);
    for r in [0.0, 0.1, 0.5, 0.9, 0.999] {
        assert!(m.ode_residual(r) < 1e-10, "r = {r}");
        assert!((m.psi1(r) - c * bessel_j(0, J01 * r)).abs() < 1e-13);
    }
    assert_eq!(m.psi1(1.0), 0.0);
    assert_eq!(m.psi1(1.5), 0.0);
}

#[test]
fn section_integral_of_the_mode() {
    let m = disk_ground_mode(3, 1e-14).unwrap();
    let got = project_section(|_, _| Ok(1.0), 0.3, 0.1, &m).unwrap();
    assert!((got - 2.0 * PI.sqrt() / J01).abs() < 1e-12);
    assert!((got - 1.474_081_016_174_682_7).abs() < 1e-13);
}

#[test]
fn half_sphere_constants() {
    assert!((upsilon(3) - (2.0 * PI / 3.0).sqrt()).abs() < 1e-12);
    // the commonly quoted decimal 1.447202509059407 is only good to ~6e-11
    assert!((upsilon(3) - 1.447202509059407).abs() < 1e-10);
    assert!((upsilon(3) - 1.447_202_509_116_535_3).abs() < 1e-15);
    assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-13);
    assert!((sphere_area(1) - 2.0 * PI).abs() < 1e-13);
    let plus = SphereMode::new(3, Hemisphere::Plus);
    assert!((plus.eval(1.0) - 0.690988298942671).abs() < 1e-12);
    assert_eq!(plus.eval(-0.5), 0.0);
    let minus = SphereMode::new(3, Hemisphere::Minus);
    assert!((minus.eval(-1.0) - 0.690988298942671).abs() < 1e-12);
    let norm = plus.integrate(DEFAULT_ORDER, |phi| Ok::<_, ()>(plus.eval_polar(phi).powi(2))).unwrap();
    assert!((norm - 1.0).abs() < 1e-12);
}

#[test]
fn projection_of_the_linear_harmonic() {
    let plus = SphereMode::new(3, Hemisphere::Plus);
    for r in [0.1, 0.7, 2.5] {
        let p = project_sphere(|x, _| Ok(x - 1.0), 1.0, r, &plus).unwrap();
        assert!((p - upsilon(3) * r).abs() < 1e-12 * r.max(1.0), "r = {r}: {p}");
    }
}

#[test]
fn projection_of_the_dipole_kernel() {
    let minus = SphereMode::new(3, Hemisphere::Minus);
    for r in [0.2, 1.0, 3.0] {
        let p = project_sphere(|x, rho| Ok(x / (x * x + rho * rho).powf(1.5)), 0.0, r, &minus).unwrap();
        assert!((p + upsilon(3) / (r * r)).abs() < 1e-12 / (r * r), "r = {r}: {p}");
    }
}

proptest! {
    #[test]
    fn projection_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, r in 0.05..4.0f64) {
        let m = SphereMode::new(3, Hemisphere::Plus);
        let f = |x: f64, rho: f64| Ok((x - 1.0).powi(2) + rho);
        let g = |x: f64, _: f64| Ok((x - 1.0).exp());
        let lhs = project_sphere(|x, rho| Ok(a * f(x, rho)? + b * g(x, rho)?), 1.0, r, &m).unwrap();
        let rhs = a * project_sphere(f, 1.0, r, &m).unwrap() + b * project_sphere(g, 1.0, r, &m).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
    }

    #[test]
    fn psi_is_positive_inside(r in 0.0..0.999f64) {
        let m = disk_ground_mode(3, 1e-14).unwrap();
        prop_assert!(m.psi1(r) > 0.0);
    }

    #[test]
    fn section_projection_scales(c in -5.0..5.0f64, eps in 0.01..1.0f64) {
        let m = disk_ground_mode(3, 1e-14).unwrap();
        let p = project_section(|_, _| Ok(c), 0.5, eps, &m).unwrap();
        prop_assert!((p - c * 2.0 * std::f64::consts::PI.sqrt() / J01).abs() < 1e-12 * (1.0 + c.abs()));
    }
}
