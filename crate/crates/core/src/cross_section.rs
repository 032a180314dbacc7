//! Spectral constants of the unit disk cross-section and of the half-spheres.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::Rule;

/// Default number of Gauss points for polar and radial projections.
pub const DEFAULT_ORDER: usize = 64;

const MAX_DIM: usize = 40;
const ROOT_STEP: f64 = 0.05;
const MAX_BRACKET_STEPS: usize = 4000;

/// Surface measure of the unit sphere S^k in R^{k+1}.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

/// Radial profile ρ^{-ν} J_ν(zρ) scaled to equal 1 at the origin, as a power series in z².
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RadialSeries {
    pub nu: f64,
}

impl RadialSeries {
    /// Value and first two derivatives of g(z) = Σ_k (−z²/4)^k / (k! (ν+1)_k).
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        let q = -0.25 * z * z;
        let mut term = 1.0;
        let (mut g, mut d1, mut d2) = (1.0, 0.0, 0.0);
        let mut k = 0usize;
        loop {
            k += 1;
            let kf = k as f64;
            term *= q / (kf * (self.nu + kf));
            if z != 0.0 {
                // term = c_k z^{2k}; derivatives of z^{2k}
                d1 += term * 2.0 * kf / z;
                d2 += term * 2.0 * kf * (2.0 * kf - 1.0) / (z * z);
            } else if k == 1 {
                d2 += 2.0 * (-0.25) / (self.nu + 1.0);
            }
            g += term;
            if term.abs() < 1e-18 * g.abs().max(1e-300) && kf > 0.5 * z.abs() + 2.0 {
                break;
            }
            if k > 400 {
                break;
            }
        }
        (g, d1, d2)
    }

    /// The `index`-th positive zero (1-based) by stepping, bisection and Newton polish.
    pub fn zero(&self, index: usize, n: usize) -> Result<f64> {
        let mut found = 0;
        let mut a = 0.0;
        let mut fa = 1.0;
        for step in 1..=MAX_BRACKET_STEPS {
            let b = step as f64 * ROOT_STEP;
            let fb = self.eval(b).0;
            if fa * fb <= 0.0 {
                found += 1;
                if found == index {
                    return Ok(self.refine_root(a, b));
                }
            }
            a = b;
            fa = fb;
        }
        Err(Error::RootSearch { n, steps: MAX_BRACKET_STEPS })
    }

    fn refine_root(&self, mut a: f64, mut b: f64) -> f64 {
        let mut fa = self.eval(a).0;
        for _ in 0..200 {
            if (b - a) <= 1e-14 * b {
                break;
            }
            let m = 0.5 * (a + b);
            let fm = self.eval(m).0;
            if fm == 0.0 {
                return m;
            }
            if fa * fm < 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        let mut z = 0.5 * (a + b);
        for _ in 0..3 {
            let (g, d, _) = self.eval(z);
            if d == 0.0 {
                break;
            }
            let next = z - g / d;
            if next < a - 1e-12 || next > b + 1e-12 {
                break;
            }
            z = next;
        }
        z
    }
}

/// A radial Dirichlet eigenmode of the unit (N−1)-ball, L²-normalized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossSectionMode {
    pub dimension: usize,
    pub lambda1: f64,
    pub sqrt_lambda1: f64,
    pub norm_constant: f64,
    pub series: RadialSeries,
}

impl CrossSectionMode {
    /// ψ(r) for r = |x′| ∈ [0, 1].
    pub fn psi1(&self, r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        self.norm_constant * self.series.eval(self.sqrt_lambda1 * r).0
    }

    /// (ψ, ψ′, ψ″) at r.
    pub fn psi1_derivs(&self, r: f64) -> (f64, f64, f64) {
        let s = self.sqrt_lambda1;
        let (g, d1, d2) = self.series.eval(s * r);
        let c = self.norm_constant;
        (c * g, c * s * d1, c * s * s * d2)
    }

    /// Residual of ψ″ + (N−2)/r ψ′ + λψ = 0, relative to λψ(0).
    pub fn ode_residual(&self, r: f64) -> f64 {
        let (p, d1, d2) = self.psi1_derivs(r);
        let n = self.dimension as f64;
        let lap = if r == 0.0 { (n - 1.0) * d2 } else { d2 + (n - 2.0) / r * d1 };
        (lap + self.lambda1 * p).abs() / (self.lambda1 * self.norm_constant)
    }

    /// Measure of the sphere bounding the cross-section, ω_{N−2}.
    pub fn section_sphere(&self) -> f64 {
        sphere_area(self.dimension - 2)
    }

    /// ∫_Σ ψ² dx′ by radial quadrature.
    pub fn norm_squared(&self, order: usize) -> f64 {
        let k = self.dimension - 2;
        self.section_sphere()
            * Rule::new(order, 0.0, 1.0).integrate(|r| self.psi1(r).powi(2) * r.powi(k as i32))
    }
}

/// First radial Dirichlet mode of the unit ball Σ ⊂ R^{N−1}.
pub fn disk_ground_mode(n: usize, tol: f64) -> Result<CrossSectionMode> {
    disk_radial_mode(n, 1, tol)
}

/// The `index`-th radial Dirichlet mode of the unit ball in R^{N−1}.
pub fn disk_radial_mode(n: usize, index: usize, tol: f64) -> Result<CrossSectionMode> {
    if !(3..=MAX_DIM).contains(&n) {
        return Err(Error::Config(format!("dimension {n} outside 3..={MAX_DIM}")));
    }
    if !(tol > 0.0) || index == 0 {
        return Err(Error::Config("tolerance must be positive and index at least 1".into()));
    }
    let series = RadialSeries { nu: (n as f64 - 3.0) / 2.0 };
    let z = series.zero(index, n)?;
    if series.eval(z).0.abs() > tol.max(1e-13) * 10.0 {
        return Err(Error::RootSearch { n, steps: MAX_BRACKET_STEPS });
    }
    let mut mode = CrossSectionMode {
        dimension: n,
        lambda1: z * z,
        sqrt_lambda1: z,
        norm_constant: 1.0,
        series,
    };
    let m = mode.norm_squared(DEFAULT_ORDER);
    mode.norm_constant = 1.0 / m.sqrt();
    Ok(mode)
}

/// Υ_N = √(ω_{N−1}/(2N)).
pub fn upsilon(n: usize) -> f64 {
    (sphere_area(n - 1) / (2.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hemisphere {
    Plus,
    Minus,
}

impl Hemisphere {
    pub fn sign(self) -> f64 {
        match self {
            Hemisphere::Plus => 1.0,
            Hemisphere::Minus => -1.0,
        }
    }
}

/// The first Dirichlet eigenfunction ±θ₁/Υ_N of a half-sphere.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SphereMode {
    pub dimension: usize,
    pub side: Hemisphere,
    pub upsilon: f64,
    pub eigenvalue: f64,
    pub sphere_measure: f64,
}

impl SphereMode {
    pub fn new(n: usize, side: Hemisphere) -> Self {
        SphereMode {
            dimension: n,
            side,
            upsilon: upsilon(n),
            eigenvalue: n as f64 - 1.0,
            sphere_measure: sphere_area(n - 1),
        }
    }

    /// Ψ at a unit vector with first component θ₁; zero off the hemisphere.
    pub fn eval(&self, theta1: f64) -> f64 {
        let s = self.side.sign();
        if s * theta1 < 0.0 {
            0.0
        } else {
            s * theta1 / self.upsilon
        }
    }

    /// Ψ as a function of the polar angle φ from +e₁.
    pub fn eval_polar(&self, phi: f64) -> f64 {
        self.eval(phi.cos())
    }

    /// Polar-angle range of the hemisphere.
    pub fn polar_range(&self) -> (f64, f64) {
        match self.side {
            Hemisphere::Plus => (0.0, 0.5 * PI),
            Hemisphere::Minus => (0.5 * PI, PI),
        }
    }

    /// Integrates g(φ) dσ over the hemisphere for an axisymmetric g.
    pub fn integrate<E>(
        &self,
        order: usize,
        mut g: impl FnMut(f64) -> std::result::Result<f64, E>,
    ) -> std::result::Result<f64, E> {
        let (a, b) = self.polar_range();
        let k = self.dimension as i32 - 2;
        let w = sphere_area(self.dimension - 2);
        let rule = Rule::new(order, a, b);
        Ok(w * rule.try_integrate(|phi| Ok(g(phi)? * phi.sin().powi(k)))?)
    }
}

/// ∫_{S±} f(c + rθ) Ψ^±(θ) dσ for an axisymmetric evaluator f(x₁, ρ).
pub fn project_sphere(
    field: impl Fn(f64, f64) -> Result<f64>,
    center: f64,
    r: f64,
    mode: &SphereMode,
) -> Result<f64> {
    project_sphere_order(field, center, r, mode, DEFAULT_ORDER)
}

pub fn project_sphere_order(
    field: impl Fn(f64, f64) -> Result<f64>,
    center: f64,
    r: f64,
    mode: &SphereMode,
    order: usize,
) -> Result<f64> {
    mode.integrate(order, |phi| {
        let (s, c) = phi.sin_cos();
        Ok(field(center + r * c, r * s)? * mode.eval(c))
    })
}

/// ∫_Σ f(t, εx′) ψ₁(x′) dx′.
pub fn project_section(
    field: impl Fn(f64, f64) -> Result<f64>,
    t: f64,
    eps: f64,
    mode: &CrossSectionMode,
) -> Result<f64> {
    section_integral(|s| Ok(field(t, eps * s)? * mode.psi1(s)), mode)
}

/// ω_{N−2} ∫₀¹ g(s) s^{N−2} ds.
pub fn section_integral(
    g: impl Fn(f64) -> Result<f64>,
    mode: &CrossSectionMode,
) -> Result<f64> {
    let k = mode.dimension as i32 - 2;
    let rule = Rule::new(DEFAULT_ORDER, 0.0, 1.0);
    Ok(mode.section_sphere() * rule.try_integrate(|s| Ok::<f64, Error>(g(s)? * s.powi(k)))?)
}
