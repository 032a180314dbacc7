//! The four limit profiles: the ground state u₀ of the right half-space, the
//! right junction profile Φ, the left junction profile Φ̂ and the singular
//! left solution Ū, with the constants that enter the normalization.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cross_section::{
    disk_ground_mode, project_section, project_sphere, section_integral, upsilon, CrossSectionMode, Hemisphere,
    SphereMode,
};
use crate::elliptic::{eigen_problem, solve_dirichlet, EigenPair, FieldSolution, Problem, WeightModel};
use crate::error::{Error, Result};
use crate::fem::{mask, Measure, Space};
use crate::mesh::{build_profile_mesh, build_tube_mesh, MeshConfig, ProfileKind, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileTag {
    U0,
    Phi,
    PhiHat,
    Ubar,
}

/// C² step equal to 0 below 1 and 1 above 2, with its first two derivatives.
pub fn step(r: f64) -> (f64, f64, f64) {
    let t = r - 1.0;
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let t2 = t * t;
        (
            t2 * t * (10.0 - 15.0 * t + 6.0 * t2),
            30.0 * t2 * (1.0 - t) * (1.0 - t),
            60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
        )
    }
}

/// Closed-form part carried by a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Carried {
    Zero,
    /// (x₁ − 1)·step(|x − e₁|) on x₁ > 1.
    Linear,
    /// e^{κx₁}ψ₁(ρ)·step(x₁) inside the tube.
    TubeMode { kappa: f64 },
    /// −x₁/(Υ|x|³)·(1 − step(|x|)).
    Singular { upsilon: f64 },
}

impl Carried {
    pub fn eval(&self, x1: f64, rho: f64, mode: &CrossSectionMode) -> f64 {
        match *self {
            Carried::Zero => 0.0,
            Carried::Linear => {
                if x1 <= 1.0 {
                    0.0
                } else {
                    (x1 - 1.0) * step((x1 - 1.0).hypot(rho)).0
                }
            }
            Carried::TubeMode { kappa } => {
                if x1 <= 0.0 || rho >= 1.0 {
                    0.0
                } else {
                    (kappa * x1).exp() * mode.psi1(rho) * step(x1).0
                }
            }
            Carried::Singular { upsilon } => singular_kernel(x1, rho, upsilon) * (1.0 - step(x1.hypot(rho)).0),
        }
    }
}

/// −x₁/(Υ|x|³).
pub fn singular_kernel(x1: f64, rho: f64, upsilon: f64) -> f64 {
    let r = x1.hypot(rho);
    -x1 / (upsilon * r * r * r)
}

/// A computed profile: finite element part plus the closed-form part.
#[derive(Debug, Clone)]
pub struct ProfileSolution {
    pub kind: ProfileTag,
    pub solution: FieldSolution,
    pub carried: Carried,
    /// When true the finite element field is the remainder; otherwise it is the total.
    pub field_is_remainder: bool,
    pub mode: CrossSectionMode,
    pub r_out: f64,
    pub tube_length: f64,
    pub level: usize,
}

impl ProfileSolution {
    pub fn total(&self, x1: f64, rho: f64) -> Result<f64> {
        let v = self.solution.field.eval(x1, rho)?;
        Ok(if self.field_is_remainder { v + self.carried.eval(x1, rho, &self.mode) } else { v })
    }

    pub fn remainder(&self, x1: f64, rho: f64) -> Result<f64> {
        let v = self.solution.field.eval(x1, rho)?;
        Ok(if self.field_is_remainder { v } else { v - self.carried.eval(x1, rho, &self.mode) })
    }

    /// Value and gradient of the total.
    pub fn total_grad(&self, x1: f64, rho: f64) -> Result<(f64, [f64; 2])> {
        let (v, g) = self.solution.field.eval_grad(x1, rho)?;
        if !self.field_is_remainder {
            return Ok((v, g));
        }
        match self.carried {
            Carried::Singular { upsilon } => {
                let (s, sg) = singular_with_grad(x1, rho, upsilon);
                Ok((v + s, [g[0] + sg[0], g[1] + sg[1]]))
            }
            _ => Ok((v + self.carried.eval(x1, rho, &self.mode), g)),
        }
    }
}

/// Value and gradient of (1 − step(|x|))·(−x₁/(Υ|x|³)).
pub fn singular_with_grad(x1: f64, rho: f64, upsilon: f64) -> (f64, [f64; 2]) {
    let r = x1.hypot(rho);
    let s = singular_kernel(x1, rho, upsilon);
    // ∇(x₁/r³) = (1/r³ − 3x₁²/r⁵, −3x₁ρ/r⁵)
    let r3 = r * r * r;
    let r5 = r3 * r * r;
    let gs = [-(1.0 / r3 - 3.0 * x1 * x1 / r5) / upsilon, 3.0 * x1 * rho / (r5 * upsilon)];
    let (c, dc, _) = step(r);
    let chi = 1.0 - c;
    let dchi = -dc;
    (chi * s, [chi * gs[0] + dchi * x1 / r * s, chi * gs[1] + dchi * rho / r * s])
}

/// Constants entering the normalization of the main asymptotic formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConstants {
    pub lambda_k0: f64,
    pub d0: f64,
    pub c_phi: f64,
    pub c_phihat: f64,
    pub m_phihat: f64,
    /// (k̃, ∫_{Γ⁻_k̃} Ū² dσ).
    pub norm_ubar: Vec<(f64, f64)>,
    /// Discrete decay rate of the first tube mode on the profile mesh.
    pub kappa_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub mesh: MeshConfig,
    pub weight: WeightModel,
    pub k_tilde: Vec<f64>,
    pub d0_radii: Vec<f64>,
    /// Use the discrete tube rate for the inflow amplitude of Φ̂.
    pub discrete_inflow_rate: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            mesh: MeshConfig { h0: 0.125, order: 2, ..MeshConfig::default() },
            weight: WeightModel::default(),
            k_tilde: vec![0.5, 1.0, 1.5],
            d0_radii: vec![0.5, 1.0, 2.0],
            discrete_inflow_rate: true,
        }
    }
}

pub const EIGEN_TOL: f64 = 1e-12;

fn space_for(kind: ProfileKind, cfg: &MeshConfig) -> Result<Arc<Space>> {
    let mesh = Arc::new(build_profile_mesh(kind, cfg)?);
    Ok(Arc::new(Space::new(mesh, cfg.order)?))
}

/// d₀ from the mode identity at each radius: (1/(Υ r))∫_{S₊}u(e₁ + rθ)Ψ⁺dσ.
pub fn mode_slopes(u: &dyn Fn(f64, f64) -> Result<f64>, radii: &[f64], n: usize) -> Result<Vec<f64>> {
    let sm = SphereMode::new(n, Hemisphere::Plus);
    radii.iter().map(|&r| Ok(project_sphere(u, 1.0, r, &sm)? / (sm.upsilon * r))).collect()
}

/// Result of the ground-state computation on the right half-space.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub profile: ProfileSolution,
    pub pair: EigenPair,
    pub lambda: f64,
    pub d0: f64,
    pub slopes: Vec<f64>,
    /// (max − min)/mean of the per-radius slopes.
    pub spread: f64,
}

pub fn compute_u0(cfg: &ProfileConfig) -> Result<GroundState> {
    if !(cfg.weight.a_plus > 0.0) {
        return Err(Error::Config("right amplitude must be positive".into()));
    }
    let space = space_for(ProfileKind::HalfPlus, &cfg.mesh)?;
    let prob = Problem::assemble(
        space,
        &cfg.weight.plus_only(),
        Measure::Axisymmetric,
        mask(&[Tag::DirichletWall, Tag::Truncation]),
    );
    let mut pair = eigen_problem(&prob, 1, EIGEN_TOL)?.remove(0);
    orient_positive(&mut pair, &cfg.weight)?;
    let mode = disk_ground_mode(3, 1e-14)?;
    let profile = ProfileSolution {
        kind: ProfileTag::U0,
        solution: FieldSolution { field: pair.field.clone(), dirichlet_tags: vec![Tag::DirichletWall, Tag::Truncation], residual: pair.residual },
        carried: Carried::Zero,
        field_is_remainder: false,
        mode,
        r_out: cfg.mesh.r_out,
        tube_length: 0.0,
        level: 0,
    };
    let f = &pair.field;
    let slopes = mode_slopes(&|x, r| f.eval(x, r), &cfg.d0_radii, 3)?;
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let (lo, hi) = slopes.iter().fold((f64::MAX, f64::MIN), |(a, b), &s| (a.min(s), b.max(s)));
    let lambda = pair.lambda;
    Ok(GroundState { profile, pair, lambda, d0: mean, slopes, spread: (hi - lo) / mean.abs() })
}

/// Flips the eigenfunction so that ∫ p u dμ > 0.
pub fn orient_positive(pair: &mut EigenPair, weight: &WeightModel) -> Result<()> {
    let s = crate::fem::integrate_field(&pair.field, Measure::Axisymmetric, &|_| true, &|x, r, u, _| weight.eval(x, r) * u);
    if s == 0.0 {
        return Err(Error::Degenerate("eigenfunction orthogonal to the weight".into()));
    }
    if s < 0.0 {
        pair.field = pair.field.scaled(-1.0);
    }
    pair.orientation = 1;
    Ok(())
}

/// Φ on the right half-space with a unit tube to the left of e₁.
pub fn compute_phi(cfg: &ProfileConfig) -> Result<(ProfileSolution, f64)> {
    let mode = disk_ground_mode(3, 1e-14)?;
    let space = space_for(ProfileKind::PhiDomain, &cfg.mesh)?;
    let sol = solve_dirichlet(
        space,
        &[Tag::DirichletWall, Tag::Truncation, Tag::Inflow],
        &|x, _| if x > 1.0 + 1e-12 { x - 1.0 } else { 0.0 },
        None,
        None,
        Measure::Axisymmetric,
    )?;
    let prof = ProfileSolution {
        kind: ProfileTag::Phi,
        solution: sol,
        carried: Carried::Linear,
        field_is_remainder: false,
        mode: mode.clone(),
        r_out: cfg.mesh.r_out,
        tube_length: cfg.mesh.tube_length,
        level: 0,
    };
    let c_phi = project_section(|x, r| prof.total(x, r), 1.0, 1.0, &mode)?;
    Ok((prof, c_phi))
}

/// Decay rate of the first mode in the discrete unit tube: log-ratio of the
/// section projections of a long-tube solve.
pub fn discrete_tube_rate(cfg: &MeshConfig) -> Result<f64> {
    let mode = disk_ground_mode(3, 1e-14)?;
    let length = 16.0;
    let mesh = Arc::new(build_tube_mesh(cfg, length)?);
    let space = Arc::new(Space::new(mesh, cfg.order)?);
    let m2 = mode.clone();
    let sol = solve_dirichlet(
        space,
        &[Tag::DirichletWall, Tag::Inflow],
        &move |x, r| if x < 0.5 { m2.psi1(r) } else { 0.0 },
        None,
        None,
        Measure::Axisymmetric,
    )?;
    let f = &sol.field;
    let p5 = project_section(|x, r| f.eval(x, r), 5.0, 1.0, &mode)?;
    let p9 = project_section(|x, r| f.eval(x, r), 9.0, 1.0, &mode)?;
    // exact two-exponential correction for the far Dirichlet end
    let k = (p5 / p9).ln() / 4.0;
    let mut kap = k;
    for _ in 0..50 {
        let g = |kk: f64| ((kk * (length - 5.0)).sinh() / (kk * (length - 9.0)).sinh()).ln() / 4.0;
        let next = kap + (k - g(kap));
        if (next - kap).abs() < 1e-15 {
            break;
        }
        kap = next;
    }
    Ok(kap)
}

/// Φ̂ on the left half-space with a unit tube over [0, L] and inflow data
/// e^{κL}ψ₁ on the far face.
pub fn compute_phihat(cfg: &ProfileConfig, kappa_h: f64) -> Result<(ProfileSolution, f64, f64)> {
    let mode = disk_ground_mode(3, 1e-14)?;
    let space = space_for(ProfileKind::PhiHatDomain, &cfg.mesh)?;
    let lt = cfg.mesh.tube_length;
    let kappa = if cfg.discrete_inflow_rate { kappa_h } else { mode.sqrt_lambda1 };
    let amp = (kappa * lt).exp();
    let m2 = mode.clone();
    let sol = solve_dirichlet(
        space,
        &[Tag::DirichletWall, Tag::Truncation, Tag::Inflow],
        &move |x, r| if x > lt - 1e-9 { amp * m2.psi1(r) } else { 0.0 },
        None,
        None,
        Measure::Axisymmetric,
    )?;
    let prof = ProfileSolution {
        kind: ProfileTag::PhiHat,
        solution: sol,
        carried: Carried::TubeMode { kappa },
        field_is_remainder: false,
        mode: mode.clone(),
        r_out: cfg.mesh.r_out,
        tube_length: lt,
        level: 0,
    };
    let sm = SphereMode::new(3, Hemisphere::Minus);
    let c_hat = project_sphere(|x, r| prof.total(x, r), 0.0, 1.0, &sm)?;
    let m_hat = section_integral(|s| Ok(prof.total(1.0, s)?.powi(2)), &mode)?;
    Ok((prof, c_hat, m_hat))
}

/// Ū = (1 − step)·S + w on the left half-space, S = −x₁/(Υ|x|³), with
/// (K − λM_p) w = ∫ Δ((1 − step)S) v.
pub fn compute_ubar(cfg: &ProfileConfig, weight: &WeightModel, lambda: f64) -> Result<ProfileSolution> {
    let mode = disk_ground_mode(3, 1e-14)?;
    let ups = upsilon(3);
    let space = space_for(ProfileKind::HalfMinus, &cfg.mesh)?;
    // Δ(χS) = S(χ″ − 2χ′/r) for χ = 1 − step, S harmonic of degree −2
    let rhs = move |x: f64, r: f64| {
        let rr = x.hypot(r);
        if rr <= 1.0 || rr >= 2.0 {
            return 0.0;
        }
        let (_, d1, d2) = step(rr);
        let s = singular_kernel(x, r, ups);
        s * (-d2 + 2.0 * d1 / rr)
    };
    let wminus = weight.minus_only();
    let sol = solve_dirichlet(
        space,
        &[Tag::DirichletWall, Tag::Truncation],
        &|_, _| 0.0,
        Some(&rhs),
        if lambda != 0.0 && wminus.a_minus != 0.0 { Some((lambda, &wminus)) } else { None },
        Measure::Axisymmetric,
    )?;
    Ok(ProfileSolution {
        kind: ProfileTag::Ubar,
        solution: sol,
        carried: Carried::Singular { upsilon: ups },
        field_is_remainder: true,
        mode,
        r_out: cfg.mesh.r_out,
        tube_length: 0.0,
        level: 0,
    })
}

/// ∫_{Γ⁻_t} f² dσ = t^{N−1} ∫_{S⁻} f(tθ)² dσ.
pub fn gamma_norm(f: &dyn Fn(f64, f64) -> Result<f64>, t: f64) -> Result<f64> {
    let sm = SphereMode::new(3, Hemisphere::Minus);
    let v = sm.integrate(crate::cross_section::DEFAULT_ORDER, |phi| {
        let (s, c) = phi.sin_cos();
        Ok::<f64, Error>(f(t * c, t * s)?.powi(2))
    })?;
    Ok(t * t * v)
}

/// Neville extrapolation to x = 0 of values sampled at abscissae x.
pub fn extrapolate(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut p = y.to_vec();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (x[i + k] * p[i] - x[i] * p[i + 1]) / (x[i + k] - x[i]);
        }
    }
    p[0]
}

/// Extrapolation in R^{-N} with an uncertainty from dropping the coarsest level.
pub fn extrapolate_truncation(radii: &[f64], y: &[f64], n: usize) -> (f64, f64) {
    let x: Vec<f64> = radii.iter().map(|r| r.powi(-(n as i32))).collect();
    let full = extrapolate(&x, y);
    let k = radii.len();
    let fine = if k >= 2 { extrapolate(&x[k - 2..], &y[k - 2..]) } else { full };
    (full, (full - fine).abs())
}

/// Identity residuals evaluated on computed profiles.
pub mod identities {
    use super::*;

    /// v(r) = ∫_{S₊}Φ(e₁ + rθ)Ψ⁺dσ.
    pub fn phi_sphere(phi: &ProfileSolution, r: f64) -> Result<f64> {
        let sm = SphereMode::new(3, Hemisphere::Plus);
        project_sphere(|x, rr| phi.total(x, rr), 1.0, r, &sm)
    }

    /// r^N/(r^N − 1)(v(r)/r − v(1)) − (Υ − v(1)), relative to |Υ − v(1)|.
    pub fn sphere_mean(v1: f64, vr: f64, r: f64) -> f64 {
        let ups = upsilon(3);
        let lhs = r.powi(3) / (r.powi(3) - 1.0) * (vr / r - v1);
        let rhs = ups - v1;
        (lhs - rhs).abs() / rhs.abs()
    }

    /// φ(t) = ∫_Σ F(t, x′)ψ₁ dx′ at unit tube radius.
    pub fn section(f: &ProfileSolution, t: f64) -> Result<f64> {
        project_section(|x, r| f.total(x, r), t, 1.0, &f.mode)
    }

    /// |e^{ρκ}φ(1 − ρ) − φ(1)|/|φ(1)|.
    pub fn tube_decay(phi1: f64, phi_rho: f64, rho: f64, kappa: f64) -> f64 {
        ((rho * kappa).exp() * phi_rho - phi1).abs() / phi1.abs()
    }

    /// v̂(r) = ∫_{S₋}Φ̂(rθ)Ψ⁻dσ.
    pub fn phihat_sphere(ph: &ProfileSolution, r: f64) -> Result<f64> {
        let sm = SphereMode::new(3, Hemisphere::Minus);
        project_sphere(|x, rr| ph.total(x, rr), 0.0, r, &sm)
    }

    /// |v̂(h)h^{N−1} − v̂(1)|/|v̂(1)|.
    pub fn left_sphere(v1: f64, vh: f64, h: f64) -> f64 {
        (vh * h * h - v1).abs() / v1.abs()
    }

    /// Residual of e^{−hκ}φ̂(h) = Ĉ − Ĉe^{−2hκ} + φ̂(0)e^{−2hκ}, φ̂ = Ĉ∫Φ̂ψ₁, relative to Ĉ.
    pub fn left_tube(sec0: f64, sech: f64, h: f64, kappa: f64, m_hat: f64) -> f64 {
        let c = 1.0 / m_hat.sqrt();
        let lhs = (-h * kappa).exp() * c * sech;
        let e = (-2.0 * h * kappa).exp();
        let rhs = c - c * e + c * sec0 * e;
        (lhs - rhs).abs() / c
    }
}
