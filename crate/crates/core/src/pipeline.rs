//! Profile stage, ε-sweep, ratio verdicts and persistence.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::almgren::{
    annulus_samples, compare_views, frequency_channel, frequency_exterior, BlowupKind, BlowupView, Discrepancy,
    FrequencyTrace,
};
use crate::channel_mode::{
    fit_channel_mode, fit_derivative_c, htilde, spherical_fit, ModeFit, ScaledAmplitude, SphericalFit,
};
use crate::cross_section::{
    disk_ground_mode, project_section, project_sphere, CrossSectionMode, Hemisphere, SphereMode,
};
use crate::dumbbell::{solve_dumbbell, tube_columns, DumbbellConfig, DumbbellSolution};
use crate::elliptic::{eigen_problem, Problem, WeightModel};
use crate::error::{Error, Result};
use crate::fem::{mask, Measure, Space};
use crate::mesh::{build_matched_half_plus, MeshConfig, Tag};
use crate::profiles::{
    compute_phi, compute_phihat, compute_u0, compute_ubar, discrete_tube_rate, extrapolate_truncation, gamma_norm,
    identities, GroundState, ProfileConfig, ProfileConstants, ProfileSolution, EIGEN_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Largest final |R − 1| for the normalization ratios.
    pub final_deviation: f64,
    /// Largest final |R1 − 1|.
    pub eigen_deviation: f64,
    /// Log-log slopes within ±flat_slope count as flat.
    pub flat_slope: f64,
    pub k_tilde_agreement: f64,
    pub channel_bound: f64,
    pub cascade_factor: f64,
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            final_deviation: 0.15,
            eigen_deviation: 0.05,
            flat_slope: 0.05,
            k_tilde_agreement: 0.02,
            channel_bound: 1.05,
            cascade_factor: 3.0,
            identity: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n: usize,
    pub sweep: Vec<f64>,
    pub weight: WeightModel,
    /// Dumbbell mesh; `eps` is overwritten per sweep entry.
    pub mesh: MeshConfig,
    pub profile: ProfileConfig,
    /// Truncation radii of the profile extrapolation (the last one also
    /// carries the blow-up profiles).
    pub truncation_radii: Vec<f64>,
    pub right_window: [f64; 2],
    /// Left window [lo·ε, min(cap, hi·ε)].
    pub left_window: [f64; 3],
    pub window_samples: usize,
    pub k_tilde: Vec<f64>,
    pub x0: Vec<f64>,
    pub tolerances: Tolerances,
    pub out_dir: PathBuf,
    pub cache: bool,
    pub cascade_only: bool,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let profile = ProfileConfig::default();
        RunConfig {
            n: 3,
            sweep: vec![0.3, 0.25, 0.2, 0.15, 0.125, 0.1],
            weight: profile.weight,
            mesh: MeshConfig { h0: 0.125, order: 2, ..MeshConfig::default() },
            profile,
            truncation_radii: vec![12.0, 16.0, 24.0],
            right_window: [0.55, 0.85],
            left_window: [0.5, 3.0, 0.45],
            window_samples: 16,
            k_tilde: vec![0.5, 1.0, 1.5],
            x0: vec![0.3, 0.5, 0.7],
            tolerances: Tolerances::default(),
            out_dir: PathBuf::from("run"),
            cache: true,
            cascade_only: false,
            jobs: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n != 3 {
            return Err(Error::Config(format!("only N = 3 is supported, got {}", self.n)));
        }
        if self.sweep.is_empty() {
            return Err(Error::Config("empty sweep".into()));
        }
        if self.sweep.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("sweep must be strictly decreasing".into()));
        }
        if let Some(&e) = self.sweep.iter().find(|&&e| !(e > 0.0 && e < 0.5)) {
            return Err(Error::Config(format!("sweep value {e} outside (0, 0.5)")));
        }
        if !self.cascade_only {
            if let Some(&e) = self.sweep.iter().find(|&&e| e < 0.05) {
                return Err(Error::Config(format!("sweep value {e} below 0.05 needs cascade-only mode")));
            }
        }
        if self.x0.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::Config("x0 values must lie in (0, 1)".into()));
        }
        if self.k_tilde.iter().any(|&k| !(k > 0.0 && k < self.mesh.box_half)) {
            return Err(Error::Config("k̃ values must be positive and inside the refined box".into()));
        }
        if self.truncation_radii.is_empty() || self.truncation_radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("truncation radii must be strictly increasing".into()));
        }
        if self.window_samples < 4 {
            return Err(Error::Config("fit windows need at least 4 samples".into()));
        }
        self.mesh.validate()?;
        self.profile.mesh.validate()?;
        // the tube decay rate comes from the profile mesh, so the dumbbell
        // tube must be the same mesh scaled by ε
        let (m, p) = (&self.mesh, &self.profile.mesh);
        let unit = p.effective_h0(1.0);
        let scaled = self.sweep.iter().all(|&e| (m.effective_h0(e) / e - unit).abs() <= 1e-9 * unit);
        if !scaled || m.q != p.q || m.levels != p.levels || m.order != p.order {
            return Err(Error::Config("dumbbell and profile meshes must share the tube discretization (h0/radius, q, levels, order)".into()));
        }
        Ok(())
    }

    /// Profile configuration actually used (weight, k̃ and run radius shared with the sweep).
    pub fn profile_config(&self) -> ProfileConfig {
        let mut p = self.profile.clone();
        p.weight = self.weight;
        p.k_tilde = self.k_tilde.clone();
        p.mesh.r_out = self.mesh.r_out;
        p
    }

    /// Hash of everything that influences the profile constants.
    pub fn profile_hash(&self) -> String {
        let key = serde_json::json!({
            "profile": self.profile_config(),
            "radii": self.truncation_radii,
        });
        sha_hex(&key.to_string())
    }

    /// Hash of everything that influences the record (output location excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.jobs = 0;
        c.cache = false;
        sha_hex(&serde_json::to_string(&c).expect("config serializes"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn sha_hex(s: &str) -> String {
    let d = Sha256::digest(s.as_bytes());
    d.iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

/// Residuals of the profile identities and the singular-solution checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// (r, residual) of the right-junction sphere identity.
    pub sphere_mean: Vec<(f64, f64)>,
    /// (ρ, residual) of e^{ρκ}φ(1 − ρ) = φ(1).
    pub tube: Vec<(f64, f64)>,
    /// (h, residual) of v̂(h)h^{N−1} = v̂(1).
    pub left_sphere: Vec<(f64, f64)>,
    /// (h, residual) of the left tube identity.
    pub left_tube: Vec<(f64, f64)>,
    /// max_θ |r²Ū(rθ) − Ψ⁻(θ)| / max Ψ⁻ at r = 0.05.
    pub ubar_singularity: f64,
    /// r^{1−N} coefficient of the spherical fit of Ū.
    pub ubar_beta: f64,
    pub ubar_frequency: FrequencyTrace,
    pub d0_spread: f64,
}

impl IdentityReport {
    pub fn max_identity(&self) -> f64 {
        self.sphere_mean.iter().chain(&self.tube).chain(&self.left_sphere).chain(&self.left_tube).map(|p| p.1).fold(0.0, f64::max)
    }
}

/// Persisted outcome of the profile stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub hash: String,
    pub constants: ProfileConstants,
    /// Truncation-extrapolation uncertainties of c_Φ, c_Φ̂, m_Φ̂.
    pub uncertainty: [f64; 3],
    pub identities: IdentityReport,
}

/// Fields needed by the sweep comparisons.
pub struct ProfileFields {
    pub ground: GroundState,
    pub phi: ProfileSolution,
    pub phihat: ProfileSolution,
    pub ubar: ProfileSolution,
    pub mode: CrossSectionMode,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::stage(name, e))
}

fn profile_at(cfg: &ProfileConfig, r: f64) -> ProfileConfig {
    let mut c = cfg.clone();
    c.mesh.r_out = r;
    c
}

/// The four profile solves with truncation extrapolation of the junction constants.
pub fn compute_profiles(cfg: &RunConfig) -> Result<(ProfileReport, ProfileFields)> {
    cfg.validate()?;
    let pc = cfg.profile_config();
    let mode = stage("cross-section", disk_ground_mode(3, 1e-14))?;
    let kappa = mode.sqrt_lambda1;
    let kappa_h = stage("tube rate", discrete_tube_rate(&pc.mesh))?;
    let ground = stage("u0", compute_u0(&pc))?;

    let radii = &cfg.truncation_radii;
    let sphere_r = [1.0, 1.5, 2.0, 3.0];
    let solves: Vec<Result<_>> = radii
        .par_iter()
        .map(|&r| {
            let c = profile_at(&pc, r);
            let (phi, c_phi) = stage("phi", compute_phi(&c))?;
            let (ph, c_hat, m_hat) = stage("phihat", compute_phihat(&c, kappa_h))?;
            let v: Vec<f64> = sphere_r.iter().map(|&s| identities::phi_sphere(&phi, s)).collect::<Result<_>>()?;
            let vh: Vec<f64> = sphere_r.iter().map(|&s| identities::phihat_sphere(&ph, s)).collect::<Result<_>>()?;
            Ok((phi, ph, c_phi, c_hat, m_hat, v, vh))
        })
        .collect();
    let solves: Vec<_> = solves.into_iter().collect::<Result<_>>()?;
    let col = |f: &dyn Fn(&(ProfileSolution, ProfileSolution, f64, f64, f64, Vec<f64>, Vec<f64>)) -> f64| {
        let y: Vec<f64> = solves.iter().map(f).collect();
        extrapolate_truncation(radii, &y, 3)
    };
    let (c_phi, u_phi) = col(&|s| s.2);
    let (c_hat, u_hat) = col(&|s| s.3);
    let (m_hat, u_m) = col(&|s| s.4);
    let v: Vec<f64> = (0..sphere_r.len()).map(|j| col(&|s| s.5[j]).0).collect();
    let vh: Vec<f64> = (0..sphere_r.len()).map(|j| col(&|s| s.6[j]).0).collect();
    let (phi, phihat) = {
        let last = solves.into_iter().last().expect("at least one radius");
        (last.0, last.1)
    };

    let sphere_mean = sphere_r[1..].iter().zip(&v[1..]).map(|(&r, &vr)| (r, identities::sphere_mean(v[0], vr, r))).collect();
    let left_sphere = sphere_r[1..].iter().zip(&vh[1..]).map(|(&h, &x)| (h, identities::left_sphere(vh[0], x, h))).collect();
    let s1 = identities::section(&phi, 1.0)?;
    let tube = [0.5, 1.0, 2.0]
        .iter()
        .map(|&rho| Ok((rho, identities::tube_decay(s1, identities::section(&phi, 1.0 - rho)?, rho, kappa))))
        .collect::<Result<Vec<_>>>()?;
    let sec0 = identities::section(&phihat, 0.0)?;
    let left_tube = [1.0, 2.0]
        .iter()
        .map(|&h| Ok((h, identities::left_tube(sec0, identities::section(&phihat, h)?, h, kappa, m_hat))))
        .collect::<Result<Vec<_>>>()?;

    let ubar = stage("ubar", compute_ubar(&pc, &pc.weight, ground.lambda))?;
    let sm = SphereMode::new(3, Hemisphere::Minus);
    let r_s = 0.05;
    let mut sing: f64 = 0.0;
    let mut psi_max: f64 = 0.0;
    for j in 0..=200 {
        let phi = FRAC_PI_2 + FRAC_PI_2 * j as f64 / 200.0;
        let (s, c) = phi.sin_cos();
        let psi = sm.eval_polar(phi);
        sing = sing.max((r_s * r_s * ubar.total(r_s * c, r_s * s)? - psi).abs());
        psi_max = psi_max.max(psi.abs());
    }
    let fit_r: Vec<f64> = (0..12).map(|k| 0.05 * (40.0f64).powf(k as f64 / 11.0)).collect();
    let samples: Vec<(f64, f64)> =
        fit_r.iter().map(|&r| Ok((r, project_sphere(|x, rr| ubar.total(x, rr), 0.0, r, &sm)?))).collect::<Result<_>>()?;
    let sfit = spherical_fit(&samples, 3, 0.0)?;
    let wminus = pc.weight.minus_only();
    let ub = &ubar;
    let freq = frequency_exterior(
        &|x, r| ub.total_grad(x, r),
        &|x, r| wminus.eval(x, r),
        ground.lambda,
        &[0.05, 0.1, 0.2, 0.5, 1.0],
        0.995 * pc.mesh.r_out,
        "ubar",
    )?;
    let norm_ubar = cfg
        .k_tilde
        .iter()
        .map(|&k| Ok((k, gamma_norm(&|x, r| ubar.total(x, r), k)?)))
        .collect::<Result<Vec<_>>>()?;

    let constants = ProfileConstants {
        lambda_k0: ground.lambda,
        d0: ground.d0,
        c_phi,
        c_phihat: c_hat,
        m_phihat: m_hat,
        norm_ubar,
        kappa_h,
    };
    let report = ProfileReport {
        hash: cfg.profile_hash(),
        constants,
        uncertainty: [u_phi, u_hat, u_m],
        identities: IdentityReport {
            sphere_mean,
            tube,
            left_sphere,
            left_tube,
            ubar_singularity: sing / psi_max,
            ubar_beta: sfit.beta,
            ubar_frequency: freq,
            d0_spread: ground.spread,
        },
    };
    Ok((report, ProfileFields { ground, phi, phihat, ubar, mode }))
}

fn cache_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("cache").join(format!("profiles-{}.json", cfg.profile_hash()))
}

/// Profile constants, served from the cache when a record with the same hash exists.
pub fn run_profiles(cfg: &RunConfig) -> Result<ProfileReport> {
    let path = cache_path(cfg);
    if cfg.cache {
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(rep) = serde_json::from_str::<ProfileReport>(&text) {
                if rep.hash == cfg.profile_hash() {
                    return Ok(rep);
                }
            }
        }
    }
    let (rep, _) = compute_profiles(cfg)?;
    if cfg.cache {
        write_json(&path, &rep)?;
    }
    Ok(rep)
}

/// Direct measurements at one ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRecord {
    pub eps: f64,
    pub ndof: usize,
    pub lambda: f64,
    /// λ on the right half of the same mesh with the tube mouth closed.
    pub lambda_matched: f64,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Largest relative change of left-side values under the cut re-solve.
    pub recovery_change: f64,
    pub right_fit: ModeFit,
    pub left_fit: ModeFit,
    /// C from the derivative-form fit and its relative residual.
    pub c_derivative: ScaledAmplitude,
    pub c_derivative_residual: f64,
    pub spherical: SphericalFit,
    pub htilde_x0: Vec<(f64, ScaledAmplitude)>,
    pub htilde_eps: ScaledAmplitude,
    /// φ_ε(x₀)/√H̃_ε(x₀).
    pub phi_over_h: Vec<(f64, f64)>,
    pub gamma: Vec<(f64, ScaledAmplitude)>,
    pub channel: FrequencyTrace,
    /// |(ε/2)(ln H̃)′ − 𝒩| / 𝒩 at each channel section.
    pub channel_identity: Vec<f64>,
    pub exterior: FrequencyTrace,
    pub comparisons: Vec<(String, Discrepancy)>,
    /// ∫_Σ û_ε(1, x′)ψ₁ dx′.
    pub chat_integral: f64,
    pub k_tilde_spread: f64,
    pub b_cascade: ScaledAmplitude,
    pub r6: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEntry {
    pub eps: f64,
    pub record: Option<EpsilonRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Converging,
    Flat,
    Diverging,
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn nan_if_null_vec<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSeries {
    pub name: String,
    pub variant: Option<String>,
    pub formula: String,
    /// Value the series should approach.
    pub target: f64,
    pub eps: Vec<f64>,
    /// Missing values are NaN, stored as null.
    #[serde(deserialize_with = "nan_if_null_vec")]
    pub values: Vec<f64>,
    pub mandatory: bool,
    pub require_monotone: bool,
    /// Bound on the last deviation; none for trend-only series.
    pub final_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesVerdict {
    pub name: String,
    pub variant: Option<String>,
    pub trend: Trend,
    #[serde(deserialize_with = "nan_if_null")]
    pub slope: f64,
    pub monotone: bool,
    #[serde(deserialize_with = "nan_if_null")]
    pub final_deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// NaN is stored as null.
    #[serde(deserialize_with = "nan_if_null")]
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub series: Vec<SeriesVerdict>,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Name of the first failing mandatory series or check.
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub config: RunConfig,
    pub constants: ProfileConstants,
    pub profile: ProfileReport,
    pub sweep: Vec<EpsilonEntry>,
    pub series: Vec<RatioSeries>,
    pub verdicts: Verdicts,
}

fn sa(x: f64) -> ScaledAmplitude {
    ScaledAmplitude::from_f64(x)
}

/// Up to `n` tube columns spread evenly over [lo, hi]. Nodal values are
/// superconvergent, so sections are only read at columns.
fn column_window(cols: &[f64], lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    let c: Vec<f64> = cols.iter().copied().filter(|&t| t >= lo - 1e-12 && t <= hi + 1e-12).collect();
    if c.len() < 4 {
        return Err(Error::Config(format!("fit window [{lo}, {hi}] holds only {} mesh columns", c.len())));
    }
    if c.len() <= n {
        return Ok(c);
    }
    let mut idx: Vec<usize> = (0..n).map(|k| (k as f64 * (c.len() - 1) as f64 / (n - 1) as f64).round() as usize).collect();
    idx.dedup();
    Ok(idx.into_iter().map(|i| c[i]).collect())
}

/// Seven consecutive columns centred on `t` with equal spacing, if any.
fn uniform_stencil(cols: &[f64], t: f64) -> Option<([f64; 7], f64)> {
    let i = cols.iter().position(|&c| (c - t).abs() < 1e-12)?;
    if i < 3 || i + 3 >= cols.len() {
        return None;
    }
    let h = cols[i + 1] - cols[i];
    let mut st = [0.0; 7];
    for (k, v) in st.iter_mut().enumerate() {
        *v = cols[i + k - 3];
    }
    st.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h).then_some((st, h))
}

/// Sixth-order central difference weights.
const CENTRAL7: [f64; 7] = [-1.0 / 60.0, 3.0 / 20.0, -0.75, 0.0, 0.75, -3.0 / 20.0, 1.0 / 60.0];

/// Value at `t` of a tube quantity that is a combination of e^{±κt/ε},
/// from its values at the two surrounding columns. Nodal values are far more
/// accurate than element interiors, and this interpolation is exact for the
/// two axial modes.
fn between_columns(cols: &[f64], t: f64, k: f64, f: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    if let Some(&c) = cols.iter().find(|&&c| (c - t).abs() < 1e-12) {
        return f(c);
    }
    let j = cols.partition_point(|&c| c < t);
    if j == 0 || j == cols.len() {
        return f(t);
    }
    let (a, b) = (cols[j - 1], cols[j]);
    let (fa, fb) = (f(a)?, f(b)?);
    // g(x) = p e^{k(x−t)} + q e^{−k(x−t)}; the value at t is p + q
    let (da, db) = (k * (a - t), k * (b - t));
    let det = 2.0 * (da - db).sinh();
    let p = (fa * (-db).exp() - fb * (-da).exp()) / det;
    let q = (fb * da.exp() - fa * db.exp()) / det;
    Ok(p + q)
}

/// The derivative fit uses columns with t ≤ this many tube radii, beyond
/// which φ′ − κφ/ε sinks below the discretization error.
const DERIVATIVE_SPAN: f64 = 1.5;

const CHANNEL_T: [f64; 3] = [0.3, 0.5, 0.7];

fn matched_lambda(mesh: &MeshConfig, weight: &WeightModel) -> Result<f64> {
    let m = Arc::new(build_matched_half_plus(mesh)?);
    let space = Arc::new(Space::new(m, mesh.order)?);
    let prob = Problem::assemble(space, &weight.plus_only(), Measure::Axisymmetric, mask(&[Tag::DirichletWall, Tag::Truncation]));
    Ok(eigen_problem(&prob, 1, EIGEN_TOL)?.remove(0).lambda)
}

/// All measurements at one ε.
pub fn run_epsilon(cfg: &RunConfig, c: &ProfileConstants, f: &ProfileFields, eps: f64) -> Result<EpsilonRecord> {
    let mesh = MeshConfig { eps, ..cfg.mesh.clone() };
    let dc = DumbbellConfig::new(mesh.clone(), cfg.weight);
    let u0 = &f.ground.pair.field;
    let sol = stage("dumbbell eigenpair", solve_dumbbell(&dc, &|x, r| u0.eval(x, r)))?;
    let lambda_matched = stage("matched half-space", matched_lambda(&mesh, &cfg.weight))?;
    measure(cfg, c, f, &sol, lambda_matched)
}

fn measure(
    cfg: &RunConfig,
    c: &ProfileConstants,
    f: &ProfileFields,
    sol: &DumbbellSolution,
    lambda_matched: f64,
) -> Result<EpsilonRecord> {
    let eps = sol.eps;
    let mode = &f.mode;
    // the discrete tube carries the mesh's own decay rate, which scales exactly with ε
    let kappa = c.kappa_h;
    let u = Arc::new(sol.recovered.clone());
    let ue = {
        let u = u.clone();
        move |x: f64, r: f64| u.eval(x, r)
    };
    let tube = [0.0, 1.0];

    // left values: global versus cut re-solve
    let mut recovery_change: f64 = 0.0;
    for &(x, r) in &annulus_samples(0.0, 0.5, 1.5, -1.0, 3, 8) {
        let a = sol.global.eval(x, r)?;
        let b = u.eval(x, r)?;
        recovery_change = recovery_change.max((a - b).abs() / b.abs());
    }

    let section = |t: f64| project_section(&ue, t, eps, mode);
    let ns = cfg.window_samples;
    let cols = tube_columns(&sol.global.space);
    let rw: Vec<(f64, f64)> = column_window(&cols, cfg.right_window[0], cfg.right_window[1], ns)?
        .into_iter()
        .map(|t| Ok((t, section(t)?)))
        .collect::<Result<_>>()?;
    let right_fit = stage("right mode fit", fit_channel_mode(&rw, eps, kappa))?;
    let [wl, wh, cap] = cfg.left_window;
    let (llo, lhi) = (wl * eps, (wh * eps).min(cap));
    let lw: Vec<(f64, f64)> =
        column_window(&cols, llo, lhi, ns)?.into_iter().map(|t| Ok((t, section(t)?))).collect::<Result<_>>()?;
    let left_fit = stage("left mode fit", fit_channel_mode(&lw, eps, kappa))?;
    // φ′ by central differences of nodal sections on uniform column runs
    let mut dsec: Vec<(f64, f64, f64)> = Vec::new();
    for &t in cols.iter().filter(|&&t| t >= llo - 1e-12 && t <= DERIVATIVE_SPAN * eps + 1e-12) {
        if let Some((st, h)) = uniform_stencil(&cols, t) {
            let mut d = 0.0;
            for (w, &x) in CENTRAL7.iter().zip(&st) {
                if *w != 0.0 {
                    d += w * section(x)?;
                }
            }
            dsec.push((t, section(t)?, d / h));
        }
    }
    let (c_derivative, c_derivative_residual) = stage("derivative fit", fit_derivative_c(&dsec, eps, kappa))?;

    let sm = SphereMode::new(3, Hemisphere::Minus);
    let fit_r: Vec<f64> = (0..12).map(|k| 2.0 * eps * (1.0 / eps).powf(k as f64 / 11.0)).collect();
    let sph: Vec<(f64, f64)> =
        fit_r.iter().map(|&r| Ok((r, project_sphere(&ue, 0.0, r, &sm)?))).collect::<Result<_>>()?;
    let spherical = stage("spherical fit", spherical_fit(&sph, 3, eps))?;

    let k = kappa / eps;
    let root_h = |t: f64| Ok(htilde(&ue, t, eps, mode, tube)?.0.sqrt());
    let mut htilde_x0 = Vec::new();
    let mut phi_over_h = Vec::new();
    for &x0 in &cfg.x0 {
        let rh = between_columns(&cols, x0, k, &root_h)?;
        htilde_x0.push((x0, sa(rh * rh)));
        phi_over_h.push((x0, between_columns(&cols, x0, k, &section)? / rh));
    }
    let rh_eps = between_columns(&cols, eps, k, &root_h)?;
    let htilde_eps = sa(rh_eps * rh_eps);
    let gamma: Vec<(f64, ScaledAmplitude)> =
        cfg.k_tilde.iter().map(|&k| Ok((k, sa(gamma_norm(&ue, k)?)))).collect::<Result<_>>()?;

    let w = cfg.weight;
    let channel_t = CHANNEL_T;
    let channel =
        stage("channel frequency", frequency_channel(&u, &|x, r| w.eval(x, r), sol.lambda, eps, &channel_t, mode))?;
    let mut channel_identity = Vec::new();
    for (k, &t) in channel_t.iter().enumerate() {
        let d = 0.5 * eps;
        let hp = htilde(&ue, t + d, eps, mode, tube)?.0;
        let hm = htilde(&ue, t - d, eps, mode, tube)?.0;
        let lhs = 0.5 * eps * (hp.ln() - hm.ln()) / (2.0 * d);
        channel_identity.push((lhs - channel.n[k]).abs() / channel.n[k].abs());
    }

    // amplitude e^{κ/ε}/ε³ applied in scaled arithmetic
    let lift = ScaledAmplitude::exp(kappa / eps).div(&sa(eps.powi(3)));
    let lifted = {
        let u = u.clone();
        move |x: f64, r: f64| -> Result<(f64, [f64; 2])> {
            let (v, g) = u.eval_grad(x, r)?;
            Ok((sa(v).mul(&lift).try_to_f64()?, [sa(g[0]).mul(&lift).try_to_f64()?, sa(g[1]).mul(&lift).try_to_f64()?]))
        }
    };
    let exterior = stage(
        "exterior frequency",
        frequency_exterior(&lifted, &|x, r| w.eval(x, r), sol.lambda, &[0.1, 0.2, 0.5, 1.0], 0.995 * cfg.mesh.r_out, &format!("dumbbell eps={eps}")),
    )?;

    let src: Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync> = {
        let u = u.clone();
        Arc::new(move |x, r| u.eval(x, r))
    };
    let mut comparisons = Vec::new();
    let right = BlowupView::new(src.clone(), BlowupKind::RightJunction, eps, mode)?;
    let d0 = c.d0;
    let phi = &f.phi;
    comparisons.push((
        "right_junction".to_string(),
        compare_views(&|x, r| right.eval(x, r), &|x, r| Ok(d0 * phi.total(x, r)?), &annulus_samples(1.0, 1.5, 2.5, 1.0, 6, 24))?,
    ));
    let left = BlowupView::new(src.clone(), BlowupKind::LeftJunction, eps, mode)?;
    let ph = &f.phihat;
    let sm_hat = c.m_phihat.sqrt();
    comparisons.push((
        "left_junction".to_string(),
        compare_views(&|x, r| left.eval(x, r), &|x, r| Ok(ph.total(x, r)? / sm_hat), &annulus_samples(0.0, 1.5, 2.5, -1.0, 6, 24))?,
    ));
    // the channel view reads the tube between columns by two-mode interpolation
    let tube_src: Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync> = {
        let (u, cols) = (u.clone(), cols.clone());
        Arc::new(move |x, r| between_columns(&cols, x, k, &|c| u.eval(c, r)))
    };
    let chan = BlowupView::new(tube_src, BlowupKind::Channel { x0: 0.5 }, eps, mode)?;
    let sec_samples: Vec<(f64, f64)> = (0..=24).map(|k| (1.0, k as f64 / 24.0)).collect();
    comparisons.push((
        "channel".to_string(),
        compare_views(&|x, r| chan.eval(x, r), &|_, r| Ok(mode.psi1(r)), &sec_samples)?,
    ));
    let chat_integral = project_section(|x, r| left.eval(x / eps, r / eps), eps, eps, mode)?;
    let ub = &f.ubar;
    let ann = annulus_samples(0.0, 0.5, 1.5, -1.0, 6, 24);
    let inner = annulus_samples(0.0, 0.1, 0.3, -1.0, 5, 24);
    let mut views = Vec::new();
    for (&k, &(_, nu)) in cfg.k_tilde.iter().zip(&c.norm_ubar) {
        let view = BlowupView::new(src.clone(), BlowupKind::Normalized { k_tilde: k }, eps, mode)?;
        let s = nu.sqrt();
        comparisons.push((
            format!("normalized k={k}"),
            compare_views(&|x, r| view.eval(x, r), &|x, r| Ok(ub.total(x, r)? / s), &ann)?,
        ));
        views.push((view, s));
    }
    // limit shapes U_ε·√normΓ_Ū(k̃) must not depend on k̃
    let mut k_tilde_spread: f64 = 0.0;
    for (a, sa_) in &views {
        for (b, sb) in &views {
            let d = compare_views(&|x, r| Ok(a.eval(x, r)? * sa_), &|x, r| Ok(b.eval(x, r)? * sb), &inner)?;
            k_tilde_spread = k_tilde_spread.max(d.sup);
        }
    }
    let big_k = c.c_phihat * c.c_phi * c.d0;
    let r6 = compare_views(
        &|x, r| sa(u.eval(x, r)?).mul(&lift).try_to_f64(),
        &|x, r| Ok(big_k * ub.total(x, r)?),
        &ann,
    )?
    .sup;

    // B from the left junction limit: (φ̂(0) − Ĉ)√H̃(ε)e^{−κ/ε}
    let chat = 1.0 / c.m_phihat.sqrt();
    let phihat0 = chat * identities::section(&f.phihat, 0.0)?;
    let b_cascade = sa(phihat0 - chat).mul(&htilde_eps.sqrt()).mul(&ScaledAmplitude::exp(-kappa / eps));

    Ok(EpsilonRecord {
        eps,
        ndof: sol.ndof,
        lambda: sol.lambda,
        lambda_matched,
        residual: sol.residual,
        residual_history: sol.residual_history.clone(),
        recovery_change,
        right_fit,
        left_fit,
        c_derivative,
        c_derivative_residual,
        spherical,
        htilde_x0,
        htilde_eps,
        phi_over_h,
        gamma,
        channel,
        channel_identity,
        exterior,
        comparisons,
        chat_integral,
        k_tilde_spread,
        b_cascade,
        r6,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Profiles, then every sweep entry concurrently, then series and verdicts.
pub fn run(cfg: &RunConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let workers = pool(cfg.jobs)?;
    workers.install(|| {
        let (report, fields) = compute_profiles(cfg)?;
        if cfg.cache {
            write_json(&cache_path(cfg), &report)?;
        }
        run_sweep(cfg, report, &fields)
    })
}

pub fn run_sweep(cfg: &RunConfig, profile: ProfileReport, fields: &ProfileFields) -> Result<RunRecord> {
    let c = &profile.constants;
    let sweep: Vec<EpsilonEntry> = cfg
        .sweep
        .par_iter()
        .map(|&eps| match run_epsilon(cfg, c, fields, eps) {
            Ok(r) => EpsilonEntry { eps, record: Some(r), error: None },
            Err(e) => EpsilonEntry { eps, record: None, error: Some(error_chain(&e)) },
        })
        .collect();
    let series = build_series(cfg, c, &sweep);
    let mut record = RunRecord {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        constants: c.clone(),
        profile,
        sweep,
        series,
        verdicts: Verdicts { series: Vec::new(), checks: Vec::new(), pass: false, first_failure: None },
    };
    record.verdicts = verify(&record, &cfg.tolerances);
    Ok(record)
}

pub fn error_chain(e: &dyn std::error::Error) -> String {
    let mut s = e.to_string();
    let mut cur = e.source();
    while let Some(c) = cur {
        s.push_str(": ");
        s.push_str(&c.to_string());
        cur = c.source();
    }
    s
}

/// Ratio and smallness series over the successful sweep entries.
pub fn build_series(cfg: &RunConfig, c: &ProfileConstants, sweep: &[EpsilonEntry]) -> Vec<RatioSeries> {
    let recs: Vec<&EpsilonRecord> = sweep.iter().filter_map(|e| e.record.as_ref()).collect();
    let eps: Vec<f64> = recs.iter().map(|r| r.eps).collect();
    let kappa = c.kappa_h;
    let tol = cfg.tolerances.final_deviation;
    let direct = !cfg.cascade_only;
    let mut out = Vec::new();
    let mut push = |name: &str, variant: Option<String>, formula: &str, target: f64, values: Vec<f64>, mandatory: bool, tol: f64| {
        out.push(RatioSeries {
            name: name.to_string(),
            variant,
            formula: formula.to_string(),
            target,
            eps: eps.clone(),
            values,
            mandatory,
            require_monotone: mandatory,
            final_tolerance: tol.is_finite().then_some(tol),
        });
    };
    let kc = c.d0 * c.c_phi;
    let big_k = c.c_phihat * c.c_phi * c.d0;
    let sqrt_m = c.m_phihat.sqrt();

    push("R1", None, "λ_ε / λ_k0 (λ_k0 on the matched right half-space)", 1.0, recs.iter().map(|r| r.lambda / r.lambda_matched).collect(), true, cfg.tolerances.eigen_deviation);
    for (j, &x0) in cfg.x0.iter().enumerate() {
        let v = recs
            .iter()
            .map(|r| {
                ScaledAmplitude::exp(-kappa * (x0 - 1.0) / r.eps)
                    .mul(&r.htilde_x0[j].1.sqrt())
                    .scale(1.0 / (r.eps * kc))
                    .to_f64()
            })
            .collect();
        push("R2", Some(format!("x0={x0}")), "ε⁻¹ e^{−κ(x₀−1)/ε} √H̃_ε(x₀) / (d₀ c_Φ)", 1.0, v, true, tol);
    }
    let r3 = recs
        .iter()
        .map(|r| ScaledAmplitude::exp(kappa / r.eps).mul(&r.htilde_eps.sqrt()).scale(1.0 / (r.eps * kc * sqrt_m)).to_f64())
        .collect();
    push("R3", None, "ε⁻¹ e^{κ/ε} √H̃_ε(ε) / (d₀ c_Φ √m_Φ̂)", 1.0, r3, direct, tol);
    let r4 = recs
        .iter()
        .map(|r| {
            sa(r.spherical.d / (3.0 * r.eps * r.eps))
                .div(&r.htilde_eps.sqrt())
                .scale(-sqrt_m / c.c_phihat)
                .to_f64()
        })
        .collect();
    push("R4", None, "d_ε / (N ε^{N−1} √H̃_ε(ε)) / (−c_Φ̂/√m_Φ̂)", 1.0, r4, false, tol);
    for (j, &(k, nu)) in c.norm_ubar.iter().enumerate() {
        let v = recs
            .iter()
            .map(|r| {
                ScaledAmplitude::exp(kappa / r.eps)
                    .mul(&r.gamma[j].1.sqrt())
                    .scale(1.0 / (r.eps.powi(3) * nu.sqrt() * big_k))
                    .to_f64()
            })
            .collect();
        push("R5", Some(format!("k={k}")), "e^{κ/ε} ε^{−N} √(∫_{Γ⁻_k̃} u_ε²) / (√normΓ_Ū(k̃) c_Φ̂ c_Φ d₀)", 1.0, v, direct, tol);
    }
    push("R6", None, "sup_{0.5≤|x|≤1.5} |e^{κ/ε}u_ε/ε^N − c_Φ̂ c_Φ d₀ Ū| / sup |c_Φ̂ c_Φ d₀ Ū|", 0.0, recs.iter().map(|r| r.r6).collect(), direct, tol);
    let a_ratio = recs.iter().map(|r| r.right_fit.a.scale(1.0 / (r.eps * kc)).to_f64()).collect();
    push("A", None, "A_ε / (ε d₀ c_Φ)", 1.0, a_ratio, true, tol);
    for &x0 in &cfg.x0 {
        let v = recs
            .iter()
            .map(|r| r.left_fit.b.abs().mul(&ScaledAmplitude::exp(2.0 * kappa * (1.0 - x0) / r.eps)).scale(1.0 / r.eps).to_f64())
            .collect();
        push("B", Some(format!("x0={x0}")), "|B_ε| ε⁻¹ e^{2κ(1−x₀)/ε}", 0.0, v, direct, f64::INFINITY);
    }
    for name in ["right_junction", "left_junction", "channel"] {
        let v = recs.iter().map(|r| r.comparisons.iter().find(|c| c.0 == name).map_or(f64::NAN, |c| c.1.sup)).collect();
        push("blowup", Some(name.to_string()), "sup error of the rescaled view against its limit profile", 0.0, v, direct || name != "left_junction", f64::INFINITY);
    }
    for &k in &cfg.k_tilde {
        let name = format!("normalized k={k}");
        let v = recs.iter().map(|r| r.comparisons.iter().find(|c| c.0 == name).map_or(f64::NAN, |c| c.1.sup)).collect();
        push("blowup", Some(name.clone()), "sup error of U_ε against Ū/√normΓ_Ū(k̃)", 0.0, v, direct, f64::INFINITY);
    }
    for (j, &x0) in cfg.x0.iter().enumerate() {
        let v = recs.iter().map(|r| r.phi_over_h[j].1).collect();
        push("phi_over_h", Some(format!("x0={x0}")), "φ_ε(x₀)/√H̃_ε(x₀)", 1.0, v, true, tol);
    }
    out
}

fn trend(eps: &[f64], dev: &[f64], flat: f64) -> (Trend, f64) {
    let pts: Vec<(f64, f64)> =
        eps.iter().zip(dev).filter(|p| p.1.is_finite()).map(|(&e, &d)| (e.ln(), d.max(1e-300).ln())).collect();
    if pts.len() < 2 {
        return (Trend::Flat, 0.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    // deviations shrinking with ε give a positive slope
    let t = if slope > flat {
        Trend::Converging
    } else if slope < -flat {
        Trend::Diverging
    } else {
        Trend::Flat
    };
    (t, slope)
}

pub fn classify(s: &RatioSeries, tol: &Tolerances) -> SeriesVerdict {
    let dev: Vec<f64> = s.values.iter().map(|v| (v - s.target).abs()).collect();
    let (t, slope) = trend(&s.eps, &dev, tol.flat_slope);
    let monotone = dev.windows(2).all(|w| w[1] < w[0]);
    let final_deviation = dev.last().copied().unwrap_or(f64::NAN);
    let pass = !dev.is_empty()
        && t == Trend::Converging
        && s.final_tolerance.is_none_or(|b| final_deviation <= b)
        && (monotone || !s.require_monotone);
    SeriesVerdict { name: s.name.clone(), variant: s.variant.clone(), trend: t, slope, monotone, final_deviation, pass }
}

/// Trend verdicts plus the bound checks; passes iff every mandatory item passes.
pub fn verify(record: &RunRecord, tol: &Tolerances) -> Verdicts {
    let mut first = None;
    let mut series = Vec::new();
    for s in &record.series {
        let v = classify(s, tol);
        if s.mandatory && !v.pass && first.is_none() {
            first = Some(match &s.variant {
                Some(var) => format!("{} ({var}): {}", s.name, s.formula),
                None => format!("{}: {}", s.name, s.formula),
            });
        }
        series.push(v);
    }
    let mut checks = Vec::new();
    let mut check = |name: &str, value: f64, bound: f64, pass: bool| {
        checks.push(Check { name: name.to_string(), value, bound, pass });
    };
    let recs: Vec<&EpsilonRecord> = record.sweep.iter().filter_map(|e| e.record.as_ref()).collect();
    let failed = record.sweep.iter().filter(|e| e.error.is_some()).count();
    check("sweep entries failed", failed as f64, 0.0, failed == 0);
    let id = &record.profile.identities;
    check("profile identities", id.max_identity(), tol.identity, id.max_identity() < tol.identity);
    let kappa = upsilon_free_kappa();
    let bound = tol.channel_bound * kappa;
    let worst = recs.iter().filter(|r| r.eps <= 0.2 + 1e-12).map(|r| channel_n(r, 0.5)).fold(f64::MIN, f64::max);
    if worst > f64::MIN {
        check("channel frequency at t=0.5", worst, bound, worst <= bound);
    }
    let direct = !record.config.cascade_only;
    if let Some(last) = recs.last() {
        if direct {
            let sp = last.k_tilde_spread;
            check("normalized views across k̃", sp, tol.k_tilde_agreement, sp <= tol.k_tilde_agreement);
            let r5: Vec<f64> = record
                .series
                .iter()
                .filter(|s| s.name == "R5")
                .filter_map(|s| s.values.last().copied())
                .collect();
            let (lo, hi) = r5.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            let agree = if r5.is_empty() { f64::NAN } else { (hi - lo) / lo.abs() };
            check("R5 across k̃", agree, tol.k_tilde_agreement, agree <= tol.k_tilde_agreement);
            let ratio = sa_ratio(&last.left_fit.b, &last.b_cascade);
            let f = tol.cascade_factor;
            check("B cascade / B fit", ratio, f, ratio >= 1.0 / f && ratio <= f);
            // mismatch in units of the combined fit uncertainty, worst over the
            // entries whose left window is not cut short by the cap
            let [_, wh, cap] = record.config.left_window;
            // (skipped when no entry qualifies)
            let cd: Vec<f64> = recs
                .iter()
                .filter(|r| r.left_fit.b_resolved && wh * r.eps <= cap)
                .map(|r| {
                    let d = (sa_ratio(&r.c_derivative, &r.left_fit.c) - 1.0).abs();
                    d / (r.c_derivative_residual + r.left_fit.residual)
                })
                .collect();
            if !cd.is_empty() {
                let cd = cd.iter().copied().fold(0.0, f64::max);
                check("C derivative fit vs C from B, in fit residuals", cd, 1.0, cd <= 1.0);
            }
            let pos = recs.iter().all(|r| r.chat_integral > 0.0);
            check("left junction section integral positive", recs.iter().map(|r| r.chat_integral).fold(f64::MAX, f64::min), 0.0, pos);
        }
        let ident = recs.iter().flat_map(|r| r.channel_identity.iter().copied()).fold(0.0, f64::max);
        check("channel log-derivative identity", ident, 0.01, ident <= 0.01);
    }
    let c = &record.constants;
    let positive = c.d0 > 0.0 && c.c_phi > 0.0 && c.c_phihat > 0.0 && c.m_phihat > 0.0;
    check("profile constants positive", c.d0.min(c.c_phi).min(c.c_phihat).min(c.m_phihat), 0.0, positive);
    if first.is_none() {
        first = checks.iter().find(|c| !c.pass).map(|c| c.name.clone());
    }
    let pass = first.is_none();
    Verdicts { series, checks, pass, first_failure: first }
}

fn sa_ratio(a: &ScaledAmplitude, b: &ScaledAmplitude) -> f64 {
    if b.is_zero() {
        f64::NAN
    } else {
        a.div(b).to_f64()
    }
}

fn upsilon_free_kappa() -> f64 {
    disk_ground_mode(3, 1e-14).map(|m| m.sqrt_lambda1).unwrap_or(f64::NAN)
}

fn channel_n(r: &EpsilonRecord, t: f64) -> f64 {
    r.channel.radii.iter().position(|&x| (x - t).abs() < 1e-12).map_or(f64::NAN, |k| r.channel.n[k])
}

/// JSON formatter that prints every real with 17 significant digits.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write!(w, "{:.16e}", v as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, to_json(value)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<RunRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Record,
    Csv,
    Svg,
}

/// Writes the record, one CSV and one SVG per series name, and the frequency traces.
pub fn emit(record: &RunRecord, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if formats.contains(&Format::Record) {
        let p = dir.join("record.json");
        write_json(&p, record)?;
        written.push(p);
    }
    let mut names: Vec<&str> = Vec::new();
    for s in &record.series {
        if !names.contains(&s.name.as_str()) {
            names.push(&s.name);
        }
    }
    for name in names {
        let group: Vec<&RatioSeries> = record.series.iter().filter(|s| s.name == name).collect();
        if formats.contains(&Format::Csv) {
            let p = dir.join(format!("{name}.csv"));
            std::fs::write(&p, series_csv(&group)).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        if formats.contains(&Format::Svg) {
            let p = dir.join(format!("{name}.svg"));
            std::fs::write(&p, series_svg(name, &group)).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
    }
    if formats.contains(&Format::Csv) {
        let tdir = dir.join("traces");
        std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        let mut traces = vec![&record.profile.identities.ubar_frequency];
        for e in record.sweep.iter().filter_map(|e| e.record.as_ref()) {
            traces.push(&e.channel);
            traces.push(&e.exterior);
        }
        for t in traces {
            let p = tdir.join(format!("{}.csv", t.context.replace([' ', '='], "_")));
            std::fs::write(&p, trace_csv(t)).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
    }
    Ok(written)
}

fn label(s: &RatioSeries) -> String {
    s.variant.clone().unwrap_or_else(|| s.name.clone())
}

pub fn series_csv(group: &[&RatioSeries]) -> String {
    let mut out = String::from("eps");
    for s in group {
        let _ = write!(out, ",{}", label(s));
    }
    out.push('\n');
    let eps = group.first().map(|s| s.eps.clone()).unwrap_or_default();
    for (i, e) in eps.iter().enumerate() {
        let _ = write!(out, "{e:.16e}");
        for s in group {
            let _ = write!(out, ",{:.16e}", s.values[i]);
        }
        out.push('\n');
    }
    out
}

pub fn trace_csv(t: &FrequencyTrace) -> String {
    let mut out = String::from("r,D,H,N\n");
    for i in 0..t.radii.len() {
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", t.radii[i], t.d[i], t.h[i], t.n[i]);
    }
    out
}

/// Log-linear plot: ε on a log axis, one polyline per variant.
pub fn series_svg(name: &str, group: &[&RatioSeries]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let pts: Vec<(f64, f64)> = group
        .iter()
        .flat_map(|s| s.eps.iter().zip(&s.values).map(|(&e, &v)| (e.ln(), v)))
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    // ε decreases to the right
    let px = |x: f64| m + (x1 - x) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<title>{name}</title>\n"
    );
    let _ = writeln!(out, "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>", w - 2.0 * m, h - 2.0 * m);
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"12\">ε (log scale, decreasing)</text>", w / 2.0 - 60.0, h - 15.0);
    for (k, s) in group.iter().enumerate() {
        let line: Vec<String> = s
            .eps
            .iter()
            .zip(&s.values)
            .filter(|p| p.0.ln().is_finite() && p.1.is_finite())
            .map(|(&e, &v)| format!("{:.2},{:.2}", px(e.ln()), py(v)))
            .collect();
        let c = colors[k % colors.len()];
        let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"1.5\" points=\"{}\"><title>{}</title></polyline>", line.join(" "), label(s));
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{c}\">{}</text>", m + 8.0, m + 14.0 * (k + 1) as f64, label(s));
    }
    out.push_str("</svg>\n");
    out
}

/// Plain-text summary of the verdicts.
pub fn render_verdicts(v: &Verdicts) -> String {
    let mut out = String::new();
    for s in &v.series {
        let _ = writeln!(
            out,
            "{:<5} {:<5} {:<22} trend={:<10} slope={:>8.3} monotone={:<5} final={:.3e}",
            if s.pass { "ok" } else { "FAIL" },
            s.name,
            s.variant.clone().unwrap_or_default(),
            format!("{:?}", s.trend).to_lowercase(),
            s.slope,
            s.monotone,
            s.final_deviation
        );
    }
    for c in &v.checks {
        let _ = writeln!(out, "{:<5} {} = {:.6e} (bound {:.3e})", if c.pass { "ok" } else { "FAIL" }, c.name, c.value, c.bound);
    }
    match &v.first_failure {
        None => out.push_str("verdict: pass\n"),
        Some(f) => {
            let _ = writeln!(out, "verdict: fail, first broken statement: {f}");
        }
    }
    out
}
