//! Frequency functions on exterior half-balls and in the tube, and the
//! rescaled views of the dumbbell eigenfunction at the junctions.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel_mode::{hminus, ScaledAmplitude};
use crate::error::{Error, Result};
use crate::quad::Rule;

/// Value and (∂₁, ∂ρ) gradient of an axisymmetric field.
pub type GradField<'a> = dyn Fn(f64, f64) -> Result<(f64, [f64; 2])> + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrace {
    pub context: String,
    pub lambda: f64,
    pub radii: Vec<f64>,
    pub d: Vec<f64>,
    pub h: Vec<f64>,
    pub n: Vec<f64>,
}

impl FrequencyTrace {
    /// Largest decrease of e^{δr}𝒩(r) between consecutive radii (0 when monotone).
    pub fn monotonicity_violation(&self, delta: f64) -> f64 {
        let mut worst: f64 = 0.0;
        let mut idx: Vec<usize> = (0..self.radii.len()).collect();
        idx.sort_by(|&a, &b| self.radii[a].total_cmp(&self.radii[b]));
        for w in idx.windows(2) {
            let a = (delta * self.radii[w[0]]).exp() * self.n[w[0]];
            let b = (delta * self.radii[w[1]]).exp() * self.n[w[1]];
            worst = worst.max(a - b);
        }
        worst
    }
}

/// Polar quadrature over {r ≤ |x| ≤ outer, x₁ < 0} with geometric radial panels.
pub struct ExteriorRule {
    pub points: Vec<(f64, f64, f64)>,
}

impl ExteriorRule {
    pub fn new(r: f64, outer: f64) -> Result<Self> {
        if !(outer > r && r > 0.0) {
            return Err(Error::EmptyRegion(format!("exterior region [{r}, {outer}]")));
        }
        let radial_order = 16;
        let angular = Rule::new(48, FRAC_PI_2, PI);
        let mut edges = vec![r];
        while *edges.last().unwrap() * 1.5 < outer {
            let next = *edges.last().unwrap() * 1.5;
            edges.push(next);
        }
        edges.push(outer);
        let mut points = Vec::new();
        for w in edges.windows(2) {
            let rad = Rule::new(radial_order, w[0], w[1]);
            for (&s, &ws) in rad.nodes.iter().zip(&rad.weights) {
                for (&phi, &wp) in angular.nodes.iter().zip(&angular.weights) {
                    let (sn, cs) = phi.sin_cos();
                    let rho = s * sn;
                    // dμ = 2πρ dρ dx₁ = 2πρ s ds dφ
                    points.push((s * cs, rho, ws * wp * 2.0 * PI * rho * s));
                }
            }
        }
        Ok(ExteriorRule { points })
    }
}

/// D, H and 𝒩 = D/H on the exterior half-balls of D⁻.
pub fn frequency_exterior(
    field: &GradField,
    weight: &dyn Fn(f64, f64) -> f64,
    lambda: f64,
    radii: &[f64],
    outer: f64,
    context: &str,
) -> Result<FrequencyTrace> {
    let mut d = Vec::new();
    let mut h = Vec::new();
    let mut n = Vec::new();
    for &r in radii {
        let rule = ExteriorRule::new(r, outer)?;
        let mut energy = 0.0;
        for &(x, rho, w) in &rule.points {
            let (v, g) = field(x, rho)?;
            energy += w * (g[0] * g[0] + g[1] * g[1] - lambda * weight(x, rho) * v * v);
        }
        let dd = energy / r;
        let hh = hminus(&|x, rho| Ok(field(x, rho)?.0), r)?;
        if !(hh > 0.0) {
            return Err(Error::Degenerate(format!("boundary mass vanishes at r={r}")));
        }
        d.push(dd);
        h.push(hh);
        n.push(dd / hh);
    }
    Ok(FrequencyTrace { context: context.to_string(), lambda, radii: radii.to_vec(), d, h, n })
}

/// Which rescaling a view applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BlowupKind {
    /// ũ(x) = u(e₁ + ε(x − e₁))/ε.
    RightJunction,
    /// w(x₁, x′) = u(ε(x₁ − 1) + x₀, εx′)/√H̃(x₀).
    Channel { x0: f64 },
    /// û(x) = u(εx)/√H̃(ε).
    LeftJunction,
    /// U(x) = u(x)/√(∫_{Γ⁻_k̃} u² dσ).
    Normalized { k_tilde: f64 },
}

/// Rescaled view of a source field.
#[derive(Clone)]
pub struct BlowupView {
    pub kind: BlowupKind,
    pub eps: f64,
    pub denominator: ScaledAmplitude,
    source: Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync>,
}

impl std::fmt::Debug for BlowupView {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlowupView").field("kind", &self.kind).field("eps", &self.eps).field("denominator", &self.denominator).finish()
    }
}

impl BlowupView {
    /// Builds the view; `denominator` is the closed-form normalizer, or None to compute it.
    pub fn new(
        source: Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync>,
        kind: BlowupKind,
        eps: f64,
        mode: &crate::cross_section::CrossSectionMode,
    ) -> Result<Self> {
        let sec = |t: f64| -> Result<f64> {
            crate::cross_section::section_integral(|s| Ok(source(t, eps * s)?.powi(2)), mode)
        };
        let denom = match kind {
            BlowupKind::RightJunction => eps,
            BlowupKind::Channel { x0 } => sec(x0)?.sqrt(),
            BlowupKind::LeftJunction => sec(eps)?.sqrt(),
            BlowupKind::Normalized { k_tilde } => {
                crate::profiles::gamma_norm(&|x, r| source(x, r), k_tilde)?.sqrt()
            }
        };
        if !(denom > 0.0) {
            return Err(Error::Degenerate(format!("{kind:?} normalizer vanishes")));
        }
        Ok(BlowupView { kind, eps, denominator: ScaledAmplitude::from_f64(denom), source })
    }

    pub fn eval(&self, x1: f64, rho: f64) -> Result<f64> {
        let e = self.eps;
        let (y1, yr) = match self.kind {
            BlowupKind::RightJunction => (1.0 + e * (x1 - 1.0), e * rho),
            BlowupKind::Channel { x0 } => (e * (x1 - 1.0) + x0, e * rho),
            BlowupKind::LeftJunction => (e * x1, e * rho),
            BlowupKind::Normalized { .. } => (x1, rho),
        };
        let v = ScaledAmplitude::from_f64((self.source)(y1, yr)?);
        v.div(&self.denominator).try_to_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// sup |view − ref| / sup |ref|.
    pub sup: f64,
    /// RMS of (view − ref) over the samples, divided by the RMS of ref.
    pub l2: f64,
}

pub fn compare_views(
    view: &dyn Fn(f64, f64) -> Result<f64>,
    reference: &dyn Fn(f64, f64) -> Result<f64>,
    samples: &[(f64, f64)],
) -> Result<Discrepancy> {
    let mut sup: f64 = 0.0;
    let mut ref_sup: f64 = 0.0;
    let mut se = 0.0;
    let mut sr = 0.0;
    for &(x, r) in samples {
        let a = view(x, r)?;
        let b = reference(x, r)?;
        sup = sup.max((a - b).abs());
        ref_sup = ref_sup.max(b.abs());
        se += (a - b).powi(2);
        sr += b * b;
    }
    if ref_sup == 0.0 {
        return Ok(Discrepancy { sup, l2: se.sqrt() });
    }
    Ok(Discrepancy { sup: sup / ref_sup, l2: (se / sr).sqrt() })
}

/// Polar sample grid on the half-annulus a ≤ |x − c| ≤ b on the given side
/// (sign +1 for x₁ > c, −1 for x₁ < c), angles kept strictly inside.
pub fn annulus_samples(center: f64, a: f64, b: f64, side: f64, nr: usize, nphi: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(nr * nphi);
    for i in 0..nr {
        let r = if nr == 1 { a } else { a + (b - a) * i as f64 / (nr - 1) as f64 };
        for j in 0..nphi {
            let phi = FRAC_PI_2 * (j as f64 + 0.5) / nphi as f64;
            let (s, c) = phi.sin_cos();
            out.push((center + side * r * c, r * s));
        }
    }
    out
}

/// ∫_{x₁ < t}(|∇u|² − λ p u²) dμ over the left half-space and the tube part.
pub fn energy_left_of(
    field: &crate::fem::Field,
    weight: &dyn Fn(f64, f64) -> f64,
    lambda: f64,
    t: f64,
) -> Result<f64> {
    let space = &field.space;
    let mesh = &space.mesh;
    let [lo, hi] = mesh.geometry.tube.ok_or_else(|| Error::Config("mesh has no tube".into()))?;
    if !(t > lo && t < hi) {
        return Err(Error::OutsideTube { t, lo, hi });
    }
    let eps = mesh.geometry.radius;
    let mut cols = crate::dumbbell::tube_columns(space);
    cols.insert(0, lo);
    let c = cols.iter().copied().filter(|&c| c <= t + 1e-12).fold(lo, f64::max);
    let keep = |k: usize| mesh.triangles[k].iter().all(|&v| mesh.vertices[v][0] <= c + 1e-12);
    let bulk = crate::fem::integrate_field(field, crate::fem::Measure::Axisymmetric, &keep, &|x, r, u, g| {
        g[0] * g[0] + g[1] * g[1] - lambda * weight(x, r) * u * u
    });
    let mut slab = 0.0;
    if t - c > 1e-14 {
        let rx = Rule::new(8, c, t);
        let rr = Rule::new(32, 0.0, eps);
        for (&x, &wx) in rx.nodes.iter().zip(&rx.weights) {
            for (&r, &wr) in rr.nodes.iter().zip(&rr.weights) {
                let (_, g) = field.eval_grad(x, r)?;
                slab += wx * wr * 2.0 * PI * r * (g[0] * g[0] + g[1] * g[1]);
            }
        }
    }
    Ok(bulk + slab)
}

/// 𝒩(t) = ε·E(t)/H^c(t) at each section, with E the energy left of the section.
pub fn frequency_channel(
    field: &crate::fem::Field,
    weight: &dyn Fn(f64, f64) -> f64,
    lambda: f64,
    eps: f64,
    t_list: &[f64],
    mode: &crate::cross_section::CrossSectionMode,
) -> Result<FrequencyTrace> {
    let tube = field.space.mesh.geometry.tube.ok_or_else(|| Error::Config("mesh has no tube".into()))?;
    let (mut d, mut h, mut n) = (Vec::new(), Vec::new(), Vec::new());
    for &t in t_list {
        let e = energy_left_of(field, weight, lambda, t)?;
        let (_, hc) = crate::channel_mode::htilde(&|x, r| field.eval(x, r), t, eps, mode, tube)?;
        if !(hc > 0.0) {
            return Err(Error::Degenerate(format!("section mass vanishes at t={t}")));
        }
        d.push(eps * e);
        h.push(hc);
        n.push(eps * e / hc);
    }
    Ok(FrequencyTrace { context: format!("channel eps={eps}"), lambda, radii: t_list.to_vec(), d, h, n })
}
