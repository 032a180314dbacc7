//! Mode algebra in the tube: section projections, the two-exponential and
//! spherical representations, and sign/exponent/mantissa amplitudes that
//! carry e^{±√λ₁/ε} without overflow.

use std::cmp::Ordering;
use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::cross_section::{section_integral, CrossSectionMode, Hemisphere, SphereMode, DEFAULT_ORDER};
use crate::error::{Error, Result};

/// sign · mantissa · e^{exponent}, mantissa ∈ [1, e), integer-valued exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledAmplitude {
    pub sign: i8,
    pub exponent: f64,
    pub mantissa: f64,
}

impl ScaledAmplitude {
    pub const ZERO: ScaledAmplitude = ScaledAmplitude { sign: 0, exponent: 0.0, mantissa: 0.0 };
    pub const ONE: ScaledAmplitude = ScaledAmplitude { sign: 1, exponent: 0.0, mantissa: 1.0 };

    fn normalized(sign: i8, exponent: f64, mantissa: f64) -> Self {
        if sign == 0 || mantissa == 0.0 || !mantissa.is_finite() {
            return Self::ZERO;
        }
        let mut e = exponent;
        let mut m = mantissa;
        // mantissas arrive within a few factors of e of the target range
        let shift = m.ln().floor();
        if shift != 0.0 && !(1.0..E).contains(&m) {
            m *= (-shift).exp();
            e += shift;
        }
        while m >= E {
            m /= E;
            e += 1.0;
        }
        while m < 1.0 {
            m *= E;
            e -= 1.0;
        }
        ScaledAmplitude { sign, exponent: e, mantissa: m }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            return Self::ZERO;
        }
        Self::normalized(if x > 0.0 { 1 } else { -1 }, 0.0, x.abs())
    }

    /// e^x.
    pub fn exp(x: f64) -> Self {
        let e = x.floor();
        Self::normalized(1, e, (x - e).exp())
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// ln|v|.
    pub fn ln_abs(&self) -> f64 {
        if self.sign == 0 {
            f64::NEG_INFINITY
        } else {
            self.exponent + self.mantissa.ln()
        }
    }

    /// Raw value; saturates to ±∞ or 0 outside the double range.
    pub fn to_f64(&self) -> f64 {
        if self.sign == 0 {
            return 0.0;
        }
        self.sign as f64 * self.mantissa * self.exponent.exp()
    }

    /// Raw value, refusing magnitudes outside e^{±600}.
    pub fn try_to_f64(&self) -> Result<f64> {
        if self.sign != 0 && self.exponent.abs() > 600.0 {
            return Err(Error::Degenerate(format!("amplitude e^{} outside double range", self.exponent)));
        }
        Ok(self.to_f64())
    }

    pub fn mul(&self, o: &Self) -> Self {
        if self.sign == 0 || o.sign == 0 {
            return Self::ZERO;
        }
        Self::normalized(self.sign * o.sign, self.exponent + o.exponent, self.mantissa * o.mantissa)
    }

    pub fn div(&self, o: &Self) -> Self {
        assert!(o.sign != 0, "division by a zero amplitude");
        if self.sign == 0 {
            return Self::ZERO;
        }
        Self::normalized(self.sign * o.sign, self.exponent - o.exponent, self.mantissa / o.mantissa)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.mul(&Self::from_f64(c))
    }

    pub fn neg(&self) -> Self {
        ScaledAmplitude { sign: -self.sign, ..*self }
    }

    pub fn abs(&self) -> Self {
        ScaledAmplitude { sign: self.sign.abs(), ..*self }
    }

    pub fn sqrt(&self) -> Self {
        assert!(self.sign >= 0, "square root of a negative amplitude");
        if self.sign == 0 {
            return Self::ZERO;
        }
        let half = 0.5 * self.exponent;
        let e = half.floor();
        Self::normalized(1, e, self.mantissa.sqrt() * (half - e).exp())
    }

    pub fn add(&self, o: &Self) -> Self {
        if self.sign == 0 {
            return *o;
        }
        if o.sign == 0 {
            return *self;
        }
        let (big, small) = if self.exponent >= o.exponent { (self, o) } else { (o, self) };
        let d = small.exponent - big.exponent;
        let v = big.sign as f64 * big.mantissa + small.sign as f64 * small.mantissa * d.exp();
        if v == 0.0 {
            return Self::ZERO;
        }
        Self::normalized(if v > 0.0 { 1 } else { -1 }, big.exponent, v.abs())
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn cmp_abs(&self, o: &Self) -> Ordering {
        self.ln_abs().total_cmp(&o.ln_abs())
    }
}

/// Two-exponential fit A e^{κ(t−1)/ε} + B e^{−κ(t−1)/ε} on a tube window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeFit {
    pub eps: f64,
    pub kappa: f64,
    pub a: ScaledAmplitude,
    pub b: ScaledAmplitude,
    pub c: ScaledAmplitude,
    pub window: [f64; 2],
    pub residual: f64,
    pub b_resolved: bool,
    pub flagged: bool,
}

impl ModeFit {
    /// Replaces B (and C = −2κB/ε with it).
    pub fn with_b(&self, b: ScaledAmplitude, resolved: bool) -> ModeFit {
        ModeFit { b, c: c_from_b(&b, self.kappa, self.eps), b_resolved: resolved, ..self.clone() }
    }
}

pub fn c_from_b(b: &ScaledAmplitude, kappa: f64, eps: f64) -> ScaledAmplitude {
    b.scale(-2.0 * kappa / eps)
}

pub const DEFAULT_FIT_BOUND: f64 = 1e-6;
const MAX_CONDITION: f64 = 1e12;

/// 2-column least squares via normal equations on unit-scaled columns.
fn lsq2(g1: &[f64], g2: &[f64], y: &[f64]) -> ([f64; 2], [f64; 2], f64, f64) {
    let n1 = g1.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n2 = g2.iter().map(|x| x * x).sum::<f64>().sqrt();
    let a11 = 1.0;
    let a22 = 1.0;
    let a12: f64 = g1.iter().zip(g2).map(|(a, b)| a * b).sum::<f64>() / (n1 * n2);
    let b1: f64 = g1.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n1;
    let b2: f64 = g2.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n2;
    let det = a11 * a22 - a12 * a12;
    let x1 = (a22 * b1 - a12 * b2) / det;
    let x2 = (a11 * b2 - a12 * b1) / det;
    let c1 = x1 / n1;
    let c2 = x2 / n2;
    let rss: f64 = (0..y.len()).map(|i| (y[i] - c1 * g1[i] - c2 * g2[i]).powi(2)).sum();
    let dof = (y.len() as f64 - 2.0).max(1.0);
    let sigma2 = rss / dof;
    let se = [(sigma2 * a22 / det).sqrt() / n1, (sigma2 * a11 / det).sqrt() / n2];
    let cond = (1.0 + a12.abs()) / (1.0 - a12.abs()).max(1e-300);
    ([c1, c2], se, rss.sqrt(), cond)
}

/// Fits φ(t) = A e^{κ(t−1)/ε} + B e^{−κ(t−1)/ε} on samples (t, φ).
pub fn fit_channel_mode(samples: &[(f64, f64)], eps: f64, kappa: f64) -> Result<ModeFit> {
    if samples.len() < 4 {
        return Err(Error::Config("mode fit needs at least 4 samples".into()));
    }
    let lo = samples.iter().map(|s| s.0).fold(f64::MAX, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(f64::MIN, f64::max);
    if hi - lo < 0.2 * eps.min(1.0) - 1e-12 || !(lo >= 0.0 && hi <= 1.0) {
        return Err(Error::Config(format!("fit window [{lo}, {hi}] too narrow or outside the tube")));
    }
    let k = kappa / eps;
    let g1: Vec<f64> = samples.iter().map(|s| (k * (s.0 - hi)).exp()).collect();
    let g2: Vec<f64> = samples.iter().map(|s| (-k * (s.0 - lo)).exp()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (c, se, res, cond) = lsq2(&g1, &g2, &y);
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let a = ScaledAmplitude::from_f64(c[0]).mul(&ScaledAmplitude::exp(k * (1.0 - hi)));
    let resolved = cond < MAX_CONDITION && c[1].abs() > 3.0 * se[1] && c[1].abs() > 1e-13 * scale;
    let b = if resolved {
        ScaledAmplitude::from_f64(c[1]).mul(&ScaledAmplitude::exp(-k * (1.0 - lo)))
    } else {
        ScaledAmplitude::ZERO
    };
    let residual = res / (scale * (y.len() as f64).sqrt()).max(1e-300);
    Ok(ModeFit {
        eps,
        kappa,
        a,
        b,
        c: c_from_b(&b, kappa, eps),
        window: [lo, hi],
        residual,
        b_resolved: resolved,
        flagged: residual > DEFAULT_FIT_BOUND,
    })
}

/// Fit of C from the derivative form φ′ − (κ/ε)φ = C e^{−κ(t−1)/ε}.
/// Samples are (t, φ, φ′); returns C and its relative uncertainty, the
/// standard error plus the derivative bias read off the growing term.
pub fn fit_derivative_c(samples: &[(f64, f64, f64)], eps: f64, kappa: f64) -> Result<(ScaledAmplitude, f64)> {
    if samples.len() < 3 {
        return Err(Error::Config("derivative fit needs at least 3 samples".into()));
    }
    let k = kappa / eps;
    let lo = samples.iter().map(|s| s.0).fold(f64::MAX, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(f64::MIN, f64::max);
    // y = C e^{−κ(t−1)/ε} plus a growing term that absorbs gradient bias on the A mode
    let g1: Vec<f64> = samples.iter().map(|s| (-k * (s.0 - lo)).exp()).collect();
    let g2: Vec<f64> = samples.iter().map(|s| (k * (s.0 - hi)).exp()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.2 - k * s.1).collect();
    let (c, se, _, _) = lsq2(&g1, &g2, &y);
    if c[0] == 0.0 {
        return Err(Error::Degenerate("derivative fit gave C = 0".into()));
    }
    // a relative derivative bias δ shows up as D = δκφ(hi)/ε and shifts C by δ/2
    let phi_hi = samples.iter().find(|s| s.0 == hi).map_or(0.0, |s| s.1);
    let bias = if phi_hi != 0.0 { 0.5 * (c[1] / (k * phi_hi)).abs() } else { 0.0 };
    let cval = ScaledAmplitude::from_f64(c[0]).mul(&ScaledAmplitude::exp(-k * (1.0 - lo)));
    Ok((cval, se[0] / c[0].abs() + bias))
}

/// A e^{κ(t−1)/ε} + B e^{−κ(t−1)/ε} in scaled arithmetic.
pub fn propagate(fit: &ModeFit, t: f64) -> ScaledAmplitude {
    let k = fit.kappa / fit.eps;
    let up = fit.a.mul(&ScaledAmplitude::exp(k * (t - 1.0)));
    let down = fit.b.mul(&ScaledAmplitude::exp(-k * (t - 1.0)));
    up.add(&down)
}

/// φ⁻(r) = α r + β r^{1−N}, d = −Nβ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalFit {
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    pub d: f64,
    pub radii: Vec<f64>,
    pub residual: f64,
}

pub fn spherical_fit(samples: &[(f64, f64)], n: usize, eps: f64) -> Result<SphericalFit> {
    if samples.len() < 2 {
        return Err(Error::Config("spherical fit needs at least 2 samples".into()));
    }
    let p = 1 - n as i32;
    let g1: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let g2: Vec<f64> = samples.iter().map(|s| s.0.powi(p)).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (c, _, res, _) = lsq2(&g1, &g2, &y);
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(SphericalFit {
        eps,
        alpha: c[0],
        beta: c[1],
        d: -(n as f64) * c[1],
        radii: g1,
        residual: res / (scale * (y.len() as f64).sqrt()).max(1e-300),
    })
}

/// H̃(r) = ∫_Σ u²(r, εx′)dx′ and H^c(r) = ε^{N−1}H̃(r).
pub fn htilde(
    field: &dyn Fn(f64, f64) -> Result<f64>,
    r: f64,
    eps: f64,
    mode: &CrossSectionMode,
    tube: [f64; 2],
) -> Result<(f64, f64)> {
    if r < tube[0] || r > tube[1] {
        return Err(Error::OutsideTube { t: r, lo: tube[0], hi: tube[1] });
    }
    let h = section_integral(|s| Ok(field(r, eps * s)?.powi(2)), mode)?;
    Ok((h, eps.powi(mode.dimension as i32 - 1) * h))
}

/// H⁻(t) = t^{1−N}∫_{Γ⁻_t} u² dσ = ∫_{S⁻} u(tθ)² dσ.
pub fn hminus(field: &dyn Fn(f64, f64) -> Result<f64>, t: f64) -> Result<f64> {
    let sm = SphereMode::new(3, Hemisphere::Minus);
    sm.integrate(DEFAULT_ORDER, |phi| {
        let (s, c) = phi.sin_cos();
        Ok::<f64, Error>(field(t * c, t * s)?.powi(2))
    })
}
