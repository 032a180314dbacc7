//! Weighted elliptic problems on meridian meshes: assembly, Dirichlet solves,
//! the generalized eigenproblem −Δu = λ p u and eigenvector refinement.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_pair, split_dofs, Field, Measure, Space};
use crate::mesh::Tag;
use crate::sparse::{dot, norm, Csr, Factor};

/// Bump weight on the annuli 4 ≤ |x − e₁| ≤ 5 (x₁ > 1) and 4 ≤ |x| ≤ 5 (x₁ < 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightModel {
    pub a_plus: f64,
    pub a_minus: f64,
    pub inner: f64,
    pub outer: f64,
}

impl Default for WeightModel {
    fn default() -> Self {
        WeightModel { a_plus: 1.0, a_minus: 0.5, inner: 4.0, outer: 5.0 }
    }
}

impl WeightModel {
    pub fn zero() -> Self {
        WeightModel { a_plus: 0.0, a_minus: 0.0, ..Default::default() }
    }

    pub fn bump(&self, r: f64) -> f64 {
        let mid = 0.5 * (self.inner + self.outer);
        let s = 2.0 * (r - mid) / (self.outer - self.inner);
        if s.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - s * s).powi(3)
        }
    }

    pub fn eval(&self, x1: f64, rho: f64) -> f64 {
        if x1 > 1.0 {
            self.a_plus * self.bump((x1 - 1.0).hypot(rho))
        } else if x1 < 0.0 {
            self.a_minus * self.bump(x1.hypot(rho))
        } else {
            0.0
        }
    }

    /// Weight restricted to the left half-space.
    pub fn minus_only(&self) -> WeightModel {
        WeightModel { a_plus: 0.0, ..*self }
    }

    /// Weight restricted to the right half-space.
    pub fn plus_only(&self) -> WeightModel {
        WeightModel { a_minus: 0.0, ..*self }
    }
}

/// Assembled system with Dirichlet elimination.
#[derive(Debug, Clone)]
pub struct Problem {
    pub space: Arc<Space>,
    pub measure: Measure,
    pub k_full: Csr,
    pub m_full: Csr,
    pub fixed: Vec<usize>,
    pub free: Vec<usize>,
    pub k: Csr,
    pub m: Csr,
}

impl Problem {
    pub fn assemble(space: Arc<Space>, weight: &WeightModel, measure: Measure, dirichlet: u8) -> Self {
        let w = |x: f64, r: f64| weight.eval(x, r);
        let (k_full, m_full) = assemble_pair(&space, &w, measure);
        Self::from_matrices(space, measure, k_full, m_full, dirichlet)
    }

    pub fn from_matrices(space: Arc<Space>, measure: Measure, k_full: Csr, m_full: Csr, dirichlet: u8) -> Self {
        let (fixed, free) = split_dofs(&space, dirichlet);
        let k = k_full.principal(&free);
        let m = m_full.principal(&free);
        Problem { space, measure, k_full, m_full, fixed, free, k, m }
    }

    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.space.ndof()];
        for (k, &i) in self.free.iter().enumerate() {
            u[i] = reduced[k];
        }
        u
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }
}

/// Result of a boundary value solve.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub field: Field,
    pub dirichlet_tags: Vec<Tag>,
    pub residual: f64,
}

/// Solves a(u, v) − shift·m_p(u, v) = ∫ f v with u = g on the Dirichlet tags.
pub fn solve_dirichlet(
    space: Arc<Space>,
    dirichlet: &[Tag],
    data: &dyn Fn(f64, f64) -> f64,
    rhs: Option<&dyn Fn(f64, f64) -> f64>,
    shift: Option<(f64, &WeightModel)>,
    measure: Measure,
) -> Result<FieldSolution> {
    let mask = crate::fem::mask(dirichlet);
    let weight = shift.map(|(_, w)| *w).unwrap_or_else(WeightModel::zero);
    let prob = Problem::assemble(space.clone(), &weight, measure, mask);
    let lambda = shift.map(|(l, _)| l).unwrap_or(0.0);
    solve_assembled(&prob, dirichlet, data, rhs, lambda)
}

/// Dirichlet solve on an already assembled problem with operator K − λ M_p.
pub fn solve_assembled(
    prob: &Problem,
    dirichlet: &[Tag],
    data: &dyn Fn(f64, f64) -> f64,
    rhs: Option<&dyn Fn(f64, f64) -> f64>,
    lambda: f64,
) -> Result<FieldSolution> {
    let space = &prob.space;
    let n = space.ndof();
    let mut g = vec![0.0; n];
    for &i in &prob.fixed {
        let c = space.coords[i];
        g[i] = data(c[0], c[1]);
    }
    let load = match rhs {
        Some(f) => assemble_load(space, f, prob.measure),
        None => vec![0.0; n],
    };
    let op_full = if lambda != 0.0 { prob.k_full.axpby(1.0, &prob.m_full, -lambda) } else { prob.k_full.clone() };
    let op = op_full.principal(&prob.free);
    let coupling = op_full.block_matvec(&prob.free, &prob.fixed, &prob.fixed.iter().map(|&i| g[i]).collect::<Vec<_>>());
    let b: Vec<f64> = prob.free.iter().zip(&coupling).map(|(&i, c)| load[i] - c).collect();
    if prob.free.is_empty() {
        return Ok(FieldSolution { field: Field::new(space.clone(), g), dirichlet_tags: dirichlet.to_vec(), residual: 0.0 });
    }
    let fac = match Factor::cholesky(&op) {
        Ok(f) => f,
        Err(e) if lambda != 0.0 => {
            return Err(if matches!(e, Error::Factorization(_)) { Error::SpectralGap { lambda } } else { e })
        }
        Err(e) => return Err(e),
    };
    let x = fac.solve(&b);
    let r = op.matvec(&x);
    let res = norm(&r.iter().zip(&b).map(|(a, c)| a - c).collect::<Vec<_>>()) / norm(&b).max(1e-300);
    let mut u = g;
    for (k, &i) in prob.free.iter().enumerate() {
        u[i] = x[k];
    }
    Ok(FieldSolution { field: Field::new(space.clone(), u), dirichlet_tags: dirichlet.to_vec(), residual: res })
}

/// An eigenpair of K u = λ M_p u.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    pub field: Field,
    pub residual: f64,
    /// +1 once oriented against a reference, 0 when unoriented.
    pub orientation: i8,
}

/// Reduced-space eigenpair returned by the Lanczos solver.
#[derive(Debug, Clone)]
pub struct RawPair {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

const MAX_LANCZOS: usize = 400;

/// The `count` smallest eigenpairs of K u = λ M u by Lanczos on K⁻¹M in the
/// K inner product. Vectors are K-orthonormal.
pub fn eigen_smallest(k: &Csr, m: &Csr, count: usize, tol: f64) -> Result<Vec<RawPair>> {
    let fac = Factor::cholesky(k)?;
    eigen_smallest_with(k, m, &fac, count, tol)
}

pub fn eigen_smallest_with(k: &Csr, m: &Csr, fac: &Factor, count: usize, tol: f64) -> Result<Vec<RawPair>> {
    let n = k.n;
    let rank_bound = (0..n).filter(|&i| m.row(i).any(|(j, v)| j == i && v != 0.0)).count();
    if rank_bound == 0 {
        return Err(Error::Eigen("weighted mass matrix is zero".into()));
    }
    if count == 0 || count > rank_bound {
        return Err(Error::Eigen(format!("requested {count} eigenpairs but rank(M_p) ≤ {rank_bound}")));
    }
    let k_norm = |v: &[f64]| dot(v, &k.matvec(v)).max(0.0).sqrt();
    let mut v = fac.solve(&m.matvec(&vec![1.0; n]));
    let nv = k_norm(&v);
    if !(nv > 0.0) {
        return Err(Error::Eigen("start vector vanishes".into()));
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kbasis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let max_it = MAX_LANCZOS.min(rank_bound).min(n);
    let mut ritz: Option<(Vec<f64>, Vec<Vec<f64>>)> = None;
    for j in 0..max_it {
        let kv = k.matvec(&v);
        let mv = m.matvec(&v);
        let mut w = fac.solve(&mv);
        alpha.push(dot(&v, &mv));
        basis.push(v);
        kbasis.push(kv);
        for _ in 0..2 {
            for (b, kb) in basis.iter().zip(&kbasis) {
                let c = dot(&w, kb);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = k_norm(&w);
        let steps = j + 1;
        let check = steps >= count && (steps % 5 == 0 || b < 1e-14 * alpha[0].abs() || steps == max_it);
        if check {
            let (theta, s) = tridiag_eigen(&alpha, &beta);
            let mut done = true;
            for i in 0..count.min(theta.len()) {
                let bound = b * s[i][steps - 1].abs();
                if bound > tol * theta[i].abs() {
                    done = false;
                }
            }
            if theta.len() < count {
                done = false;
            }
            ritz = Some((theta, s));
            if done || b < 1e-14 * alpha[0].abs() {
                break;
            }
        }
        if b < 1e-14 * alpha[0].abs() {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        v = w;
    }
    let (theta, s) = ritz.ok_or_else(|| Error::Eigen("Lanczos produced no Ritz values".into()))?;
    if theta.len() < count {
        return Err(Error::Eigen(format!("Krylov space exhausted with {} Ritz values", theta.len())));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut u = vec![0.0; n];
        for (c, b) in s[i].iter().zip(&basis) {
            u.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
        }
        let ku = k.matvec(&u);
        let mu = m.matvec(&u);
        let kk = dot(&u, &ku);
        let mm = dot(&u, &mu);
        if !(mm > 0.0) || !(theta[i] > 0.0) {
            return Err(Error::Eigen("Ritz vector with nonpositive weighted mass".into()));
        }
        let lambda = kk / mm;
        let sc = 1.0 / kk.sqrt();
        u.iter_mut().for_each(|x| *x *= sc);
        let r: Vec<f64> = ku.iter().zip(&mu).map(|(a, b)| sc * (a - lambda * b)).collect();
        let residual = norm(&r) / (sc * norm(&ku));
        if residual > tol.sqrt().max(1e-6) {
            return Err(Error::Eigen(format!("eigenpair {i} did not converge (residual {residual:.3e})")));
        }
        out.push(RawPair { lambda, vector: u, residual });
    }
    Ok(out)
}

/// Eigenvalues (descending) and eigenvectors of the symmetric tridiagonal matrix.
fn tridiag_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = alpha.len();
    let t = faer::Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let e = t.self_adjoint_eigen(faer::Side::Lower).expect("tridiagonal eigendecomposition");
    let vals = e.S();
    let vecs = e.U();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let theta = idx.iter().map(|&i| vals[i]).collect();
    let s = idx.iter().map(|&i| (0..m).map(|r| vecs[(r, i)]).collect()).collect();
    (theta, s)
}

/// Smallest eigenpairs of an assembled problem as fields.
pub fn eigen_problem(prob: &Problem, count: usize, tol: f64) -> Result<Vec<EigenPair>> {
    let raw = eigen_smallest(&prob.k, &prob.m, count, tol)?;
    Ok(raw
        .into_iter()
        .map(|p| EigenPair {
            lambda: p.lambda,
            field: Field::new(prob.space.clone(), prob.expand(&p.vector)),
            residual: p.residual,
            orientation: 0,
        })
        .collect())
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Σ terms with error-free transformations (sum and product errors carried).
fn compensated_dot(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for (a, x) in terms {
        let p = a * x;
        let pe = a.mul_add(x, -p);
        let (t, e) = two_sum(s, p);
        s = t;
        c += e + pe;
    }
    s + c
}

/// r = K u − λ M u with compensated accumulation.
pub fn compensated_residual(k: &Csr, m: &Csr, u: &[f64], lambda: f64) -> Vec<f64> {
    (0..k.n)
        .map(|i| {
            let kt = k.row(i).map(|(j, v)| (v, u[j]));
            let mt = m.row(i).map(|(j, v)| (-lambda * v, u[j]));
            let lm = m.row(i).map(|(j, v)| {
                // error of the product −λ·v itself
                let p = -lambda * v;
                ((-lambda).mul_add(v, -p), u[j])
            });
            compensated_dot(kt.chain(mt).chain(lm))
        })
        .collect()
}

/// Outcome of residual-correction refinement.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub pair: RawPair,
    /// Residual norms before each step and after the last one.
    pub residual_history: Vec<f64>,
    /// Final componentwise |r_i| / max|K u|.
    pub residual_profile: Vec<f64>,
}

/// Residual-correction inverse iteration: u ← u − (K − σM)⁻¹ r with r formed
/// in compensated arithmetic, σ just below λ, followed by K-normalization and
/// a Rayleigh-quotient update of λ.
pub fn refine_eigenpair(k: &Csr, m: &Csr, pair: &RawPair, steps: usize) -> Result<Refinement> {
    let sigma = pair.lambda * (1.0 - 1e-6);
    let op = k.axpby(1.0, m, -sigma);
    let fac = Factor::cholesky(&op).or_else(|_| Factor::lu(&op))?;
    let mut u = pair.vector.clone();
    let mut lambda = pair.lambda;
    let mut history = Vec::with_capacity(steps + 1);
    let scale = |u: &[f64]| k.matvec(u).iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut r = compensated_residual(k, m, &u, lambda);
    history.push(norm(&r) / norm(&k.matvec(&u)));
    let mut best = (history[0], u.clone(), lambda, r.clone());
    for _ in 0..steps {
        let d = fac.solve(&r);
        let mut next: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a - b).collect();
        let kn = dot(&next, &k.matvec(&next)).sqrt();
        next.iter_mut().for_each(|x| *x /= kn);
        let ku = k.matvec(&next);
        let mu = m.matvec(&next);
        lambda = rq(&next, &ku, &mu);
        u = next;
        r = compensated_residual(k, m, &u, lambda);
        let h = norm(&r) / norm(&ku);
        history.push(h);
        if h <= best.0 {
            best = (h, u.clone(), lambda, r.clone());
        }
    }
    // the reported pair is the best iterate, so the monitored residual never grows
    let (res, u, lambda, r) = best;
    let s = scale(&u);
    let profile = r.iter().map(|x| x.abs() / s).collect();
    Ok(Refinement { pair: RawPair { lambda, vector: u, residual: res }, residual_history: history, residual_profile: profile })
}

fn rq(u: &[f64], ku: &[f64], mu: &[f64]) -> f64 {
    compensated_dot(u.iter().copied().zip(ku.iter().copied()))
        / compensated_dot(u.iter().copied().zip(mu.iter().copied()))
}
