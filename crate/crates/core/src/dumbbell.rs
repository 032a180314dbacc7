//! Weighted eigenpair on the dumbbell and recovery of its exponentially small
//! left-side values.

use std::sync::Arc;

use crate::elliptic::{eigen_smallest, refine_eigenpair, Problem, WeightModel};
use crate::error::{Error, Result};
use crate::fem::{integrate_field, mask, Field, Measure, Space};
use crate::mesh::{build_dumbbell_mesh, MeshConfig, Tag};
use crate::sparse::{Csr, Factor};

#[derive(Debug, Clone)]
pub struct DumbbellSolution {
    pub eps: f64,
    pub lambda: f64,
    /// Relative residual of the refined pair.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Global eigenvector, K-normalized and oriented.
    pub global: Field,
    /// Same vector with the part left of the cuts re-solved from the cut data.
    pub recovered: Field,
    pub cuts: Vec<f64>,
    pub ndof: usize,
}

/// Axial coordinates of the tube's mesh columns, ascending.
pub fn tube_columns(space: &Space) -> Vec<f64> {
    let mesh = &space.mesh;
    let [lo, hi] = match mesh.geometry.tube {
        Some(t) => t,
        None => return Vec::new(),
    };
    let mut xs: Vec<f64> = mesh.vertices.iter().filter(|v| v[0] > lo && v[0] < hi).map(|v| v[0]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    xs
}

/// Columns nearest to `first`, `first − spacing`, … down to `last`.
pub fn cut_columns(columns: &[f64], first: f64, spacing: f64, last: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut target = first;
    while target >= last - 1e-12 {
        if let Some(&c) = columns.iter().min_by(|a, b| (*a - target).abs().total_cmp(&(*b - target).abs())) {
            if out.last().is_none_or(|&p| c < p - 1e-12) {
                out.push(c);
            }
        }
        target -= spacing;
    }
    out
}

/// Re-solves (K − λM)u = 0 on {x₁ < t} with u given on the column x₁ = t,
/// successively for each cut (descending). Values right of the first cut are
/// kept. The error of each solve is relative to the data on its cut, so the
/// small left values are resolved a few decades at a time.
pub fn recover_left(prob: &Problem, lambda: f64, values: &[f64], cuts: &[f64]) -> Result<Vec<f64>> {
    let space = &prob.space;
    let op: Csr = prob.k_full.axpby(1.0, &prob.m_full, -lambda);
    let mut is_free = vec![false; space.ndof()];
    for &i in &prob.free {
        is_free[i] = true;
    }
    let mut u = values.to_vec();
    for &t in cuts {
        let tol = 1e-9;
        let inner: Vec<usize> = (0..space.ndof()).filter(|&i| is_free[i] && space.coords[i][0] < t - tol).collect();
        let bnd: Vec<usize> = (0..space.ndof()).filter(|&i| (space.coords[i][0] - t).abs() <= tol).collect();
        if inner.is_empty() || bnd.is_empty() {
            return Err(Error::EmptyRegion(format!("no degrees of freedom left of the cut at {t}")));
        }
        let ub: Vec<f64> = bnd.iter().map(|&i| u[i]).collect();
        let rhs: Vec<f64> = op.block_matvec(&inner, &bnd, &ub).iter().map(|x| -x).collect();
        let a = op.principal(&inner);
        let fac = Factor::cholesky(&a).map_err(|_| Error::SpectralGap { lambda })?;
        let sol = fac.solve(&rhs);
        for (k, &i) in inner.iter().enumerate() {
            u[i] = sol[k];
        }
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DumbbellConfig {
    pub mesh: MeshConfig,
    pub weight: WeightModel,
    pub eigen_tol: f64,
    pub refine_steps: usize,
    /// First cut position and spacing in units of ε.
    pub first_cut: f64,
    pub cut_spacing: f64,
    pub last_cut: f64,
}

impl DumbbellConfig {
    pub fn new(mesh: MeshConfig, weight: WeightModel) -> Self {
        DumbbellConfig { mesh, weight, eigen_tol: 1e-12, refine_steps: 3, first_cut: 0.9, cut_spacing: 3.0, last_cut: 0.0 }
    }
}

/// Lowest eigenpair on the dumbbell, oriented so that ∫_{D⁺ ∩ supp p} u u₀ > 0.
pub fn solve_dumbbell(cfg: &DumbbellConfig, u0: &dyn Fn(f64, f64) -> Result<f64>) -> Result<DumbbellSolution> {
    let eps = cfg.mesh.eps;
    let mesh = Arc::new(build_dumbbell_mesh(&cfg.mesh)?);
    let space = Arc::new(Space::new(mesh, cfg.mesh.order)?);
    let prob = Problem::assemble(space.clone(), &cfg.weight, Measure::Axisymmetric, mask(&[Tag::DirichletWall, Tag::Truncation]));
    let raw = eigen_smallest(&prob.k, &prob.m, 1, cfg.eigen_tol)?.remove(0);
    let refined = refine_eigenpair(&prob.k, &prob.m, &raw, cfg.refine_steps)?;
    let lambda = refined.pair.lambda;
    let mut values = prob.expand(&refined.pair.vector);

    let field = Field::new(space.clone(), values.clone());
    let w = cfg.weight;
    let err = std::cell::RefCell::new(None);
    let mesh = &space.mesh;
    let right = |t: usize| mesh.triangles[t].iter().all(|&v| mesh.vertices[v][0] >= 1.0);
    let s = integrate_field(&field, Measure::Axisymmetric, &right, &|x, r, u, _| {
        if w.eval(x, r) <= 0.0 {
            return 0.0;
        }
        match u0(x, r) {
            Ok(v) => u * v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    });
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    if s == 0.0 {
        return Err(Error::Degenerate("dumbbell eigenfunction orthogonal to the reference".into()));
    }
    if s < 0.0 {
        values.iter_mut().for_each(|v| *v = -*v);
    }
    let global = Field::new(space.clone(), values.clone());
    let cols = tube_columns(&space);
    let cuts = cut_columns(&cols, cfg.first_cut, cfg.cut_spacing * eps, cfg.last_cut.max(cols[0]));
    let rec = recover_left(&prob, lambda, &values, &cuts)?;
    Ok(DumbbellSolution {
        eps,
        lambda,
        residual: refined.pair.residual,
        residual_history: refined.residual_history,
        global,
        recovered: Field::new(space.clone(), rec),
        cuts,
        ndof: space.ndof(),
    })
}
