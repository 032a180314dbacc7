//! Lagrange P1/P2 spaces on meridian meshes, point location and assembly.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{MeridianMesh, Tag};
use crate::quad::triangle_rule;
use crate::sparse::Csr;

/// Volume measure of the meridian reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// 2πρ dρ dx₁ (three-dimensional axisymmetric fields).
    Axisymmetric,
    /// dx dy.
    Planar,
}

impl Measure {
    pub fn density(self, rho: f64) -> f64 {
        match self {
            Measure::Axisymmetric => 2.0 * PI * rho,
            Measure::Planar => 1.0,
        }
    }
}

/// Values and reference gradients of the local basis at (ξ, η).
pub fn basis(order: usize, xi: f64, eta: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
    let l = [1.0 - xi - eta, xi, eta];
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    if order == 1 {
        return (l.to_vec(), dl.to_vec());
    }
    let mut v = Vec::with_capacity(6);
    let mut g = Vec::with_capacity(6);
    for i in 0..3 {
        v.push(l[i] * (2.0 * l[i] - 1.0));
        let c = 4.0 * l[i] - 1.0;
        g.push([c * dl[i][0], c * dl[i][1]]);
    }
    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
        v.push(4.0 * l[i] * l[j]);
        g.push([
            4.0 * (dl[i][0] * l[j] + l[i] * dl[j][0]),
            4.0 * (dl[i][1] * l[j] + l[i] * dl[j][1]),
        ]);
    }
    (v, g)
}

#[derive(Debug, Clone)]
struct BvhNode {
    lo: [f64; 2],
    hi: [f64; 2],
    /// Children for inner nodes; element range for leaves.
    left: usize,
    right: usize,
    leaf: bool,
}

/// Bounding-volume hierarchy over triangles.
#[derive(Debug, Clone)]
pub struct Locator {
    nodes: Vec<BvhNode>,
    order: Vec<usize>,
}

impl Locator {
    pub fn new(mesh: &MeridianMesh) -> Self {
        let boxes: Vec<([f64; 2], [f64; 2])> = mesh
            .triangles
            .iter()
            .map(|t| {
                let p = t.map(|i| mesh.vertices[i]);
                (
                    [p[0][0].min(p[1][0]).min(p[2][0]), p[0][1].min(p[1][1]).min(p[2][1])],
                    [p[0][0].max(p[1][0]).max(p[2][0]), p[0][1].max(p[1][1]).max(p[2][1])],
                )
            })
            .collect();
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        let mut nodes = Vec::new();
        build_bvh(&boxes, &mut order, 0, boxes.len(), &mut nodes);
        Locator { nodes, order }
    }

    fn candidates(&self, p: [f64; 2], tol: f64, out: &mut Vec<usize>) {
        let mut stack = vec![0usize];
        while let Some(k) = stack.pop() {
            let n = &self.nodes[k];
            if p[0] < n.lo[0] - tol || p[0] > n.hi[0] + tol || p[1] < n.lo[1] - tol || p[1] > n.hi[1] + tol {
                continue;
            }
            if n.leaf {
                out.extend_from_slice(&self.order[n.left..n.right]);
            } else {
                stack.push(n.left);
                stack.push(n.right);
            }
        }
    }
}

fn build_bvh(
    boxes: &[([f64; 2], [f64; 2])],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<BvhNode>,
) -> usize {
    let mut lo = [f64::MAX; 2];
    let mut hi = [f64::MIN; 2];
    for &i in &order[start..end] {
        for d in 0..2 {
            lo[d] = lo[d].min(boxes[i].0[d]);
            hi[d] = hi[d].max(boxes[i].1[d]);
        }
    }
    let id = nodes.len();
    nodes.push(BvhNode { lo, hi, left: start, right: end, leaf: true });
    if end - start <= 4 {
        return id;
    }
    let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
    let mid = (start + end) / 2;
    let c = |i: usize| boxes[i].0[axis] + boxes[i].1[axis];
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| c(a).total_cmp(&c(b)));
    let l = build_bvh(boxes, order, start, mid, nodes);
    let r = build_bvh(boxes, order, mid, end, nodes);
    nodes[id] = BvhNode { lo, hi, left: l, right: r, leaf: false };
    id
}

/// Lagrange finite element space over a meridian mesh.
#[derive(Debug, Clone)]
pub struct Space {
    pub mesh: Arc<MeridianMesh>,
    pub order: usize,
    pub nloc: usize,
    /// Element-major local-to-global map, `nloc` entries per triangle.
    pub dofs: Vec<usize>,
    pub coords: Vec<[f64; 2]>,
    /// Bitmask of boundary tags carried by each dof.
    pub tags: Vec<u8>,
    locator: Locator,
}

impl Space {
    pub fn new(mesh: Arc<MeridianMesh>, order: usize) -> Result<Self> {
        if order != 1 && order != 2 {
            return Err(Error::Config(format!("element order {order} not supported")));
        }
        let nloc = if order == 1 { 3 } else { 6 };
        let mut coords = mesh.vertices.clone();
        let mut dofs = Vec::with_capacity(nloc * mesh.triangles.len());
        let mut edge_dof: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &mesh.triangles {
            dofs.extend_from_slice(t);
            if order == 2 {
                for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                    let (u, v) = (t[i], t[j]);
                    let id = *edge_dof.entry((u.min(v), u.max(v))).or_insert_with(|| {
                        let (p, q) = (mesh.vertices[u], mesh.vertices[v]);
                        let r = if p[1] == 0.0 && q[1] == 0.0 { 0.0 } else { 0.5 * (p[1] + q[1]) };
                        coords.push([0.5 * (p[0] + q[0]), r]);
                        coords.len() - 1
                    });
                    dofs.push(id);
                }
            }
        }
        let mut tags = vec![0u8; coords.len()];
        for e in &mesh.edges {
            tags[e.a] |= e.tag.bit();
            tags[e.b] |= e.tag.bit();
            if order == 2 {
                let id = edge_dof[&(e.a.min(e.b), e.a.max(e.b))];
                tags[id] |= e.tag.bit();
            }
        }
        let locator = Locator::new(&mesh);
        Ok(Space { mesh, order, nloc, dofs, coords, tags, locator })
    }

    pub fn ndof(&self) -> usize {
        self.coords.len()
    }

    pub fn elem(&self, t: usize) -> &[usize] {
        &self.dofs[t * self.nloc..(t + 1) * self.nloc]
    }

    /// Affine map data (origin, Jacobian, inverse transpose, |det|) of triangle t.
    pub fn geometry(&self, t: usize) -> ([f64; 2], [[f64; 2]; 2], [[f64; 2]; 2], f64) {
        let [a, b, c] = self.mesh.triangles[t].map(|i| self.mesh.vertices[i]);
        let j = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // inverse transpose
        let it = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
        (a, j, it, det.abs())
    }

    /// Element containing p with its reference coordinates.
    pub fn locate(&self, x1: f64, rho: f64) -> Result<(usize, f64, f64)> {
        let p = [x1, rho];
        let mut cand = Vec::new();
        let scale = 1.0 + x1.abs() + rho.abs();
        self.locator.candidates(p, 1e-12 * scale, &mut cand);
        let mut best = (f64::MAX, 0usize, 0.0, 0.0);
        for &t in &cand {
            let (o, _, it, _) = self.geometry(t);
            let d = [p[0] - o[0], p[1] - o[1]];
            // (ξ, η) = J^{-1} d, J^{-1} = itᵀ
            let xi = it[0][0] * d[0] + it[1][0] * d[1];
            let eta = it[0][1] * d[0] + it[1][1] * d[1];
            let out = (-xi).max(-eta).max(xi + eta - 1.0);
            if out <= 1e-10 {
                return Ok((t, xi, eta));
            }
            if out < best.0 {
                best = (out, t, xi, eta);
            }
        }
        if best.0 < 1e-7 {
            return Ok((best.1, best.2, best.3));
        }
        Err(Error::OutsideMesh { x1, rho })
    }

    /// Nodal interpolant of an evaluator.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.coords.iter().map(|c| f(c[0], c[1])).collect()
    }

    pub fn has_tag(&self, dof: usize, mask: u8) -> bool {
        self.tags[dof] & mask != 0
    }
}

/// A finite element function.
#[derive(Debug, Clone)]
pub struct Field {
    pub space: Arc<Space>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(space: Arc<Space>, values: Vec<f64>) -> Self {
        Field { space, values }
    }

    pub fn eval(&self, x1: f64, rho: f64) -> Result<f64> {
        let (t, xi, eta) = self.space.locate(x1, rho)?;
        let (v, _) = basis(self.space.order, xi, eta);
        let d = self.space.elem(t);
        Ok(d.iter().zip(&v).map(|(&i, &b)| self.values[i] * b).sum())
    }

    /// Value and (∂₁, ∂ρ) gradient.
    pub fn eval_grad(&self, x1: f64, rho: f64) -> Result<(f64, [f64; 2])> {
        let (t, xi, eta) = self.space.locate(x1, rho)?;
        let (_, _, it, _) = self.space.geometry(t);
        let (v, g) = basis(self.space.order, xi, eta);
        let d = self.space.elem(t);
        let mut val = 0.0;
        let mut gr = [0.0; 2];
        for k in 0..d.len() {
            let u = self.values[d[k]];
            val += u * v[k];
            gr[0] += u * (it[0][0] * g[k][0] + it[0][1] * g[k][1]);
            gr[1] += u * (it[1][0] * g[k][0] + it[1][1] * g[k][1]);
        }
        Ok((val, gr))
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field { space: self.space.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }
}

/// Quadrature degree used for all element integrals (collapsed 5×5 rule).
pub const QUAD_POINTS: usize = 5;

/// Precomputed element quadrature.
pub struct ElementRule {
    pub points: Vec<(f64, f64, f64)>,
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
}

impl ElementRule {
    pub fn new(order: usize) -> Self {
        let points = triangle_rule(QUAD_POINTS);
        let mut values = Vec::new();
        let mut grads = Vec::new();
        for &(xi, eta, _) in &points {
            let (v, g) = basis(order, xi, eta);
            values.push(v);
            grads.push(g);
        }
        ElementRule { points, values, grads }
    }
}

/// Stiffness ∫∇u·∇v dμ and weighted mass ∫p u v dμ over all dofs.
pub fn assemble_pair(space: &Space, weight: &dyn Fn(f64, f64) -> f64, measure: Measure) -> (Csr, Csr) {
    let rule = ElementRule::new(space.order);
    let nloc = space.nloc;
    let nt = space.mesh.triangles.len();
    let mut tk = Vec::with_capacity(nt * nloc * nloc);
    let mut tm = Vec::new();
    let mut ke = vec![0.0; nloc * nloc];
    let mut me = vec![0.0; nloc * nloc];
    for t in 0..nt {
        let (o, j, it, det) = space.geometry(t);
        ke.iter_mut().for_each(|v| *v = 0.0);
        me.iter_mut().for_each(|v| *v = 0.0);
        let mut any_weight = false;
        for (q, &(xi, eta, w)) in rule.points.iter().enumerate() {
            let x = o[0] + j[0][0] * xi + j[0][1] * eta;
            let r = o[1] + j[1][0] * xi + j[1][1] * eta;
            let dm = w * det * measure.density(r);
            let g: Vec<[f64; 2]> = rule.grads[q]
                .iter()
                .map(|g| [it[0][0] * g[0] + it[0][1] * g[1], it[1][0] * g[0] + it[1][1] * g[1]])
                .collect();
            let p = weight(x, r);
            if p != 0.0 {
                any_weight = true;
            }
            let v = &rule.values[q];
            for a in 0..nloc {
                for b in 0..nloc {
                    ke[a * nloc + b] += dm * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    if p != 0.0 {
                        me[a * nloc + b] += dm * p * v[a] * v[b];
                    }
                }
            }
        }
        let d = space.elem(t);
        for a in 0..nloc {
            for b in 0..nloc {
                // symmetric by construction: use the upper entry for both
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                tk.push((d[a], d[b], ke[lo * nloc + hi]));
                if any_weight {
                    tm.push((d[a], d[b], me[lo * nloc + hi]));
                }
            }
        }
    }
    let n = space.ndof();
    (Csr::from_triplets(n, tk), Csr::from_triplets(n, tm))
}

/// Load vector ∫ f v dμ.
pub fn assemble_load(space: &Space, f: &dyn Fn(f64, f64) -> f64, measure: Measure) -> Vec<f64> {
    let rule = ElementRule::new(space.order);
    let mut b = vec![0.0; space.ndof()];
    for t in 0..space.mesh.triangles.len() {
        let (o, j, _, det) = space.geometry(t);
        let d = space.elem(t);
        for (q, &(xi, eta, w)) in rule.points.iter().enumerate() {
            let x = o[0] + j[0][0] * xi + j[0][1] * eta;
            let r = o[1] + j[1][0] * xi + j[1][1] * eta;
            let fv = f(x, r);
            if fv == 0.0 {
                continue;
            }
            let dm = w * det * measure.density(r) * fv;
            for (a, &i) in d.iter().enumerate() {
                b[i] += dm * rule.values[q][a];
            }
        }
    }
    b
}

/// Element-quadrature integral of g(x₁, ρ, u, ∇u) over triangles selected by `keep`.
pub fn integrate_field(
    field: &Field,
    measure: Measure,
    keep: &dyn Fn(usize) -> bool,
    g: &dyn Fn(f64, f64, f64, [f64; 2]) -> f64,
) -> f64 {
    let space = &field.space;
    let rule = ElementRule::new(space.order);
    let mut s = 0.0;
    for t in 0..space.mesh.triangles.len() {
        if !keep(t) {
            continue;
        }
        let (o, j, it, det) = space.geometry(t);
        let d = space.elem(t);
        for (q, &(xi, eta, w)) in rule.points.iter().enumerate() {
            let x = o[0] + j[0][0] * xi + j[0][1] * eta;
            let r = o[1] + j[1][0] * xi + j[1][1] * eta;
            let mut u = 0.0;
            let mut gr = [0.0; 2];
            for (a, &i) in d.iter().enumerate() {
                let gv = rule.grads[q][a];
                u += field.values[i] * rule.values[q][a];
                gr[0] += field.values[i] * (it[0][0] * gv[0] + it[0][1] * gv[1]);
                gr[1] += field.values[i] * (it[1][0] * gv[0] + it[1][1] * gv[1]);
            }
            s += w * det * measure.density(r) * g(x, r, u, gr);
        }
    }
    s
}

/// Dofs carrying any tag of `mask` (Dirichlet) and the remaining free dofs.
pub fn split_dofs(space: &Space, mask: u8) -> (Vec<usize>, Vec<usize>) {
    let mut fixed = Vec::new();
    let mut free = Vec::new();
    for i in 0..space.ndof() {
        if space.has_tag(i, mask) {
            fixed.push(i);
        } else {
            free.push(i);
        }
    }
    (fixed, free)
}

/// Bitmask of a tag list.
pub fn mask(tags: &[Tag]) -> u8 {
    tags.iter().fold(0, |m, t| m | t.bit())
}
