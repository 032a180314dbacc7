//! Meridian-plane triangulations of the dumbbell and of the profile domains.
//!
//! Each half-space is meshed as a tensor box around the junction plus an
//! O-grid out to a polygonal truncation arc whose nodes lie on the circle.
//! The tube is a structured block whose transverse lines are shared with
//! the boxes on either side.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    DirichletWall,
    Axis,
    Truncation,
    Inflow,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::DirichletWall, Tag::Axis, Tag::Truncation, Tag::Inflow];

    pub fn bit(self) -> u8 {
        match self {
            Tag::DirichletWall => 1,
            Tag::Axis => 2,
            Tag::Truncation => 4,
            Tag::Inflow => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::DirichletWall => "dirichlet_wall",
            Tag::Axis => "axis",
            Tag::Truncation => "truncation",
            Tag::Inflow => "inflow",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainKind {
    Dumbbell,
    PhiDomain,
    PhiHatDomain,
    HalfPlus,
    HalfMinus,
    /// Planar quarter of the unit disk with natural conditions on both straight sides.
    QuarterDisk,
    /// Straight tube of unit radius with both end faces tagged `inflow`.
    Tube,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Dumbbell => "dumbbell",
            DomainKind::PhiDomain => "phi",
            DomainKind::PhiHatDomain => "phi_hat",
            DomainKind::HalfPlus => "half_plus",
            DomainKind::HalfMinus => "half_minus",
            DomainKind::QuarterDisk => "quarter_disk",
            DomainKind::Tube => "tube",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        use DomainKind::*;
        [Dumbbell, PhiDomain, PhiHatDomain, HalfPlus, HalfMinus, QuarterDisk, Tube]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub tag: Tag,
}

/// A half-space {dir·(x₁ − center) > 0} truncated at distance r_out from (center, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub center: f64,
    pub dir: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Tube radius (0 when there is no tube).
    pub radius: f64,
    pub r_out: f64,
    pub tube: Option<[f64; 2]>,
    pub inflow: Option<f64>,
    pub sides: Vec<HalfSpace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    /// Target element size at the junction corners (clamped to radius/8).
    pub h0: f64,
    /// Geometric grading ratio toward the re-entrant corners.
    pub q: f64,
    /// Number of graded layers.
    pub levels: usize,
    pub r_out: f64,
    pub eps: f64,
    pub order: usize,
    /// Computational tube length for the profile domains.
    pub tube_length: f64,
    /// Half-size of the tensor box around each junction.
    pub box_half: f64,
    /// Element size cap away from the junctions.
    pub h_far: f64,
    /// Spacing growth factor between the near zone and the far field.
    pub growth: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            h0: 0.2,
            q: 0.5,
            levels: 8,
            r_out: 12.0,
            eps: 0.2,
            order: 1,
            tube_length: 10.0,
            box_half: 3.0,
            h_far: 0.125,
            growth: 1.15,
        }
    }
}

impl MeshConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad("grading ratio q must lie in (0, 1)");
        }
        if !(self.r_out > 6.0) {
            return bad("truncation radius must exceed 6 so the weight support is interior");
        }
        if !(self.h0 > 0.0 && self.h_far > 0.0 && self.growth > 1.0) {
            return bad("mesh sizes must be positive and growth above 1");
        }
        if !(self.box_half > 0.0 && self.box_half < self.r_out) {
            return bad("box half-size must lie in (0, r_out)");
        }
        if self.order != 1 && self.order != 2 {
            return bad("element order must be 1 or 2");
        }
        Ok(())
    }

    /// Corner element size actually used for a junction of radius `a`.
    pub fn effective_h0(&self, a: f64) -> f64 {
        let h = self.h0.min(a / 8.0);
        a / (a / h - 1e-9).ceil()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeridianMesh {
    pub kind: DomainKind,
    pub dimension: usize,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<BoundaryEdge>,
    pub geometry: Geometry,
    pub level: usize,
}

fn corner_offsets(h0: f64, q: f64, levels: usize) -> Vec<f64> {
    let mut v = vec![0.0];
    for k in (1..=levels).rev() {
        v.push(h0 * q.powi(k as i32));
    }
    v.push(h0);
    v
}

struct Spacing {
    h0: f64,
    q: f64,
    levels: usize,
    h_far: f64,
    growth: f64,
}

impl Spacing {
    /// Offsets in [0, extent] starting at a corner (graded) or a plain edge.
    fn lines(&self, corner: bool, near: f64, extent: f64) -> Vec<f64> {
        let mut v = if corner { corner_offsets(self.h0, self.q, self.levels) } else { vec![0.0] };
        let mut h = self.h0;
        while *v.last().unwrap() + h <= near.min(extent) + 1e-12 {
            let next = *v.last().unwrap() + h;
            v.push(next);
        }
        loop {
            let last = *v.last().unwrap();
            if last >= extent - 1e-12 {
                break;
            }
            h = (h * self.growth).min(self.h_far);
            let next = last + h;
            if next > extent - 0.5 * h {
                v.push(extent);
                break;
            }
            v.push(next);
        }
        // keep the last offset exactly at the extent
        while v.len() > 2 && v[v.len() - 2] > extent - 0.3 * self.h0.min(extent) {
            v.remove(v.len() - 2);
        }
        let n = v.len();
        v[n - 1] = extent;
        v
    }
}

struct Builder {
    verts: Vec<[f64; 2]>,
    index: HashMap<(i64, i64), usize>,
    tris: Vec<[usize; 3]>,
}

impl Builder {
    fn new() -> Self {
        Builder { verts: Vec::new(), index: HashMap::new(), tris: Vec::new() }
    }

    fn node(&mut self, x: f64, r: f64) -> usize {
        let key = ((x * 1e11).round() as i64, (r * 1e11).round() as i64);
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.verts.push([x, r]);
        self.index.insert(key, self.verts.len() - 1);
        self.verts.len() - 1
    }

    fn tri(&mut self, a: usize, b: usize, c: usize) {
        let [p, q, r] = [self.verts[a], self.verts[b], self.verts[c]];
        let area = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
        if area > 0.0 {
            self.tris.push([a, b, c]);
        } else if area < 0.0 {
            self.tris.push([a, c, b]);
        }
    }

    /// Quad a-b-c-d (cyclic) split along the shorter diagonal.
    fn quad(&mut self, a: usize, b: usize, c: usize, d: usize) {
        let dist = |i: usize, j: usize| {
            let (p, q) = (self.verts[i], self.verts[j]);
            (p[0] - q[0]).hypot(p[1] - q[1])
        };
        if dist(a, c) <= dist(b, d) {
            self.tri(a, b, c);
            self.tri(a, c, d);
        } else {
            self.tri(a, b, d);
            self.tri(b, c, d);
        }
    }

    /// Tensor box and O-grid of one half-space. `s_lines` are distances from
    /// the wall, `r_lines` radial coordinates, both ending at the box half-size.
    fn half_space(&mut self, side: HalfSpace, s_lines: &[f64], r_lines: &[f64], r_out: f64, h_far: f64) {
        let x = |s: f64| side.center + side.dir * s;
        let b = *s_lines.last().unwrap();
        let ids: Vec<Vec<usize>> = s_lines
            .iter()
            .map(|&s| r_lines.iter().map(|&r| self.node(x(s), r)).collect())
            .collect();
        for i in 0..s_lines.len() - 1 {
            for j in 0..r_lines.len() - 1 {
                self.quad(ids[i][j], ids[i + 1][j], ids[i + 1][j + 1], ids[i][j + 1]);
            }
        }

        // box boundary path from the wall top corner to the axis far corner
        let mut path: Vec<[f64; 2]> = s_lines.iter().map(|&s| [s, b]).collect();
        for &r in r_lines.iter().rev().skip(1) {
            path.push([b, r]);
        }
        let p = path.len();
        let mut cum = vec![0.0; p];
        for k in 1..p {
            let d = (path[k][0] - path[k - 1][0]).hypot(path[k][1] - path[k - 1][1]);
            cum[k] = cum[k - 1] + d;
        }
        let total = cum[p - 1];
        let layers = ((r_out - b) / h_far).ceil().max(2.0) as usize;
        let arc = |tau: f64| -> [f64; 2] {
            if tau <= 0.0 {
                [0.0, r_out]
            } else if tau >= 1.0 {
                [r_out, 0.0]
            } else {
                let a = FRAC_PI_2 * (1.0 - tau);
                [r_out * a.cos(), r_out * a.sin()]
            }
        };
        let mut grid = vec![vec![0usize; p]; layers + 1];
        for (j, row) in grid.iter_mut().enumerate() {
            let eta = j as f64 / layers as f64;
            for k in 0..p {
                let (s, r) = if j == 0 {
                    (path[k][0], path[k][1])
                } else if k == 0 {
                    (0.0, b + eta * (r_out - b))
                } else if k == p - 1 {
                    (b + eta * (r_out - b), 0.0)
                } else {
                    let tau_path = cum[k] / total;
                    let tau_u = k as f64 / (p - 1) as f64;
                    let tau = (1.0 - eta) * tau_path + eta * tau_u;
                    let a = arc(tau);
                    if j == layers {
                        (a[0], a[1])
                    } else {
                        ((1.0 - eta) * path[k][0] + eta * a[0], (1.0 - eta) * path[k][1] + eta * a[1])
                    }
                };
                row[k] = self.node(x(s), r);
            }
        }
        for j in 0..layers {
            for k in 0..p - 1 {
                self.quad(grid[j][k], grid[j][k + 1], grid[j + 1][k + 1], grid[j + 1][k]);
            }
        }
    }

    /// Rectangular cells, so both diagonals give congruent triangles; a fixed
    /// one keeps the pattern translation invariant along the tube.
    fn tube(&mut self, x_lines: &[f64], r_lines: &[f64]) {
        let ids: Vec<Vec<usize>> =
            x_lines.iter().map(|&x| r_lines.iter().map(|&r| self.node(x, r)).collect()).collect();
        for i in 0..x_lines.len() - 1 {
            for j in 0..r_lines.len() - 1 {
                let [a, b, c, d] = [ids[i][j], ids[i + 1][j], ids[i + 1][j + 1], ids[i][j + 1]];
                self.tri(a, b, c);
                self.tri(a, c, d);
            }
        }
    }
}

struct Lines {
    s: Vec<f64>,
    r: Vec<f64>,
    tube_r: Vec<f64>,
    h0: f64,
}

fn side_lines(cfg: &MeshConfig, a: f64) -> Lines {
    if a > 0.0 {
        let h0 = cfg.effective_h0(a);
        let b = cfg.box_half.max(4.0 * a);
        let sp = Spacing { h0, q: cfg.q, levels: cfg.levels, h_far: cfg.h_far.max(h0), growth: cfg.growth };
        let s = sp.lines(true, 3.0 * a, b);
        let n = (a / h0).round() as usize;
        let mut below = corner_offsets(h0, cfg.q, cfg.levels);
        for k in 2..=n {
            below.push(k as f64 * h0);
        }
        let mut tube_r: Vec<f64> = below.iter().rev().map(|o| a - o).collect();
        tube_r[0] = 0.0;
        let above = sp.lines(true, 3.0 * a, b - a);
        let mut r = tube_r.clone();
        r.extend(above.iter().skip(1).map(|o| a + o));
        *r.last_mut().unwrap() = b;
        Lines { s, r, tube_r, h0 }
    } else {
        let h0 = (cfg.h_far / 4.0).min(cfg.h0);
        let b = cfg.box_half;
        let sp = Spacing { h0, q: cfg.q, levels: 0, h_far: cfg.h_far, growth: cfg.growth };
        let s = sp.lines(false, 0.0, b);
        Lines { r: s.clone(), s, tube_r: Vec::new(), h0 }
    }
}

/// Axial tube lines. The spacing is exactly h0 counted from each graded
/// (junction) end, so the discrete decay rate is the same everywhere; any
/// remainder goes into one cell after the left layer or at an ungraded end.
fn tube_lines(lines: &Lines, cfg: &MeshConfig, x0: f64, x1: f64, graded: [bool; 2]) -> Vec<f64> {
    let h0 = lines.h0;
    let layer = corner_offsets(h0, cfg.q, cfg.levels);
    let left: Vec<f64> = if graded[0] { layer.iter().map(|o| x0 + o).collect() } else { vec![x0] };
    let right: Vec<f64> = if graded[1] { layer.iter().rev().map(|o| x1 - o).collect() } else { vec![x1] };
    let lo = *left.last().unwrap();
    let hi = right[0];
    let n = ((hi - lo) / h0 + 1e-9).floor() as usize;
    let rem = (hi - lo) - n as f64 * h0;
    let steps: Vec<f64> = if rem <= 1e-9 * h0 {
        vec![h0; n]
    } else if n == 0 {
        vec![rem]
    } else {
        // merge the remainder into a neighbour cell when it is too thin
        let odd = if rem < 0.5 * h0 { vec![h0 + rem] } else { vec![rem, h0] };
        let m = n - 1;
        // next to the left junction layer when both ends are graded, below
        // the stretch where tube sections are sampled
        let split = match graded {
            [false, true] | [true, true] => 0,
            _ => m,
        };
        let mut v = vec![h0; split];
        v.extend(odd);
        v.extend(std::iter::repeat(h0).take(m - split));
        v
    };
    let mut v = left.clone();
    let mut x = lo;
    for (k, st) in steps.iter().enumerate() {
        x += st;
        if k + 1 < steps.len() {
            v.push(x);
        }
    }
    v.extend(right);
    v
}

impl MeridianMesh {
    fn finish(kind: DomainKind, b: Builder, geometry: Geometry) -> Self {
        let mut count: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for t in &b.tris {
            for k in 0..3 {
                let (u, v) = (t[k], t[(k + 1) % 3]);
                let key = (u.min(v), u.max(v));
                count.entry(key).or_insert((0, 0)).0 += 1;
                count.get_mut(&key).unwrap().1 = u;
            }
        }
        let mut edges = Vec::new();
        for (&(u, v), &(c, first)) in &count {
            if c != 1 {
                continue;
            }
            let (a, bb) = if first == u { (u, v) } else { (v, u) };
            let tag = classify(kind, &geometry, b.verts[a], b.verts[bb]);
            edges.push(BoundaryEdge { a, b: bb, tag });
        }
        edges.sort_by_key(|e| (e.a, e.b));
        MeridianMesh { kind, dimension: 3, vertices: b.verts, triangles: b.tris, edges, geometry, level: 0 }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let p = self.triangles[t].map(|i| self.vertices[i]);
        let d = |u: [f64; 2], v: [f64; 2]| (u[0] - v[0]).hypot(u[1] - v[1]);
        d(p[0], p[1]).max(d(p[1], p[2])).max(d(p[2], p[0]))
    }

    /// Smallest interior angle of triangle t, in degrees.
    pub fn min_angle(&self, t: usize) -> f64 {
        let p = self.triangles[t].map(|i| self.vertices[i]);
        let mut m = f64::MAX;
        for k in 0..3 {
            let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
            m = m.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
        }
        m
    }

    /// Total length of boundary edges carrying `tag`.
    pub fn tag_length(&self, tag: Tag) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.tag == tag)
            .map(|e| {
                let (p, q) = (self.vertices[e.a], self.vertices[e.b]);
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .sum()
    }

    /// Index of a vertex at exactly the given coordinates.
    pub fn find_vertex(&self, x: f64, r: f64) -> Option<usize> {
        self.vertices.iter().position(|v| (v[0] - x).abs() < 1e-12 && (v[1] - r).abs() < 1e-12)
    }

    /// Checks orientation, conformity, axis placement and tag consistency.
    pub fn check(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        for (i, v) in self.vertices.iter().enumerate() {
            if v[1] < 0.0 {
                return err(format!("vertex {i} has negative radius"));
            }
        }
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if self.area(t) <= 0.0 {
                return err(format!("triangle {t} is not positively oriented"));
            }
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((u.min(v), u.max(v))).or_insert(0) += 1;
            }
        }
        let mut boundary = 0;
        for (&(u, v), &c) in &count {
            if c > 2 {
                return err(format!("edge ({u},{v}) shared by {c} triangles"));
            }
            if c == 1 {
                boundary += 1;
            }
        }
        if boundary != self.edges.len() {
            return err(format!("{} boundary edges but {} tagged", boundary, self.edges.len()));
        }
        for e in &self.edges {
            if count.get(&(e.a.min(e.b), e.a.max(e.b))) != Some(&1) {
                return err(format!("tagged edge ({},{}) is not a boundary edge", e.a, e.b));
            }
            if e.tag == Tag::Axis && self.kind != DomainKind::QuarterDisk {
                if self.vertices[e.a][1] != 0.0 || self.vertices[e.b][1] != 0.0 {
                    return err(format!("axis edge ({},{}) off the axis", e.a, e.b));
                }
            }
        }
        Ok(())
    }

    /// Largest distance of a Dirichlet-wall vertex from the ideal wall set.
    pub fn wall_deviation(&self) -> f64 {
        let g = &self.geometry;
        let mut worst: f64 = 0.0;
        for e in self.edges.iter().filter(|e| e.tag == Tag::DirichletWall) {
            for &i in &[e.a, e.b] {
                let [x, r] = self.vertices[i];
                let mut d = f64::MAX;
                for s in &g.sides {
                    if r >= g.radius - 1e-14 {
                        d = d.min((x - s.center).abs());
                    }
                }
                if let Some([t0, t1]) = g.tube {
                    if x >= t0 - 1e-14 && x <= t1 + 1e-14 {
                        d = d.min((r - g.radius).abs());
                    }
                }
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Uniform red refinement; midpoints are placed on the straight edges.
    pub fn refine(&self) -> MeridianMesh {
        let mut verts = self.vertices.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |u: usize, v: usize, verts: &mut Vec<[f64; 2]>| -> usize {
            let key = (u.min(v), u.max(v));
            *mid.entry(key).or_insert_with(|| {
                let (p, q) = (verts[u], verts[v]);
                let r = if p[1] == 0.0 && q[1] == 0.0 { 0.0 } else { 0.5 * (p[1] + q[1]) };
                verts.push([0.5 * (p[0] + q[0]), r]);
                verts.len() - 1
            })
        };
        let mut tris = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            tris.push([a, ab, ca]);
            tris.push([ab, b, bc]);
            tris.push([ca, bc, c]);
            tris.push([ab, bc, ca]);
        }
        let mut edges = Vec::with_capacity(2 * self.edges.len());
        for e in &self.edges {
            let m = midpoint(e.a, e.b, &mut verts);
            edges.push(BoundaryEdge { a: e.a, b: m, tag: e.tag });
            edges.push(BoundaryEdge { a: m, b: e.b, tag: e.tag });
        }
        MeridianMesh {
            kind: self.kind,
            dimension: self.dimension,
            vertices: verts,
            triangles: tris,
            edges,
            geometry: self.geometry.clone(),
            level: self.level + 1,
        }
    }

    /// Plain-text export; floats are written in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.geometry;
        let _ = writeln!(s, "meridian-mesh v1 N={}", self.dimension);
        let _ = writeln!(s, "kind {} level {}", self.kind.name(), self.level);
        let _ = writeln!(s, "radius {:e} r_out {:e}", g.radius, g.r_out);
        match g.tube {
            Some([a, b]) => {
                let _ = writeln!(s, "tube {a:e} {b:e}");
            }
            None => {
                let _ = writeln!(s, "tube none");
            }
        }
        match g.inflow {
            Some(a) => {
                let _ = writeln!(s, "inflow {a:e}");
            }
            None => {
                let _ = writeln!(s, "inflow none");
            }
        }
        let _ = write!(s, "sides {}", g.sides.len());
        for h in &g.sides {
            let _ = write!(s, " {:e} {:e}", h.center, h.dir);
        }
        s.push('\n');
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:e} {:e}", v[0], v[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "edges {}", self.edges.len());
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {}", e.a, e.b, e.tag.name());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()));
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            lines.next().ok_or(Error::Parse { line: 0, msg: format!("unexpected end, wanted {what}") })
        };
        let perr = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let f = |line: usize, s: &str| s.parse::<f64>().map_err(|_| perr(line, "bad real"));
        let u = |line: usize, s: &str| s.parse::<usize>().map_err(|_| perr(line, "bad integer"));

        let (l, h) = next("header")?;
        if h.len() != 3 || h[0] != "meridian-mesh" || h[1] != "v1" || !h[2].starts_with("N=") {
            return Err(perr(l, "bad header"));
        }
        let dimension = u(l, &h[2][2..])?;
        let (l, k) = next("kind")?;
        if k.len() != 4 || k[0] != "kind" || k[2] != "level" {
            return Err(perr(l, "bad kind line"));
        }
        let kind = DomainKind::parse(k[1]).ok_or_else(|| perr(l, "unknown kind"))?;
        let level = u(l, k[3])?;
        let (l, r) = next("radius")?;
        if r.len() != 4 {
            return Err(perr(l, "bad radius line"));
        }
        let radius = f(l, r[1])?;
        let r_out = f(l, r[3])?;
        let (l, t) = next("tube")?;
        let tube = if t.get(1) == Some(&"none") { None } else { Some([f(l, t[1])?, f(l, t[2])?]) };
        let (l, t) = next("inflow")?;
        let inflow = if t.get(1) == Some(&"none") { None } else { Some(f(l, t[1])?) };
        let (l, t) = next("sides")?;
        let ns = u(l, t[1])?;
        let mut sides = Vec::new();
        for i in 0..ns {
            sides.push(HalfSpace { center: f(l, t[2 + 2 * i])?, dir: f(l, t[3 + 2 * i])? });
        }
        let (l, t) = next("vertices")?;
        let nv = u(l, t[1])?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (l, t) = next("vertex")?;
            vertices.push([f(l, t[0])?, f(l, t[1])?]);
        }
        let (l, t) = next("triangles")?;
        let nt = u(l, t[1])?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (l, t) = next("triangle")?;
            triangles.push([u(l, t[0])?, u(l, t[1])?, u(l, t[2])?]);
        }
        let (l, t) = next("edges")?;
        let ne = u(l, t[1])?;
        let mut edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (l, t) = next("edge")?;
            let tag = Tag::parse(t[2]).ok_or_else(|| perr(l, "unknown tag"))?;
            edges.push(BoundaryEdge { a: u(l, t[0])?, b: u(l, t[1])?, tag });
        }
        Ok(MeridianMesh {
            kind,
            dimension,
            vertices,
            triangles,
            edges,
            geometry: Geometry { radius, r_out, tube, inflow, sides },
            level,
        })
    }
}

fn classify(kind: DomainKind, g: &Geometry, p: [f64; 2], q: [f64; 2]) -> Tag {
    if p[1] == 0.0 && q[1] == 0.0 {
        return Tag::Axis;
    }
    for s in &g.sides {
        let on = |v: [f64; 2]| {
            ((v[0] - s.center).hypot(v[1]) - g.r_out).abs() < 1e-9 * g.r_out
                && s.dir * (v[0] - s.center) >= -1e-12
        };
        if on(p) && on(q) {
            return Tag::Truncation;
        }
    }
    if let Some(xi) = g.inflow {
        if p[0] == xi && q[0] == xi {
            return Tag::Inflow;
        }
    }
    if kind == DomainKind::Tube {
        if let Some([t0, t1]) = g.tube {
            if (p[0] == t0 && q[0] == t0) || (p[0] == t1 && q[0] == t1) {
                return Tag::Inflow;
            }
        }
    }
    if kind == DomainKind::QuarterDisk {
        return Tag::Axis;
    }
    Tag::DirichletWall
}

/// Dumbbell: left half-space x₁ < 0, tube of radius ε on [0, 1], right half-space x₁ > 1.
pub fn build_dumbbell_mesh(cfg: &MeshConfig) -> Result<MeridianMesh> {
    cfg.validate()?;
    if !(cfg.eps > 0.0 && cfg.eps < 0.5) {
        return Err(Error::Config(format!("tube radius {} outside (0, 0.5)", cfg.eps)));
    }
    let a = cfg.eps;
    let lines = side_lines(cfg, a);
    let mut b = Builder::new();
    let left = HalfSpace { center: 0.0, dir: -1.0 };
    let right = HalfSpace { center: 1.0, dir: 1.0 };
    b.half_space(left, &lines.s, &lines.r, cfg.r_out, cfg.h_far);
    b.half_space(right, &lines.s, &lines.r, cfg.r_out, cfg.h_far);
    let tx = tube_lines(&lines, cfg, 0.0, 1.0, [true, true]);
    b.tube(&tx, &lines.tube_r);
    let geometry = Geometry { radius: a, r_out: cfg.r_out, tube: Some([0.0, 1.0]), inflow: None, sides: vec![left, right] };
    Ok(MeridianMesh::finish(DomainKind::Dumbbell, b, geometry))
}

/// The D⁺ half of the dumbbell mesh with the tube mouth closed by a wall, so
/// that its finite element space is a subspace of the dumbbell space.
pub fn build_matched_half_plus(cfg: &MeshConfig) -> Result<MeridianMesh> {
    cfg.validate()?;
    let lines = side_lines(cfg, cfg.eps);
    let mut b = Builder::new();
    let right = HalfSpace { center: 1.0, dir: 1.0 };
    b.half_space(right, &lines.s, &lines.r, cfg.r_out, cfg.h_far);
    let geometry = Geometry { radius: 0.0, r_out: cfg.r_out, tube: None, inflow: None, sides: vec![right] };
    Ok(MeridianMesh::finish(DomainKind::HalfPlus, b, geometry))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileKind {
    PhiDomain,
    PhiHatDomain,
    HalfPlus,
    HalfMinus,
}

/// Profile domains at unit tube radius. The tube of PhiDomain runs over
/// [1 − L, 1] and that of PhiHatDomain over [0, L]; the far tube face is
/// tagged `inflow`.
pub fn build_profile_mesh(kind: ProfileKind, cfg: &MeshConfig) -> Result<MeridianMesh> {
    cfg.validate()?;
    let lt = cfg.tube_length;
    if matches!(kind, ProfileKind::PhiDomain | ProfileKind::PhiHatDomain) && !(lt >= 8.0) {
        return Err(Error::Config(format!("profile tube length {lt} below 8")));
    }
    let mut b = Builder::new();
    let (dk, geometry) = match kind {
        ProfileKind::PhiDomain => {
            let lines = side_lines(cfg, 1.0);
            let side = HalfSpace { center: 1.0, dir: 1.0 };
            b.half_space(side, &lines.s, &lines.r, cfg.r_out, cfg.h_far);
            let tx = tube_lines(&lines, cfg, 1.0 - lt, 1.0, [false, true]);
            b.tube(&tx, &lines.tube_r);
            (
                DomainKind::PhiDomain,
                Geometry { radius: 1.0, r_out: cfg.r_out, tube: Some([1.0 - lt, 1.0]), inflow: Some(1.0 - lt), sides: vec![side] },
            )
        }
        ProfileKind::PhiHatDomain => {
            let lines = side_lines(cfg, 1.0);
            let side = HalfSpace { center: 0.0, dir: -1.0 };
            b.half_space(side, &lines.s, &lines.r, cfg.r_out, cfg.h_far);
            let tx = tube_lines(&lines, cfg, 0.0, lt, [true, false]);
            b.tube(&tx, &lines.tube_r);
            (
                DomainKind::PhiHatDomain,
                Geometry { radius: 1.0, r_out: cfg.r_out, tube: Some([0.0, lt]), inflow: Some(lt), sides: vec![side] },
            )
        }
        ProfileKind::HalfPlus | ProfileKind::HalfMinus => {
            let lines = side_lines(cfg, 0.0);
            let (side, dk) = if kind == ProfileKind::HalfPlus {
                (HalfSpace { center: 1.0, dir: 1.0 }, DomainKind::HalfPlus)
            } else {
                (HalfSpace { center: 0.0, dir: -1.0 }, DomainKind::HalfMinus)
            };
            b.half_space(side, &lines.s, &lines.r, cfg.r_out, cfg.h_far);
            (dk, Geometry { radius: 0.0, r_out: cfg.r_out, tube: None, inflow: None, sides: vec![side] })
        }
    };
    Ok(MeridianMesh::finish(dk, b, geometry))
}

/// Planar quarter of the unit disk with `n_arc` segments on the arc (even, ≥ 4).
pub fn build_quarter_disk(n_arc: usize) -> Result<MeridianMesh> {
    if n_arc < 4 || n_arc % 2 != 0 {
        return Err(Error::Config("arc segment count must be even and at least 4".into()));
    }
    let m = n_arc / 2;
    let lines: Vec<f64> = (0..=m).map(|k| 0.5 * k as f64 / m as f64).collect();
    let mut b = Builder::new();
    let side = HalfSpace { center: 0.0, dir: 1.0 };
    b.half_space(side, &lines, &lines, 1.0, 1.0 / n_arc as f64);
    let geometry = Geometry { radius: 0.0, r_out: 1.0, tube: None, inflow: None, sides: vec![side] };
    Ok(MeridianMesh::finish(DomainKind::QuarterDisk, b, geometry))
}

/// Unit-radius tube over [0, length] with the transverse and axial spacing of
/// the profile meshes; both end faces are tagged `inflow`.
pub fn build_tube_mesh(cfg: &MeshConfig, length: f64) -> Result<MeridianMesh> {
    cfg.validate()?;
    let lines = side_lines(cfg, 1.0);
    let mut b = Builder::new();
    let tx = tube_lines(&lines, cfg, 0.0, length, [false, false]);
    b.tube(&tx, &lines.tube_r);
    let geometry = Geometry { radius: 1.0, r_out: cfg.r_out, tube: Some([0.0, length]), inflow: None, sides: vec![] };
    Ok(MeridianMesh::finish(DomainKind::Tube, b, geometry))
}
