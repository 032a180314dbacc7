use std::f64::consts::PI;
use std::sync::Arc;

use tubelab::elliptic::*;
use tubelab::fem::*;
use tubelab::mesh::*;
use tubelab::sparse::{Csr, Factor};

fn single_triangle(p: [[f64; 2]; 3]) -> Arc<Space> {
    let mesh = MeridianMesh {
        kind: DomainKind::QuarterDisk,
        dimension: 3,
        vertices: p.to_vec(),
        triangles: vec![[0, 1, 2]],
        edges: vec![],
        geometry: Geometry { radius: 0.0, r_out: 10.0, tube: None, inflow: None, sides: vec![] },
        level: 0,
    };
    Arc::new(Space::new(Arc::new(mesh), 1).unwrap())
}

fn entry(m: &Csr, i: usize, j: usize) -> f64 {
    m.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
}

/// ∫_T λ_i λ_j λ_k over a triangle of area A, by the barycentric moment formula.
fn moment(area: f64, idx: &[usize]) -> f64 {
    let mut counts = [0u32; 3];
    for &i in idx {
        counts[i] += 1;
    }
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let n: u32 = counts.iter().sum();
    2.0 * area * counts.iter().map(|&c| fact(c)).product::<f64>() / fact(n + 2)
}

#[test]
fn hat_integrals_on_one_element() {
    // (x₁, ρ) = (0,1), (1,1), (0,2); ρ = 1 + λ_2
    let space = single_triangle([[0.0, 1.0], [1.0, 1.0], [0.0, 2.0]]);
    let (k, m) = assemble_pair(&space, &|_, _| 1.0, Measure::Axisymmetric);
    let grads = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    // ∫ 2πρ dA = 2π(1/2 + 1/6)
    let vol = 2.0 * PI * (0.5 + moment(0.5, &[2]));
    for i in 0..3 {
        for j in 0..3 {
            let kij = (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]) * vol;
            let mij = 2.0 * PI * (moment(0.5, &[i, j]) + moment(0.5, &[i, j, 2]));
            assert!((entry(&k, i, j) - kij).abs() < 1e-14, "K[{i}][{j}]");
            assert!((entry(&m, i, j) - mij).abs() < 1e-14, "M[{i}][{j}]");
        }
    }
    assert!(k.max_asymmetry() < 1e-15 && m.max_asymmetry() < 1e-15);
    // planar measure drops the 2πρ factor
    let (kp, _) = assemble_pair(&space, &|_, _| 1.0, Measure::Planar);
    assert!((entry(&kp, 0, 0) - 1.0).abs() < 1e-14);
}

#[test]
fn stiffness_annihilates_constants() {
    let cfg = MeshConfig { h0: 0.5, levels: 2, r_out: 7.0, h_far: 0.5, box_half: 2.0, growth: 1.3, order: 2, ..MeshConfig::default() };
    let mesh = Arc::new(build_dumbbell_mesh(&MeshConfig { eps: 0.3, ..cfg }).unwrap());
    let space = Space::new(mesh, 2).unwrap();
    let (k, m) = assemble_pair(&space, &|_, _| 1.0, Measure::Axisymmetric);
    let ones = vec![1.0; space.ndof()];
    let kr = k.matvec(&ones);
    assert!(kr.iter().all(|v| v.abs() < 1e-10));
    // 1ᵀM1 is the volume of the truncated dumbbell
    let vol: f64 = m.matvec(&ones).iter().sum();
    let tube = PI * 0.3 * 0.3;
    let balls = 2.0 * (2.0 / 3.0) * PI * 7f64.powi(3);
    assert!((vol / (tube + balls) - 1.0).abs() < 2e-3, "{vol}");
}

#[test]
fn p2_reproduces_the_axial_harmonic() {
    let cfg = MeshConfig { h0: 0.5, levels: 2, r_out: 7.0, h_far: 0.5, box_half: 2.0, growth: 1.3, order: 2, ..MeshConfig::default() };
    let mesh = Arc::new(build_profile_mesh(ProfileKind::HalfPlus, &cfg).unwrap());
    let space = Arc::new(Space::new(mesh, 2).unwrap());
    let sol = solve_dirichlet(space.clone(), &[Tag::DirichletWall, Tag::Truncation], &|x, _| x, None, None, Measure::Axisymmetric)
        .unwrap();
    let err = space.coords.iter().zip(&sol.field.values).map(|(c, v)| (v - c[0]).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

fn l2_error(space: &Arc<Space>, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let sol = solve_dirichlet(
        space.clone(),
        &[Tag::DirichletWall, Tag::Inflow],
        &|x, r| exact(x, r),
        Some(&|_, _| -6.0),
        None,
        Measure::Axisymmetric,
    )
    .unwrap();
    integrate_field(&sol.field, Measure::Axisymmetric, &|_| true, &|x, r, u, _| (u - exact(x, r)).powi(2)).sqrt()
}

#[test]
fn p1_converges_at_second_order() {
    // u = x₁² + ρ² has axisymmetric Laplacian 6
    let exact = |x: f64, r: f64| x * x + r * r;
    let cfg = MeshConfig { h0: 0.25, levels: 0, ..MeshConfig::default() };
    let m0 = build_tube_mesh(&cfg, 2.0).unwrap();
    let m1 = m0.refine();
    let m2 = m1.refine();
    let errs: Vec<f64> = [m0, m1, m2]
        .into_iter()
        .map(|m| l2_error(&Arc::new(Space::new(Arc::new(m), 1).unwrap()), exact))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order} from {errs:?}");
    }
    // P2 holds the quadratic exactly
    let m = Arc::new(build_tube_mesh(&cfg, 2.0).unwrap());
    assert!(l2_error(&Arc::new(Space::new(m, 2).unwrap()), exact) < 1e-11);
}

#[test]
fn refinement_reduces_the_energy_change() {
    let cfg = MeshConfig { h0: 0.5, levels: 3, r_out: 7.0, h_far: 0.5, box_half: 2.0, growth: 1.3, ..MeshConfig::default() };
    let mut mesh = build_dumbbell_mesh(&MeshConfig { eps: 0.3, ..cfg }).unwrap();
    let mut energies = Vec::new();
    for _ in 0..3 {
        let space = Arc::new(Space::new(Arc::new(mesh.clone()), 1).unwrap());
        let sol = solve_dirichlet(space, &[Tag::DirichletWall, Tag::Truncation], &|_, _| 0.0, Some(&|_, _| 1.0), None, Measure::Axisymmetric)
            .unwrap();
        energies.push(integrate_field(&sol.field, Measure::Axisymmetric, &|_| true, &|_, _, _, g| g[0] * g[0] + g[1] * g[1]));
        mesh = mesh.refine();
    }
    // Galerkin energies increase monotonically; their differences are squared energy-norm changes
    let d1 = energies[1] - energies[0];
    let d2 = energies[2] - energies[1];
    assert!(d1 > 0.0 && d2 > 0.0, "{energies:?}");
    assert!((d1 / d2).sqrt() >= 1.5, "{energies:?}");
}

#[test]
fn quarter_disk_eigenvalue_converges_to_the_bessel_root() {
    let j01: f64 = 2.404825557695773;
    let mut last = f64::NAN;
    let mut errs = Vec::new();
    // red refinement keeps the polygon, so the arc is rebuilt at each level
    for n_arc in [8, 16, 32, 64] {
        let mesh = build_quarter_disk(n_arc).unwrap();
        let space = Arc::new(Space::new(Arc::new(mesh), 2).unwrap());
        let (k, m) = assemble_pair(&space, &|_, _| 1.0, Measure::Planar);
        let prob = Problem::from_matrices(space, Measure::Planar, k, m, mask(&[Tag::Truncation]));
        let pair = eigen_problem(&prob, 1, 1e-12).unwrap().remove(0);
        errs.push((pair.lambda - j01 * j01).abs());
        last = pair.lambda;
    }
    // the polygonal boundary costs O(h²), so the sequence extrapolates cleanly
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order} from {errs:?}");
    }
    let prev = j01 * j01 + errs[2];
    let extrapolated = (4.0 * last - prev) / 3.0;
    assert!((extrapolated - j01 * j01).abs() < 1e-5, "{extrapolated}");
    assert!((extrapolated - 5.78319).abs() < 1e-5);
}

#[test]
fn two_scale_eigenvector_is_recovered_by_refinement() {
    // K u = λ u with u_i = e^{−a i} spanning twelve decades; the positive
    // vector of an irreducible Z-matrix is the ground state
    let n = 200;
    let a = 12.0 * std::f64::consts::LN_10 / (n - 1) as f64;
    let lambda = 1.0;
    let u: Vec<f64> = (0..n).map(|i| (-a * i as f64).exp()).collect();
    let mut t = Vec::new();
    for i in 0..n {
        let mut d = lambda;
        if i > 0 {
            t.push((i, i - 1, -1.0));
            d += u[i - 1] / u[i];
        }
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            d += u[i + 1] / u[i];
        }
        t.push((i, i, d));
    }
    let k = Csr::from_triplets(n, t);
    let m = Csr::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect());
    let raw = eigen_smallest(&k, &m, 1, 1e-12).unwrap().remove(0);
    assert!((raw.lambda - lambda).abs() < 1e-10);
    let refined = refine_eigenpair(&k, &m, &raw, 3).unwrap();
    let v = &refined.pair.vector;
    let s = v[0] / u[0];
    let worst = (0..n).map(|i| (v[i] / (s * u[i]) - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-4, "worst relative component error {worst}");
    let h = &refined.residual_history;
    assert!(h.last().unwrap() <= &h[0]);
}

#[test]
fn factorizations_solve() {
    let n = 50;
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 4.0));
        if i > 0 {
            t.push((i, i - 1, -1.0));
            t.push((i - 1, i, -1.0));
        }
    }
    let a = Csr::from_triplets(n, t);
    let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let b = a.matvec(&x);
    for f in [Factor::cholesky(&a).unwrap(), Factor::lu(&a).unwrap()] {
        let y = f.solve(&b);
        assert!(y.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-12));
    }
    let indefinite = a.axpby(1.0, &Csr::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect()), -10.0);
    assert!(Factor::cholesky(&indefinite).is_err());
    assert!(Factor::lu(&indefinite).is_ok());
}
