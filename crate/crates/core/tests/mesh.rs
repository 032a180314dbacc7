use proptest::prelude::*;
use tubelab::mesh::*;

fn coarse() -> MeshConfig {
    MeshConfig { h0: 0.5, levels: 3, r_out: 7.0, h_far: 0.5, box_half: 2.0, growth: 1.3, ..MeshConfig::default() }
}

fn corners(m: &MeridianMesh, t: usize) -> [[f64; 2]; 3] {
    m.triangles[t].map(|i| m.vertices[i])
}

/// Smallest angle over elements without a sub-h_far edge, i.e. away from the
/// bands of grid lines that the corner grading draws across the mesh.
fn min_angle_outside_bands(m: &MeridianMesh, h_far: f64) -> f64 {
    (0..m.triangles.len())
        .filter(|&t| {
            let p = corners(m, t);
            (0..3).all(|k| (p[k][0] - p[(k + 1) % 3][0]).hypot(p[k][1] - p[(k + 1) % 3][1]) >= 0.5 * h_far)
        })
        .map(|t| m.min_angle(t))
        .fold(f64::MAX, f64::min)
}

fn max_angle(m: &MeridianMesh) -> f64 {
    let mut worst: f64 = 0.0;
    for t in 0..m.triangles.len() {
        let p = corners(m, t);
        for k in 0..3 {
            let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
            worst = worst.max(cos.clamp(-1.0, 1.0).acos().to_degrees());
        }
    }
    worst
}

#[test]
fn dumbbell_mesh_is_conforming() {
    let m = build_dumbbell_mesh(&MeshConfig { eps: 0.2, ..MeshConfig::default() }).unwrap();
    m.check().unwrap();
    assert_eq!(m.kind, DomainKind::Dumbbell);
    assert!(m.wall_deviation() < 1e-12);
    let h_far = MeshConfig::default().h_far;
    assert!(min_angle_outside_bands(&m, h_far) > 10.0, "min angle {}", min_angle_outside_bands(&m, h_far));
    assert!(max_angle(&m) < 120.0, "max angle {}", max_angle(&m));
    assert_eq!(m.geometry.tube, Some([0.0, 1.0]));
    // two quarter arcs in the meridian plane
    let arc = m.tag_length(Tag::Truncation);
    assert!((arc / (std::f64::consts::PI * 12.0) - 1.0).abs() < 1e-3, "{arc}");
}

#[test]
fn tube_columns_are_exactly_h0_apart() {
    for eps in [0.3, 0.2, 0.15, 0.1] {
        let cfg = MeshConfig { eps, ..MeshConfig::default() };
        let h = cfg.effective_h0(eps);
        let m = build_dumbbell_mesh(&cfg).unwrap();
        let mut xs: Vec<f64> = m.vertices.iter().filter(|v| v[0] > 0.0 && v[0] < 1.0).map(|v| v[0]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let gaps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        // graded layers at both junctions: h·q^k for k = levels, …, 1
        let layer = cfg.levels;
        for k in 0..layer {
            let g = h * cfg.q.powi((layer - k) as i32);
            assert!((gaps[k] - g).abs() < 1e-12 && (gaps[gaps.len() - 1 - k] - g).abs() < 1e-12, "eps {eps}");
        }
        let inner = &gaps[layer..gaps.len() - layer];
        let odd: Vec<usize> = (0..inner.len()).filter(|&i| (inner[i] - h).abs() > 1e-12).collect();
        assert!(odd.len() <= 1, "eps {eps}: irregular cells at {odd:?}");
        // the odd cell, if any, sits next to the left layer
        assert!(odd.iter().all(|&i| i == 0), "eps {eps}");
    }
}

#[test]
fn effective_h0_divides_the_radius() {
    let cfg = MeshConfig { h0: 0.2, ..MeshConfig::default() };
    for a in [1.0, 0.3, 0.2, 0.125, 0.05] {
        let h = cfg.effective_h0(a);
        assert!(h <= a / 8.0 + 1e-15 && h <= 0.2);
        let k = a / h;
        assert!((k - k.round()).abs() < 1e-9, "a = {a}");
    }
}

#[test]
fn refinement_quadruples() {
    let m0 = build_profile_mesh(ProfileKind::PhiDomain, &coarse()).unwrap();
    let m1 = m0.refine();
    let m2 = m1.refine();
    m2.check().unwrap();
    assert_eq!(m1.triangles.len(), 4 * m0.triangles.len());
    assert_eq!(m2.level, m0.level + 2);
    for (a, b) in [(&m0, &m1), (&m1, &m2)] {
        let ratio = b.num_vertices() as f64 / a.num_vertices() as f64;
        assert!(ratio > 3.5 && ratio < 4.0, "ratio {ratio}");
    }
    // Euler: V' = V + E for red refinement
    let edges = (3 * m0.triangles.len() + m0.edges.len()) / 2;
    assert_eq!(m1.num_vertices(), m0.num_vertices() + edges);
}

#[test]
fn profile_domains_carry_their_tags() {
    let cfg = coarse();
    let phi = build_profile_mesh(ProfileKind::PhiDomain, &cfg).unwrap();
    assert!((phi.tag_length(Tag::Inflow) - 1.0).abs() < 1e-12);
    assert_eq!(phi.geometry.inflow, Some(1.0 - cfg.tube_length));
    let hat = build_profile_mesh(ProfileKind::PhiHatDomain, &cfg).unwrap();
    assert_eq!(hat.geometry.inflow, Some(cfg.tube_length));
    let half = build_profile_mesh(ProfileKind::HalfMinus, &cfg).unwrap();
    assert_eq!(half.tag_length(Tag::Inflow), 0.0);
    assert!((half.tag_length(Tag::Axis) - cfg.r_out).abs() < 1e-9);
    for m in [&phi, &hat, &half] {
        m.check().unwrap();
    }
}

#[test]
fn quarter_disk_and_tube() {
    let q = build_quarter_disk(16).unwrap();
    q.check().unwrap();
    assert!((q.tag_length(Tag::Truncation) - std::f64::consts::FRAC_PI_2).abs() < 0.01);
    assert!(build_quarter_disk(5).is_err());
    let t = build_tube_mesh(&coarse(), 3.0).unwrap();
    t.check().unwrap();
    assert!((t.tag_length(Tag::Inflow) - 2.0).abs() < 1e-12);
    assert!((t.tag_length(Tag::DirichletWall) - 3.0).abs() < 1e-12);
}

#[test]
fn text_round_trip() {
    let m = build_dumbbell_mesh(&MeshConfig { eps: 0.3, ..coarse() }).unwrap();
    let back = MeridianMesh::from_text(&m.to_text()).unwrap();
    assert_eq!(back, m);
    assert!(MeridianMesh::from_text("garbage").is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        MeshConfig { q: 1.0, ..coarse() },
        MeshConfig { r_out: 5.0, ..coarse() },
        MeshConfig { order: 3, ..coarse() },
        MeshConfig { growth: 1.0, ..coarse() },
        MeshConfig { eps: 0.6, ..coarse() },
    ] {
        assert!(build_dumbbell_mesh(&bad).is_err(), "{bad:?}");
    }
    let short = MeshConfig { tube_length: 4.0, ..coarse() };
    assert!(build_profile_mesh(ProfileKind::PhiDomain, &short).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dumbbell_invariants(eps in 0.04..0.45f64, levels in 0usize..9, q in 0.3..0.7f64) {
        let cfg = MeshConfig { eps, levels, q, ..MeshConfig::default() };
        let m = build_dumbbell_mesh(&cfg).unwrap();
        prop_assert!(m.check().is_ok());
        prop_assert!(m.wall_deviation() < 1e-12);
        prop_assert!(m.vertices.iter().all(|v| v[1] >= 0.0 && v[0].hypot(v[1]) <= cfg.r_out + 1.0 + 1e-9));
        // tube vertices stay inside the tube
        prop_assert!(m.vertices.iter().filter(|v| v[0] > 1e-12 && v[0] < 1.0 - 1e-12).all(|v| v[1] <= eps + 1e-12));
        let area: f64 = (0..m.triangles.len()).map(|t| m.area(t)).sum();
        prop_assert!(area > 0.0);
        prop_assert!(min_angle_outside_bands(&m, cfg.h_far) > 10.0);
        prop_assert!(max_angle(&m) < 120.0);
    }

    #[test]
    fn refinement_preserves_area(levels in 0usize..4) {
        let m = build_profile_mesh(ProfileKind::HalfPlus, &MeshConfig { levels, ..coarse() }).unwrap();
        let r = m.refine();
        let a0: f64 = (0..m.triangles.len()).map(|t| m.area(t)).sum();
        let a1: f64 = (0..r.triangles.len()).map(|t| r.area(t)).sum();
        prop_assert!((a0 - a1).abs() < 1e-10 * a0);
        prop_assert!(r.check().is_ok());
    }
}
