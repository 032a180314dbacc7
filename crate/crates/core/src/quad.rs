//! Gauss–Legendre rules on intervals and a collapsed rule on the reference triangle.

use std::f64::consts::PI;

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped onto [a, b].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule {
            nodes: x.iter().map(|t| mid + half * t).collect(),
            weights: w.iter().map(|t| half * t).collect(),
        }
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn try_integrate<E>(&self, mut f: impl FnMut(f64) -> Result<f64, E>) -> Result<f64, E> {
        let mut s = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(x)?;
        }
        Ok(s)
    }
}

/// Collapsed tensor rule on the reference triangle {ξ, η ≥ 0, ξ + η ≤ 1}.
/// Points are (ξ, η, weight); weights sum to 1/2.
pub fn triangle_rule(n: usize) -> Vec<(f64, f64, f64)> {
    let r = Rule::new(n, 0.0, 1.0);
    let mut pts = Vec::with_capacity(n * n);
    for (&u, &wu) in r.nodes.iter().zip(&r.weights) {
        for (&v, &wv) in r.nodes.iter().zip(&r.weights) {
            pts.push((u, v * (1.0 - u), wu * wv * (1.0 - u)));
        }
    }
    pts
}
