//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

/// Combinatorial Laplacian assembled entry by entry.
pub fn laplacian(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(u, v, w) in edges {
        l[(u, v)] -= w;
        l[(v, u)] -= w;
        l[(u, u)] += w;
        l[(v, v)] += w;
    }
    l
}

/// `Φ diag(r(λ)) Φᵀ` with `r(λ) = a(λ − λ_max)² + b`, `a(λ_min − λ_max)² + b = 1`.
pub fn quadratic_kernel(l: &DMatrix<f64>, b: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(l.clone());
    let lmin = eig.eigenvalues.min();
    let lmax = eig.eigenvalues.max();
    let a = (1.0 - b) / ((lmin - lmax) * (lmin - lmax));
    let r = eig.eigenvalues.map(|x| a * (x - lmax) * (x - lmax) + b);
    &eig.eigenvectors * DMatrix::from_diagonal(&r) * eig.eigenvectors.transpose()
}

pub fn gaussian(gamma: f64) -> impl Fn(f64, f64) -> f64 {
    move |s, t| (-(s - t) * (s - t) / gamma).exp()
}

pub fn laplacian_rbf(gamma: f64) -> impl Fn(f64, f64) -> f64 {
    move |s, t| (-(s - t).abs() / gamma).exp()
}

/// `Σ γ_i ξ_i(s) ξ_i(t)` with the unit-interval cosine basis.
pub fn bandlimited(gammas: Vec<f64>) -> impl Fn(f64, f64) -> f64 {
    move |s, t| {
        gammas
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let xi = |x: f64| if i == 0 { 1.0 } else { 2f64.sqrt() * (i as f64 * PI * x).cos() };
                g * xi(s) * xi(t)
            })
            .sum()
    }
}

pub fn gram(kg: &DMatrix<f64>, kt: &dyn Fn(f64, f64) -> f64, pts: &[(usize, f64)]) -> DMatrix<f64> {
    DMatrix::from_fn(pts.len(), pts.len(), |i, j| kg[(pts[i].0, pts[j].0)] * kt(pts[i].1, pts[j].1))
}

/// `(K + μI)⁻¹ y` by LU.
pub fn ridge_solve(k: &DMatrix<f64>, mu: f64, y: &DVector<f64>) -> DVector<f64> {
    let n = k.nrows();
    (k + DMatrix::identity(n, n) * mu).lu().solve(y).expect("nonsingular")
}

/// Connected random graph: a random spanning tree plus extra edges.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, extra: usize) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v, rng.random_range(0.5..2.0)));
    }
    for _ in 0..extra {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !edges.iter().any(|&(a, b, _)| (a, b) == (u, v) || (a, b) == (v, u)) {
            edges.push((u, v, rng.random_range(0.5..2.0)));
        }
    }
    edges
}

pub fn path_edges(n: usize) -> Vec<(usize, usize, f64)> {
    (1..n).map(|v| (v - 1, v, 1.0)).collect()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = b.norm();
    if scale == 0.0 {
        a.norm()
    } else {
        (a - b).norm() / scale
    }
}
