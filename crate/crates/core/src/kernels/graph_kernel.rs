use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use super::spec::GraphKernelSpec;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg;

/// PSD vertex kernel `K_G = Φ diag(r(λ)) Φᵀ` with a non-increasing response.
///
/// Kernels built from a polynomial in the shifted Laplacian `L − λ_N I`
/// record their degree, which bounds the hop support of `K_G`. Kernels whose
/// square root is itself such a polynomial record that degree as well.
#[derive(Debug, Clone)]
pub struct GraphKernel {
    graph: Arc<Graph>,
    matrix: DMatrix<f64>,
    spectral_values: Vec<f64>,
    poly_degree: Option<usize>,
    sqrt_poly: Option<Vec<f64>>,
    sqrt: OnceLock<DMatrix<f64>>,
    spec: GraphKernelSpec,
}

impl GraphKernel {
    /// Kernel from per-eigenvalue responses `r[i] = r(λ_i)` (ascending λ).
    pub fn spectral(graph: Arc<Graph>, r: &[f64]) -> Result<Self> {
        let n = graph.n_vertices();
        if r.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "spectral response has {} values for {n} eigenvalues",
                r.len()
            )));
        }
        check_response(r)?;
        let matrix = linalg::spectral_matrix(graph.eigenvectors(), r);
        Ok(GraphKernel {
            graph,
            matrix,
            spectral_values: r.to_vec(),
            poly_degree: None,
            sqrt_poly: None,
            sqrt: OnceLock::new(),
            spec: GraphKernelSpec::Spectral { r: r.to_vec() },
        })
    }

    /// Kernel from a response function evaluated on the graph frequencies.
    pub fn from_response(graph: Arc<Graph>, response: impl Fn(f64) -> f64) -> Result<Self> {
        let r: Vec<f64> = graph.eigenvalues().iter().map(|&l| response(l)).collect();
        Self::spectral(graph, &r)
    }

    /// `K_G = Σ_k coeffs[k] (L − λ_N I)^k`, recording `poly_degree`.
    pub fn polynomial(graph: Arc<Graph>, coeffs: &[f64]) -> Result<Self> {
        let mut k = Self::polynomial_inner(graph, coeffs, None)?;
        k.spec = GraphKernelSpec::Polynomial { coeffs: coeffs.to_vec() };
        Ok(k)
    }

    /// `K_G = g(L − λ_N I)²` for a polynomial `g` that is nonnegative on the
    /// spectrum, so the PSD square root is `g(L − λ_N I)` itself.
    pub fn from_sqrt_polynomial(graph: Arc<Graph>, g: &[f64]) -> Result<Self> {
        if g.is_empty() {
            return Err(Error::param("square-root polynomial needs at least one coefficient"));
        }
        let lmax = graph.lambda_max();
        for (i, &l) in graph.eigenvalues().iter().enumerate() {
            let value = linalg::poly_eval(g, l - lmax);
            if value < -1e-12 {
                return Err(Error::NegativeSpectrum { index: i, value });
            }
        }
        let squared = poly_square(g);
        let mut k = Self::polynomial_inner(graph, &squared, Some(g.to_vec()))?;
        k.spec = GraphKernelSpec::Polynomial { coeffs: squared };
        Ok(k)
    }

    /// `K_G = g(L)²` with `g` linear, `g(λ_1) = 1` and `g(λ_N) = end`.
    pub fn sqrt_linear(graph: Arc<Graph>, end: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&end) {
            return Err(Error::param(format!("sqrt_linear end value {end} outside [0, 1]")));
        }
        let spread = graph.lambda_min() - graph.lambda_max();
        if spread == 0.0 {
            return Err(Error::DegenerateSpectrum);
        }
        let mut k = Self::from_sqrt_polynomial(graph, &[end, (1.0 - end) / spread])?;
        k.spec = GraphKernelSpec::SqrtLinear { end };
        Ok(k)
    }

    /// `K_G = a(L − λ_N I)² + bI` with `a(λ_1 − λ_N)² + b = 1`, so that the
    /// response runs from 1 at `λ_1` down to `b` at `λ_N`.
    pub fn quadratic(graph: Arc<Graph>, b: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::param(format!("quadratic kernel parameter b = {b} outside [0, 1]")));
        }
        let spread = graph.lambda_min() - graph.lambda_max();
        if spread == 0.0 {
            return Err(Error::DegenerateSpectrum);
        }
        let a = (1.0 - b) / (spread * spread);
        // With b = 0 the kernel is a perfect square of a linear polynomial.
        let sqrt_poly = (b == 0.0).then(|| vec![0.0, -a.sqrt()]);
        let mut k = Self::polynomial_inner(graph, &[b, 0.0, a], sqrt_poly)?;
        k.spec = GraphKernelSpec::Quadratic { b };
        Ok(k)
    }

    /// `K_G = I`, the degree-0 polynomial kernel.
    pub fn identity(graph: Arc<Graph>) -> Result<Self> {
        let mut k = Self::polynomial_inner(graph, &[1.0], Some(vec![1.0]))?;
        k.spec = GraphKernelSpec::Identity;
        Ok(k)
    }

    /// `K_G = (L + αI)^{-β}`, the prior covariance implied by a Sobolev
    /// smoothness penalty `(L + αI)^β`.
    pub fn sobolev_inverse(graph: Arc<Graph>, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta >= 0.0) {
            return Err(Error::param("sobolev kernel needs alpha > 0 and beta >= 0"));
        }
        let mut k = Self::from_response(graph, |l| (l + alpha).powf(-beta))?;
        k.spec = GraphKernelSpec::Sobolev { alpha, beta };
        Ok(k)
    }

    fn polynomial_inner(
        graph: Arc<Graph>,
        coeffs: &[f64],
        sqrt_poly: Option<Vec<f64>>,
    ) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::param("polynomial kernel needs at least one coefficient"));
        }
        let lmax = graph.lambda_max();
        let r: Vec<f64> =
            graph.eigenvalues().iter().map(|&l| linalg::poly_eval(coeffs, l - lmax)).collect();
        check_response(&r)?;
        let n = graph.n_vertices();
        let mut shifted = graph.laplacian().clone();
        for i in 0..n {
            shifted[(i, i)] -= lmax;
        }
        let matrix = linalg::poly_eval_matrix(coeffs, &shifted);
        let degree = coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        Ok(GraphKernel {
            graph,
            matrix,
            spectral_values: r,
            poly_degree: Some(degree),
            sqrt_poly,
            sqrt: OnceLock::new(),
            spec: GraphKernelSpec::Identity,
        })
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn n_vertices(&self) -> usize {
        self.graph.n_vertices()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.matrix[(u, v)]
    }

    pub fn spectral_values(&self) -> &[f64] {
        &self.spectral_values
    }

    pub fn poly_degree(&self) -> Option<usize> {
        self.poly_degree
    }

    /// Degree `L₀` of the square root when it is a polynomial in the GSO.
    pub fn sqrt_poly_degree(&self) -> Option<usize> {
        self.sqrt_poly.as_ref().map(|g| g.iter().rposition(|&c| c != 0.0).unwrap_or(0))
    }

    pub fn spec(&self) -> &GraphKernelSpec {
        &self.spec
    }

    /// Symmetric PSD square root `K_G^{1/2}`; its columns are the `p_v`.
    pub fn sqrt_matrix(&self) -> &DMatrix<f64> {
        self.sqrt.get_or_init(|| match &self.sqrt_poly {
            Some(g) => {
                let mut shifted = self.graph.laplacian().clone();
                let lmax = self.graph.lambda_max();
                for i in 0..shifted.nrows() {
                    shifted[(i, i)] -= lmax;
                }
                linalg::poly_eval_matrix(g, &shifted)
            }
            None => {
                let roots: Vec<f64> = self.spectral_values.iter().map(|r| r.max(0.0).sqrt()).collect();
                linalg::spectral_matrix(self.graph.eigenvectors(), &roots)
            }
        })
    }
}

fn check_response(r: &[f64]) -> Result<()> {
    let scale = r.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-10 * scale;
    for (i, &value) in r.iter().enumerate() {
        if !value.is_finite() || value < -tol {
            return Err(Error::NegativeSpectrum { index: i, value });
        }
    }
    for i in 1..r.len() {
        if r[i] > r[i - 1] + tol {
            return Err(Error::NonMonotoneSpectrum { index: i, prev: r[i - 1], next: r[i] });
        }
    }
    Ok(())
}

fn poly_square(g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * g.len() - 1];
    for (i, a) in g.iter().enumerate() {
        for (j, b) in g.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Graph-kernel Schur residual
/// `l(v₀, d) = K_G(v₀,v₀) − k(v₀,N_d)ᵀ K_G(N_d,N_d)⁻¹ k(v₀,N_d)` over the
/// open `d`-hop neighborhood, clamped to `[0, K_G(v₀,v₀)]`.
pub fn neighborhood_residual(kernel: &GraphKernel, v0: usize, d: usize) -> Result<f64> {
    let hood: Vec<usize> = kernel.graph().hop_neighborhood(v0, d)?.into_iter().collect();
    if hood.is_empty() {
        return Err(Error::EmptyNeighborhood(v0));
    }
    let m = hood.len();
    let sub = DMatrix::from_fn(m, m, |i, j| kernel.get(hood[i], hood[j]));
    let cross = nalgebra::DVector::from_iterator(m, hood.iter().map(|&u| kernel.get(v0, u)));
    let chol = nalgebra::Cholesky::new(sub).ok_or(Error::SingularSubmatrix)?;
    let solved = chol.solve(&cross);
    let prior = kernel.get(v0, v0);
    Ok((prior - cross.dot(&solved)).clamp(0.0, prior))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2() -> Arc<Graph> {
        Arc::new(Graph::path(2).unwrap())
    }

    #[test]
    fn spectral_p2_lowpass() {
        let k = GraphKernel::spectral(p2(), &[1.0, 0.0]).unwrap();
        let expected = DMatrix::from_element(2, 2, 0.5);
        assert!((k.matrix() - expected).amax() < 1e-15);
        assert_eq!(k.poly_degree(), None);
    }

    #[test]
    fn spectral_all_ones_is_identity() {
        let g = Arc::new(Graph::path(5).unwrap());
        let k = GraphKernel::spectral(g, &[1.0; 5]).unwrap();
        assert!((k.matrix() - DMatrix::identity(5, 5)).amax() < 1e-14);
    }

    #[test]
    fn spectral_rejects_bad_responses() {
        assert!(matches!(
            GraphKernel::spectral(p2(), &[0.0, 1.0]),
            Err(Error::NonMonotoneSpectrum { index: 1, .. })
        ));
        assert!(matches!(
            GraphKernel::spectral(p2(), &[1.0, -0.5]),
            Err(Error::NegativeSpectrum { index: 1, .. })
        ));
    }

    #[test]
    fn quadratic_p2_b0() {
        let k = GraphKernel::quadratic(p2(), 0.0).unwrap();
        assert!((k.matrix() - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-15);
        assert_eq!(k.poly_degree(), Some(2));
        assert_eq!(k.sqrt_poly_degree(), Some(1));
    }

    #[test]
    fn quadratic_endpoints_and_identity_at_b1() {
        let g = Arc::new(Graph::path(6).unwrap());
        let k = GraphKernel::quadratic(g.clone(), 0.3).unwrap();
        let r = k.spectral_values();
        assert!((r[0] - 1.0).abs() < 1e-10);
        assert!((r[5] - 0.3).abs() < 1e-10);
        let id = GraphKernel::quadratic(g, 1.0).unwrap();
        assert!((id.matrix() - DMatrix::identity(6, 6)).amax() < 1e-15);
    }

    #[test]
    fn quadratic_single_vertex_degenerate() {
        let g = Arc::new(Graph::from_edges(1, &[]).unwrap());
        assert!(matches!(GraphKernel::quadratic(g, 0.5), Err(Error::DegenerateSpectrum)));
    }

    #[test]
    fn quadratic_matches_spectral_form() {
        let g = Arc::new(Graph::cycle(7).unwrap());
        let k = GraphKernel::quadratic(g.clone(), 0.4).unwrap();
        let back = linalg::spectral_matrix(g.eigenvectors(), k.spectral_values());
        assert!((k.matrix() - back).amax() < 1e-10);
    }

    #[test]
    fn polynomial_support_is_exact() {
        let g = Arc::new(Graph::path(6).unwrap());
        let k = GraphKernel::quadratic(g.clone(), 0.2).unwrap();
        for u in 0..6 {
            for v in 0..6 {
                if g.hops().dist(u, v) > 2 {
                    assert_eq!(k.get(u, v), 0.0);
                }
            }
        }
    }

    #[test]
    fn sqrt_identity_and_projector() {
        let id = GraphKernel::identity(Arc::new(Graph::path(3).unwrap())).unwrap();
        assert_eq!(id.sqrt_matrix(), &DMatrix::identity(3, 3));
        let proj = GraphKernel::spectral(p2(), &[1.0, 0.0]).unwrap();
        assert!((proj.sqrt_matrix() - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-15);
    }

    #[test]
    fn sqrt_squares_back() {
        let g = Arc::new(Graph::from_edges(4, &[(0, 1, 0.7), (1, 2, 1.3), (2, 3, 0.4), (0, 3, 2.0)]).unwrap());
        for k in [
            GraphKernel::quadratic(g.clone(), 0.35).unwrap(),
            GraphKernel::sqrt_linear(g.clone(), 0.4).unwrap(),
            GraphKernel::sobolev_inverse(g.clone(), 0.5, 1.5).unwrap(),
        ] {
            let s = k.sqrt_matrix();
            assert!((s * s - k.matrix()).amax() < 1e-8);
        }
    }

    #[test]
    fn sqrt_linear_locality() {
        let g = Arc::new(Graph::path(4).unwrap());
        let k = GraphKernel::sqrt_linear(g, 0.4).unwrap();
        assert_eq!(k.sqrt_poly_degree(), Some(1));
        assert_eq!(k.poly_degree(), Some(2));
        assert_eq!(k.sqrt_matrix()[(3, 0)], 0.0);
        assert_eq!(k.sqrt_matrix()[(2, 0)], 0.0);
        assert!((k.spectral_values()[0] - 1.0).abs() < 1e-12);
        assert!((k.spectral_values()[3] - 0.16).abs() < 1e-12);
    }

    #[test]
    fn residual_identity_and_p2() {
        let id = GraphKernel::identity(Arc::new(Graph::path(3).unwrap())).unwrap();
        assert_eq!(neighborhood_residual(&id, 1, 1).unwrap(), 1.0);
        for b in [0.0, 0.25, 0.6, 1.0] {
            let k = GraphKernel::quadratic(p2(), b).unwrap();
            let l = neighborhood_residual(&k, 0, 1);
            if b == 0.0 {
                // K(N,N) = [0.5] is invertible; the residual is exactly zero.
                assert!(l.unwrap().abs() < 1e-15);
            } else {
                assert!((l.unwrap() - 2.0 * b / (1.0 + b)).abs() < 1e-12, "b = {b}");
            }
        }
        let single = GraphKernel::identity(Arc::new(Graph::from_edges(1, &[]).unwrap())).unwrap();
        assert!(matches!(neighborhood_residual(&single, 0, 1), Err(Error::EmptyNeighborhood(0))));
    }
}
