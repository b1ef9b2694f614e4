//! Graph kernels, time kernels and their product.

mod graph_kernel;
pub mod spec;
mod time_kernel;

use nalgebra::DMatrix;

pub use graph_kernel::{neighborhood_residual, GraphKernel};
pub use spec::{GammaList, GraphKernelSpec, KernelSpec, TimeKernelSpec};
pub use time_kernel::{
    cosine_basis, difference_operator, difference_precision, gtrss_prior_correlation, TimeKernel,
};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::quadrature::TimeDomain;

/// `k((u,s),(v,t)) = K_G(u,v)·k_T(s,t)`.
#[derive(Debug, Clone)]
pub struct ProductKernel {
    pub graph: GraphKernel,
    pub time: TimeKernel,
}

impl ProductKernel {
    pub fn new(graph: GraphKernel, time: TimeKernel) -> Self {
        ProductKernel { graph, time }
    }

    pub fn n_vertices(&self) -> usize {
        self.graph.n_vertices()
    }

    pub fn domain(&self) -> TimeDomain {
        self.time.domain()
    }

    pub fn check_point(&self, v: usize, t: f64) -> Result<()> {
        self.graph.graph().check_vertex(v)?;
        self.time.check(t)
    }

    pub fn eval(&self, u: usize, s: f64, v: usize, t: f64) -> Result<f64> {
        self.check_point(u, s)?;
        self.check_point(v, t)?;
        Ok(self.eval_unchecked(u, s, v, t))
    }

    #[inline]
    pub fn eval_unchecked(&self, u: usize, s: f64, v: usize, t: f64) -> f64 {
        self.graph.get(u, v) * self.time.eval_unchecked(s, t)
    }

    pub fn spec(&self) -> KernelSpec {
        let domain = match self.time {
            TimeKernel::GtrssDifference { .. } => None,
            _ => {
                let d = self.domain();
                Some([d.lo, d.hi])
            }
        };
        KernelSpec {
            graph: self.graph.spec().clone(),
            time: self.time.spec(),
            domain,
            gso: self.graph.graph().gso(),
        }
    }
}

/// Squared RKHS norm of `Σ c_{n,i} φ_n ξ_i` under a bandlimited time
/// kernel: `Σ c_{n,i}² / (r(λ_n) γ_i)`.
///
/// `coeffs` is `N × B`, rows indexed by graph frequency.
pub fn rkhs_norm_sq(coeffs: &DMatrix<f64>, graph: &GraphKernel, time: &TimeKernel) -> Result<f64> {
    let TimeKernel::Bandlimited { gammas, .. } = time else {
        return Err(Error::param("RKHS norm identity needs a bandlimited time kernel"));
    };
    let r = graph.spectral_values();
    if coeffs.nrows() != r.len() || coeffs.ncols() != gammas.len() {
        return Err(Error::DimensionMismatch(format!(
            "coefficients are {}x{}, kernel expects {}x{}",
            coeffs.nrows(),
            coeffs.ncols(),
            r.len(),
            gammas.len()
        )));
    }
    let mut total = 0.0;
    for n in 0..r.len() {
        for (i, g) in gammas.iter().enumerate() {
            let c = coeffs[(n, i)];
            if c == 0.0 {
                continue;
            }
            let weight = r[n] * g;
            if weight <= 0.0 {
                return Err(Error::ZeroSpectralWeight { n, i });
            }
            total += c * c / weight;
        }
    }
    Ok(total)
}

/// Joint-spectrum coefficients of the kernel expansion
/// `f = Σ_m a_m k(·,(v_m,t_m))` under a bandlimited time kernel:
/// `c_{n,i} = r(λ_n) γ_i Σ_m a_m φ_n(v_m) ξ_i(t_m)`.
pub fn expansion_coefficients(
    kernel: &ProductKernel,
    points: &[(usize, f64)],
    weights: &[f64],
) -> Result<DMatrix<f64>> {
    let TimeKernel::Bandlimited { gammas, domain } = &kernel.time else {
        return Err(Error::param("expansion coefficients need a bandlimited time kernel"));
    };
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch("points and weights differ in length".into()));
    }
    for &(v, t) in points {
        kernel.check_point(v, t)?;
    }
    let phi = kernel.graph.graph().eigenvectors();
    let r = kernel.graph.spectral_values();
    let n = r.len();
    Ok(DMatrix::from_fn(n, gammas.len(), |row, i| {
        let s: f64 = points
            .iter()
            .zip(weights)
            .map(|(&(v, t), a)| a * phi[(v, row)] * cosine_basis(i, t, domain))
            .sum();
        r[row] * gammas[i] * s
    }))
}

/// Joint Fourier transform on a grid.
///
/// `signal` is `N × G` (vertex rows, grid columns), `basis` is `B × G` with
/// row `i` holding `ψ_i` on the grid, and `weights` are the `G` quadrature
/// weights. Returns the `N × B` matrix `c_{n,i} = Σ_v ∫ f(v,t) φ_n(v) ψ_i(t)`.
pub fn jft_coefficients(
    signal: &DMatrix<f64>,
    graph: &Graph,
    basis: &DMatrix<f64>,
    weights: &[f64],
) -> Result<DMatrix<f64>> {
    let g = weights.len();
    if signal.nrows() != graph.n_vertices() || signal.ncols() != g || basis.ncols() != g {
        return Err(Error::DimensionMismatch(format!(
            "signal {}x{}, basis {}x{}, {} weights, {} vertices",
            signal.nrows(),
            signal.ncols(),
            basis.nrows(),
            basis.ncols(),
            g,
            graph.n_vertices()
        )));
    }
    let mut weighted = basis.transpose();
    for (row, w) in weights.iter().enumerate() {
        weighted.row_mut(row).scale_mut(*w);
    }
    let gram = basis * &weighted;
    let b = basis.nrows();
    let deviation = (gram - DMatrix::identity(b, b)).amax();
    if deviation > 1e-6 {
        return Err(Error::NonOrthonormalBasis(deviation));
    }
    Ok(graph.eigenvectors().transpose() * signal * weighted)
}
