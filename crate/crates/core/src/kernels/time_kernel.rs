use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};

use super::spec::{GammaList, TimeKernelSpec};
use crate::error::{Error, Result};
use crate::quadrature::TimeDomain;

/// Kernel on the time domain.
#[derive(Debug, Clone)]
pub enum TimeKernel {
    /// `exp(−(s−t)²/γ)`.
    GaussianRbf { gamma: f64, domain: TimeDomain },
    /// `exp(−|s−t|/γ)`.
    LaplacianRbf { gamma: f64, domain: TimeDomain },
    /// `Σ_i γ_i ξ_i(s) ξ_i(t)` over the first `B = gammas.len()` cosine
    /// eigenfunctions of the domain (see [`cosine_basis`]).
    Bandlimited { gammas: Vec<f64>, domain: TimeDomain },
    /// Entries of `(D_h D_hᵀ + δ₀ I)⁻¹` on the index set `1..=T`.
    GtrssDifference { steps: usize, delta0: f64, matrix: Arc<DMatrix<f64>> },
}

impl TimeKernel {
    pub fn gaussian(gamma: f64, domain: TimeDomain) -> Result<Self> {
        check_positive("gamma", gamma)?;
        Ok(TimeKernel::GaussianRbf { gamma, domain })
    }

    pub fn laplacian(gamma: f64, domain: TimeDomain) -> Result<Self> {
        check_positive("gamma", gamma)?;
        Ok(TimeKernel::LaplacianRbf { gamma, domain })
    }

    pub fn bandlimited(gammas: Vec<f64>, domain: TimeDomain) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::param("bandlimited kernel needs B >= 1"));
        }
        for &g in &gammas {
            check_positive("gamma_i", g)?;
        }
        Ok(TimeKernel::Bandlimited { gammas, domain })
    }

    pub fn gtrss(steps: usize, delta0: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::param("GTRSS time kernel needs T >= 2"));
        }
        check_positive("delta0", delta0)?;
        let precision = difference_precision(steps, delta0);
        let chol = Cholesky::new(precision).ok_or(Error::SolveFailure)?;
        let mut matrix = chol.inverse();
        crate::linalg::symmetrize(&mut matrix);
        Ok(TimeKernel::GtrssDifference { steps, delta0, matrix: Arc::new(matrix) })
    }

    pub fn domain(&self) -> TimeDomain {
        match self {
            TimeKernel::GaussianRbf { domain, .. }
            | TimeKernel::LaplacianRbf { domain, .. }
            | TimeKernel::Bandlimited { domain, .. } => *domain,
            TimeKernel::GtrssDifference { steps, .. } => {
                TimeDomain { lo: 1.0, hi: *steps as f64 }
            }
        }
    }

    pub fn is_shift_invariant(&self) -> bool {
        matches!(self, TimeKernel::GaussianRbf { .. } | TimeKernel::LaplacianRbf { .. })
    }

    pub fn check(&self, t: f64) -> Result<()> {
        let domain = self.domain();
        domain.check(t)?;
        if let TimeKernel::GtrssDifference { .. } = self {
            if t.fract() != 0.0 {
                return Err(Error::OutOfDomain(t, domain.lo, domain.hi));
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        self.check(s)?;
        self.check(t)?;
        Ok(self.eval_unchecked(s, t))
    }

    /// Evaluate without domain checks; callers validate points up front.
    #[inline]
    pub fn eval_unchecked(&self, s: f64, t: f64) -> f64 {
        match self {
            TimeKernel::GaussianRbf { gamma, .. } => {
                let d = s - t;
                (-(d * d) / gamma).exp()
            }
            TimeKernel::LaplacianRbf { gamma, .. } => (-(s - t).abs() / gamma).exp(),
            TimeKernel::Bandlimited { gammas, domain } => gammas
                .iter()
                .enumerate()
                .map(|(i, g)| g * cosine_basis(i, s, domain) * cosine_basis(i, t, domain))
                .sum(),
            TimeKernel::GtrssDifference { matrix, .. } => {
                matrix[(s as usize - 1, t as usize - 1)]
            }
        }
    }

    pub fn spec(&self) -> TimeKernelSpec {
        match self {
            TimeKernel::GaussianRbf { gamma, .. } => TimeKernelSpec::Gaussian { gamma: *gamma },
            TimeKernel::LaplacianRbf { gamma, .. } => TimeKernelSpec::Laplacian { gamma: *gamma },
            TimeKernel::Bandlimited { gammas, .. } => {
                TimeKernelSpec::Bandlimited { gamma: GammaList::List(gammas.clone()), b: None }
            }
            TimeKernel::GtrssDifference { steps, delta0, .. } => {
                TimeKernelSpec::Gtrss { steps: *steps, delta0: *delta0 }
            }
        }
    }

    /// Gram matrix on a list of times.
    pub fn gram(&self, times: &[f64]) -> DMatrix<f64> {
        let n = times.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval_unchecked(times[i], times[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} = {x} must be positive and finite")))
    }
}

/// Orthonormal cosine basis on `[lo, hi]`: `ξ₀ = 1/√len`,
/// `ξ_i(t) = √(2/len)·cos(iπ(t−lo)/len)`.
pub fn cosine_basis(i: usize, t: f64, domain: &TimeDomain) -> f64 {
    let len = domain.len();
    if i == 0 {
        len.sqrt().recip()
    } else {
        (2.0 / len).sqrt() * (i as f64 * PI * (t - domain.lo) / len).cos()
    }
}

/// First-order difference operator `D_h ∈ ℝ^{T×(T−1)}`: column `j` has −1 at
/// row `j` and +1 at row `j+1`.
pub fn difference_operator(steps: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(steps, steps.saturating_sub(1));
    for j in 0..steps.saturating_sub(1) {
        d[(j, j)] = -1.0;
        d[(j + 1, j)] = 1.0;
    }
    d
}

/// `D_h D_hᵀ + δ₀ I`.
pub fn difference_precision(steps: usize, delta0: f64) -> DMatrix<f64> {
    let d = difference_operator(steps);
    let mut p = &d * d.transpose();
    for i in 0..steps {
        p[(i, i)] += delta0;
    }
    p
}

/// Prior correlation between the first and last time step under the GTRSS
/// time kernel, `k(1,T)/√(k(1,1)k(T,T))`.
///
/// The precision `D_h D_hᵀ + δ₀I` is tridiagonal, so the two needed columns
/// of its inverse come from two O(T) tridiagonal solves.
pub fn gtrss_prior_correlation(steps: usize, delta0: f64) -> Result<f64> {
    if steps < 2 {
        return Err(Error::param("prior correlation needs T >= 2"));
    }
    check_positive("delta0", delta0)?;
    let diag: Vec<f64> = (0..steps)
        .map(|i| if i == 0 || i + 1 == steps { 1.0 } else { 2.0 } + delta0)
        .collect();
    let off = vec![-1.0; steps - 1];
    let mut first = vec![0.0; steps];
    first[0] = 1.0;
    let mut last = vec![0.0; steps];
    last[steps - 1] = 1.0;
    let x1 = solve_tridiagonal(&diag, &off, &first);
    let xt = solve_tridiagonal(&diag, &off, &last);
    Ok(x1[steps - 1] / (x1[0] * xt[steps - 1]).sqrt())
}

/// Thomas algorithm for a symmetric tridiagonal system.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_unit_diagonal() {
        let k = TimeKernel::gaussian(1.0, TimeDomain::unit()).unwrap();
        assert_eq!(k.eval(0.3, 0.3).unwrap(), 1.0);
        assert!(matches!(k.eval(0.3, 1.3), Err(Error::OutOfDomain(..))));
    }

    #[test]
    fn laplacian_formula() {
        let k = TimeKernel::laplacian(0.5, TimeDomain::unit()).unwrap();
        assert!((k.eval(0.1, 0.6).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gtrss_two_step_correlation() {
        let delta = 1e-5;
        let k = TimeKernel::gtrss(2, delta).unwrap();
        let corr = k.eval(1.0, 2.0).unwrap()
            / (k.eval(1.0, 1.0).unwrap() * k.eval(2.0, 2.0).unwrap()).sqrt();
        assert!((corr - 1.0 / (1.0 + delta)).abs() < 1e-9);
        assert!((gtrss_prior_correlation(2, delta).unwrap() - 1.0 / (1.0 + delta)).abs() < 1e-12);
        assert!(k.eval(1.5, 2.0).is_err());
        assert!(k.eval(0.0, 2.0).is_err());
    }

    #[test]
    fn gtrss_correlation_vanishes_for_large_delta() {
        assert!(gtrss_prior_correlation(8, 1e8).unwrap().abs() < 1e-7);
    }

    #[test]
    fn bandlimited_constant_eigenfunction() {
        let k = TimeKernel::bandlimited(vec![2.0], TimeDomain::unit()).unwrap();
        for (s, t) in [(0.0, 1.0), (0.25, 0.75), (0.5, 0.5)] {
            assert!((k.eval(s, t).unwrap() - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn difference_operator_shape() {
        let d = difference_operator(4);
        assert_eq!(d.shape(), (4, 3));
        let p = difference_precision(4, 0.0);
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, -1.0, 0.0, 0.0, -1.0, 2.0, -1.0, 0.0, 0.0, -1.0, 2.0, -1.0, 0.0, 0.0, -1.0, 1.0],
        );
        assert_eq!(p, expected);
    }

    #[test]
    fn parameter_validation() {
        assert!(TimeKernel::gaussian(0.0, TimeDomain::unit()).is_err());
        assert!(TimeKernel::bandlimited(vec![], TimeDomain::unit()).is_err());
        assert!(TimeKernel::gtrss(1, 1e-5).is_err());
        assert!(gtrss_prior_correlation(4, 0.0).is_err());
    }
}
