//! Temporal-difference graph smoothing (batch and online) and per-vertex
//! KRR, used as comparison methods.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kernels::{difference_precision, GraphKernel, ProductKernel, TimeKernel};
use crate::linalg;
use crate::reconstruct::{fit_krr, KrrModel, Sample, SampleSet};

/// `(L + αI)^β` by eigendecomposition.
pub fn sobolev_power(graph: &Graph, alpha: f64, beta: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) || !beta.is_finite() {
        return Err(Error::param(format!("need alpha > 0 and finite beta, got {alpha}, {beta}")));
    }
    let values: Vec<f64> = graph.eigenvalues().iter().map(|l| (l + alpha).powf(beta)).collect();
    Ok(linalg::spectral_matrix(graph.eigenvectors(), &values))
}

/// Masked reconstruction problem on an `N × T` vertex-time array.
#[derive(Debug, Clone)]
pub struct GtrssProblem {
    pub graph: Arc<Graph>,
    /// `Π`, 1 on observed entries.
    pub mask: DMatrix<f64>,
    /// `X_o`, zero off the mask.
    pub observations: DMatrix<f64>,
    pub mu_tv: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta0: f64,
}

impl GtrssProblem {
    pub fn new(
        graph: Arc<Graph>,
        mask: DMatrix<f64>,
        observations: DMatrix<f64>,
        mu_tv: f64,
        alpha: f64,
        beta: f64,
        delta0: f64,
    ) -> Result<Self> {
        let n = graph.n_vertices();
        if mask.nrows() != n || observations.shape() != mask.shape() {
            return Err(Error::DimensionMismatch(format!(
                "mask {:?} and observations {:?} must both be {n} x T",
                mask.shape(),
                observations.shape()
            )));
        }
        if mask.ncols() < 2 {
            return Err(Error::param("GTRSS needs T >= 2"));
        }
        for ((m, x), idx) in mask.iter().zip(observations.iter()).zip(0..) {
            if *m != 0.0 && *m != 1.0 {
                return Err(Error::param(format!("mask entry {idx} is {m}, not 0/1")));
            }
            if *m == 0.0 && *x != 0.0 {
                return Err(Error::param(format!("observation {idx} is nonzero off the mask")));
            }
        }
        for (name, x) in [("mu_tv", mu_tv), ("alpha", alpha), ("delta0", delta0)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::param(format!("{name} = {x} must be positive")));
            }
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param(format!("beta = {beta} must be positive")));
        }
        Ok(GtrssProblem { graph, mask, observations, mu_tv, alpha, beta, delta0 })
    }

    pub fn steps(&self) -> usize {
        self.mask.ncols()
    }

    /// `Q = (D_h D_hᵀ + δ₀I) ⊗ (L + αI)^β` on column-major `vec` of the
    /// `N × T` array (vertex index fastest).
    pub fn penalty(&self) -> Result<DMatrix<f64>> {
        let time = difference_precision(self.steps(), self.delta0);
        let graph = sobolev_power(&self.graph, self.alpha, self.beta)?;
        Ok(time.kronecker(&graph))
    }

    /// `‖Π⊙(X − X_o)‖² + μ_TV·vec(X)ᵀ Q vec(X)`.
    pub fn objective(&self, x: &DMatrix<f64>) -> Result<f64> {
        let data = self.mask.component_mul(&(x - &self.observations)).norm_squared();
        let v = DVector::from_column_slice(x.as_slice());
        Ok(data + self.mu_tv * v.dot(&(self.penalty()? * &v)))
    }

    /// Observed entries as samples at integer times `1..=T`.
    pub fn samples(&self) -> SampleSet {
        let mut samples = SampleSet::default();
        for t in 0..self.steps() {
            for v in 0..self.mask.nrows() {
                if self.mask[(v, t)] == 1.0 {
                    samples.push(Sample::new(v, (t + 1) as f64, self.observations[(v, t)]));
                }
            }
        }
        samples
    }
}

/// Solve `(diag(vec Π) + μ_TV Q) vec X = vec X_o`.
pub fn solve_gtrss(p: &GtrssProblem) -> Result<DMatrix<f64>> {
    let mut system = p.penalty()? * p.mu_tv;
    for (i, m) in p.mask.iter().enumerate() {
        system[(i, i)] += m;
    }
    linalg::symmetrize(&mut system);
    let chol = Cholesky::new(system).ok_or(Error::SingularSystem)?;
    let rhs = DVector::from_column_slice(p.observations.as_slice());
    let x = chol.solve(&rhs);
    Ok(DMatrix::from_column_slice(p.mask.nrows(), p.steps(), x.as_slice()))
}

/// The KRR model equivalent to the problem: `K_G = (L + αI)^{−β}`, the
/// inverse temporal-difference precision as time kernel and `μ = μ_TV`.
pub fn gtrss_as_krr(p: &GtrssProblem) -> Result<KrrModel> {
    let kernel = ProductKernel::new(
        GraphKernel::sobolev_inverse(p.graph.clone(), p.alpha, p.beta)?,
        TimeKernel::gtrss(p.steps(), p.delta0)?,
    );
    fit_krr(&kernel, &p.samples(), p.mu_tv)
}

/// Largest `|KRR prediction − GTRSS solution|` over all vertex-time entries.
pub fn gtrss_as_krr_check(p: &GtrssProblem) -> Result<f64> {
    let direct = solve_gtrss(p)?;
    let model = gtrss_as_krr(p)?;
    let mut worst = 0.0f64;
    for t in 0..p.steps() {
        for v in 0..p.mask.nrows() {
            worst = worst.max((model.predict(v, (t + 1) as f64)? - direct[(v, t)]).abs());
        }
    }
    Ok(worst)
}

/// Streaming smoother updated with
/// `f ← f − μ(m⊙f − y) − μλ(L + αI)^β (f − f_prev)`.
#[derive(Debug, Clone)]
pub struct OnlineGtrss {
    smoother: DMatrix<f64>,
    mu: f64,
    lambda: f64,
    iterations: usize,
}

impl OnlineGtrss {
    /// `iterations` is the number of updates per date.
    pub fn new(graph: &Graph, mu: f64, lambda: f64, alpha: f64, beta: f64, iterations: usize) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) || !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("need mu > 0 and lambda >= 0, got {mu}, {lambda}")));
        }
        Ok(OnlineGtrss { smoother: sobolev_power(graph, alpha, beta)?, mu, lambda, iterations })
    }

    pub fn step(
        &self,
        state: &DVector<f64>,
        prev: &DVector<f64>,
        mask: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = self.smoother.nrows();
        if [state.len(), prev.len(), mask.len(), y.len()].iter().any(|&l| l != n) {
            return Err(Error::DimensionMismatch(format!("online GTRSS vectors must have length {n}")));
        }
        let data = mask.component_mul(state) - y;
        let smooth = &self.smoother * (state - prev);
        Ok(state - data * self.mu - smooth * (self.mu * self.lambda))
    }

    /// Estimate for one date, warm-started from the previous date's estimate.
    pub fn run_date(&self, prev: &DVector<f64>, mask: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let mut state = prev.clone();
        for _ in 0..self.iterations {
            state = self.step(&state, prev, mask, y)?;
        }
        Ok(state)
    }

    /// Fixed point of [`Self::step`]: `(diag(m) + λS)f = y + λS f_prev`.
    pub fn fixed_point(&self, prev: &DVector<f64>, mask: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let mut system = &self.smoother * self.lambda;
        for (i, m) in mask.iter().enumerate() {
            system[(i, i)] += m;
        }
        let rhs = y + &self.smoother * prev * self.lambda;
        system.lu().solve(&rhs).ok_or(Error::SingularSystem)
    }

    /// Process a sequence of dates; column `t` of the result is date `t`.
    pub fn run(&self, masks: &DMatrix<f64>, observations: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(masks.nrows(), masks.ncols());
        let mut prev = DVector::zeros(masks.nrows());
        for t in 0..masks.ncols() {
            prev = self.run_date(&prev, &masks.column(t).into_owned(), &observations.column(t).into_owned())?;
            out.set_column(t, &prev);
        }
        Ok(out)
    }
}

/// One scalar-kernel KRR per vertex, each fit on that vertex's samples only.
#[derive(Debug, Clone)]
pub struct IsolatedKrr {
    models: Vec<KrrModel>,
}

pub fn isolated_krr(
    samples: &SampleSet,
    time_kernel: &TimeKernel,
    n_vertices: usize,
    mu: f64,
) -> Result<IsolatedKrr> {
    let single = Arc::new(Graph::from_edges(1, &[])?);
    let kernel = ProductKernel::new(GraphKernel::identity(single)?, time_kernel.clone());
    if let Some(s) = samples.iter().find(|s| s.vertex >= n_vertices) {
        return Err(Error::InvalidVertex { vertex: s.vertex, n: n_vertices });
    }
    let models = (0..n_vertices)
        .map(|v| {
            let own: SampleSet =
                samples.iter().filter(|s| s.vertex == v).map(|s| Sample::new(0, s.time, s.value)).collect();
            fit_krr(&kernel, &own, mu)
        })
        .collect::<Result<_>>()?;
    Ok(IsolatedKrr { models })
}

impl IsolatedKrr {
    pub fn predict(&self, v: usize, t: f64) -> Result<f64> {
        let model = self.models.get(v).ok_or(Error::InvalidVertex { vertex: v, n: self.models.len() })?;
        model.predict(0, t)
    }

    pub fn model(&self, v: usize) -> Option<&KrrModel> {
        self.models.get(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::TimeDomain;

    fn problem(mask: DMatrix<f64>, obs: DMatrix<f64>, mu: f64) -> GtrssProblem {
        let graph = Arc::new(Graph::path(mask.nrows()).unwrap());
        GtrssProblem::new(graph, mask, obs, mu, 0.5, 1.0, 1e-5).unwrap()
    }

    #[test]
    fn zero_observations_give_zero() {
        let p = problem(DMatrix::from_element(3, 4, 1.0), DMatrix::zeros(3, 4), 1.0);
        assert_eq!(solve_gtrss(&p).unwrap(), DMatrix::zeros(3, 4));
    }

    #[test]
    fn tiny_penalty_reproduces_data() {
        let obs = DMatrix::from_fn(3, 4, |i, j| (i as f64) - 0.5 * j as f64);
        let p = problem(DMatrix::from_element(3, 4, 1.0), obs.clone(), 1e-10);
        assert!((solve_gtrss(&p).unwrap() - obs).amax() < 1e-6);
    }

    #[test]
    fn empty_mask_matches_krr_trivially() {
        let p = problem(DMatrix::zeros(2, 3), DMatrix::zeros(2, 3), 1.0);
        assert_eq!(gtrss_as_krr_check(&p).unwrap(), 0.0);
    }

    #[test]
    fn full_mask_small_instance_matches_krr() {
        let obs = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 2.0, 0.3, 0.0, -1.2]);
        let p = problem(DMatrix::from_element(2, 3, 1.0), obs, 1.0);
        assert!(gtrss_as_krr_check(&p).unwrap() <= 1e-8);
    }

    #[test]
    fn rejects_observations_off_mask() {
        let graph = Arc::new(Graph::path(2).unwrap());
        let mask = DMatrix::zeros(2, 2);
        let obs = DMatrix::from_element(2, 2, 1.0);
        assert!(GtrssProblem::new(graph, mask, obs, 1.0, 0.5, 1.0, 1e-5).is_err());
    }

    #[test]
    fn online_fixed_point_is_stationary() {
        let graph = Graph::path(3).unwrap();
        let online = OnlineGtrss::new(&graph, 0.1, 0.5, 0.5, 1.0, 10).unwrap();
        let f = DVector::from_vec(vec![0.2, -0.1, 0.4]);
        let mask = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        let y = mask.component_mul(&f);
        assert_eq!(online.step(&f, &f, &mask, &y).unwrap(), f);
    }

    #[test]
    fn online_without_smoothing_is_masked_gradient() {
        let graph = Graph::path(2).unwrap();
        let online = OnlineGtrss::new(&graph, 0.25, 0.0, 0.5, 1.0, 1).unwrap();
        let state = DVector::from_vec(vec![1.0, 2.0]);
        let prev = DVector::from_vec(vec![5.0, -3.0]);
        let mask = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![3.0, 0.0]);
        let next = online.step(&state, &prev, &mask, &y).unwrap();
        assert_eq!(next, DVector::from_vec(vec![1.5, 2.0]));
    }

    #[test]
    fn isolated_vertex_without_samples_predicts_zero() {
        let tk = TimeKernel::gaussian(0.2, TimeDomain::unit()).unwrap();
        let samples = SampleSet::from_triples(&[(0, 0.3, 1.0)]);
        let iso = isolated_krr(&samples, &tk, 2, 0.1).unwrap();
        assert_eq!(iso.predict(1, 0.3).unwrap(), 0.0);
        assert!(iso.predict(0, 0.3).unwrap() > 0.0);
    }
}
