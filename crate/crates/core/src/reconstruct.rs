//! Batch kernel ridge regression over (vertex, time) samples and the
//! matching Gaussian-process posterior.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDoc};
use crate::hexfloat;
use crate::kernels::{KernelSpec, ProductKernel, TimeKernel};
use crate::linalg;

/// One observation `y_m` at `(v_m, t_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub vertex: usize,
    #[serde(with = "hexfloat::scalar")]
    pub time: f64,
    #[serde(with = "hexfloat::scalar")]
    pub value: f64,
}

impl Sample {
    pub fn new(vertex: usize, time: f64, value: f64) -> Self {
        Sample { vertex, time, value }
    }
}

/// Ordered observations. Duplicated points are kept as repeated measurements.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleSet {
    samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(samples: Vec<Sample>) -> Self {
        SampleSet { samples }
    }

    pub fn from_triples(triples: &[(usize, f64, f64)]) -> Self {
        SampleSet { samples: triples.iter().map(|&(v, t, y)| Sample::new(v, t, y)).collect() }
    }

    pub fn push(&mut self, sample: Sample) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn as_slice(&self) -> &[Sample] {
        &self.samples
    }

    pub fn values(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.samples.iter().map(|s| s.value))
    }

    pub fn validate(&self, kernel: &ProductKernel) -> Result<()> {
        self.samples.iter().try_for_each(|s| kernel.check_point(s.vertex, s.time))
    }

    /// Samples lying on vertex `v`.
    pub fn on_vertex(&self, v: usize) -> SampleSet {
        SampleSet { samples: self.samples.iter().filter(|s| s.vertex == v).copied().collect() }
    }
}

impl FromIterator<Sample> for SampleSet {
    fn from_iter<I: IntoIterator<Item = Sample>>(iter: I) -> Self {
        SampleSet { samples: iter.into_iter().collect() }
    }
}

impl<'a> IntoIterator for &'a SampleSet {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// `K(S,S)` with entries `K_G(v_m, v_m')·k_T(t_m, t_m')`.
pub fn assemble_gram(kernel: &ProductKernel, samples: &SampleSet) -> Result<DMatrix<f64>> {
    samples.validate(kernel)?;
    Ok(gram_unchecked(kernel, samples.as_slice()))
}

fn gram_unchecked(kernel: &ProductKernel, samples: &[Sample]) -> DMatrix<f64> {
    let m = samples.len();
    let mut k = DMatrix::zeros(m, m);
    for j in 0..m {
        let b = samples[j];
        for i in j..m {
            let a = samples[i];
            let value = kernel.eval_unchecked(a.vertex, a.time, b.vertex, b.time);
            k[(i, j)] = value;
            k[(j, i)] = value;
        }
    }
    k
}

fn cross_unchecked(kernel: &ProductKernel, samples: &[Sample], v: usize, t: f64) -> DVector<f64> {
    DVector::from_iterator(
        samples.len(),
        samples.iter().map(|s| kernel.eval_unchecked(v, t, s.vertex, s.time)),
    )
}

/// Fitted KRR expansion `f̂ = Σ_m c_m k(·, (v_m, t_m))`.
#[derive(Debug, Clone)]
pub struct KrrModel {
    kernel: ProductKernel,
    samples: SampleSet,
    coefficients: DVector<f64>,
    ridge: f64,
}

/// Solve `(K(S,S) + μI)c = y`. `M = 0` gives the zero model.
pub fn fit_krr(kernel: &ProductKernel, samples: &SampleSet, mu: f64) -> Result<KrrModel> {
    fit_with_factor(kernel, samples, mu).map(|(model, _)| model)
}

fn fit_with_factor(
    kernel: &ProductKernel,
    samples: &SampleSet,
    mu: f64,
) -> Result<(KrrModel, Option<Cholesky<f64, Dyn>>)> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::param(format!("ridge mu = {mu} must be positive")));
    }
    samples.validate(kernel)?;
    let model = |coefficients| KrrModel {
        kernel: kernel.clone(),
        samples: samples.clone(),
        coefficients,
        ridge: mu,
    };
    if samples.is_empty() {
        return Ok((model(DVector::zeros(0)), None));
    }
    let gram = gram_unchecked(kernel, samples.as_slice());
    let factor = linalg::factor_regularized(&gram, mu)?;
    let coefficients = factor.solve(&samples.values());
    Ok((model(coefficients), Some(factor)))
}

impl KrrModel {
    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn predict(&self, v: usize, t: f64) -> Result<f64> {
        self.kernel.check_point(v, t)?;
        Ok(self
            .samples
            .iter()
            .zip(self.coefficients.iter())
            .map(|(s, c)| c * self.kernel.eval_unchecked(v, t, s.vertex, s.time))
            .sum())
    }

    /// Sum restricted to samples within `L` hops of `v`, where `L` is the
    /// polynomial degree of the graph kernel.
    pub fn predict_localized(&self, v: usize, t: f64) -> Result<f64> {
        let degree = self.kernel.graph.poly_degree().ok_or(Error::NoPolyDegree)?;
        self.kernel.check_point(v, t)?;
        let hops = self.kernel.graph.graph().hops();
        Ok(self
            .samples
            .iter()
            .zip(self.coefficients.iter())
            .filter(|(s, _)| hops.dist(v, s.vertex) <= degree)
            .map(|(s, c)| c * self.kernel.eval_unchecked(v, t, s.vertex, s.time))
            .sum())
    }

    /// `‖(K + μI)c − y‖`.
    pub fn residual_norm(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let mut k = gram_unchecked(&self.kernel, self.samples.as_slice());
        for i in 0..k.nrows() {
            k[(i, i)] += self.ridge;
        }
        (k * &self.coefficients - self.samples.values()).norm()
    }

    pub fn to_doc(&self) -> ModelDoc {
        ModelDoc {
            graph: self.kernel.graph.graph().to_doc(),
            kernel: self.kernel.spec(),
            ridge: self.ridge,
            samples: self.samples.clone(),
            coefficients: self.coefficients.iter().copied().collect(),
        }
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Self> {
        let graph = Arc::new(Graph::from_doc(&doc.graph)?);
        let kernel = doc.kernel.build(graph)?;
        if doc.coefficients.len() != doc.samples.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} samples",
                doc.coefficients.len(),
                doc.samples.len()
            )));
        }
        doc.samples.validate(&kernel)?;
        Ok(KrrModel {
            kernel,
            samples: doc.samples.clone(),
            coefficients: DVector::from_vec(doc.coefficients.clone()),
            ridge: doc.ridge,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Persisted model. Floats outside the kernel spec are hex-encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub graph: GraphDoc,
    pub kernel: KernelSpec,
    #[serde(with = "hexfloat::scalar")]
    pub ridge: f64,
    pub samples: SampleSet,
    #[serde(with = "hexfloat::vec")]
    pub coefficients: Vec<f64>,
}

/// Observation noise of the Gaussian model, `σ² > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorQuery {
    noise_variance: f64,
}

impl PosteriorQuery {
    pub fn new(noise_variance: f64) -> Result<Self> {
        if !(noise_variance.is_finite() && noise_variance > 0.0) {
            return Err(Error::param(format!("noise variance {noise_variance} must be positive")));
        }
        Ok(PosteriorQuery { noise_variance })
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }
}

const VARIANCE_SLACK: f64 = 1e-10;

fn clamp_variance(prior: f64, raw: f64) -> Result<f64> {
    let slack = VARIANCE_SLACK * prior.abs().max(1.0);
    if raw < -slack || raw > prior + slack {
        return Err(Error::NegativeVariance(raw));
    }
    Ok(raw.clamp(0.0, prior.max(0.0)))
}

/// GP posterior under prior `GP(0, k)` and noise `σ²`, factoring
/// `K(S,S) + σ²I` once for any number of queries.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    model: KrrModel,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl GpPosterior {
    pub fn new(kernel: &ProductKernel, samples: &SampleSet, q: PosteriorQuery) -> Result<Self> {
        let (model, factor) = fit_with_factor(kernel, samples, q.noise_variance)?;
        Ok(GpPosterior { model, factor })
    }

    /// The KRR model with `μ = σ²` whose predictions are the posterior mean.
    pub fn model(&self) -> &KrrModel {
        &self.model
    }

    pub fn mean(&self, v: usize, t: f64) -> Result<f64> {
        self.model.predict(v, t)
    }

    pub fn variance(&self, v: usize, t: f64) -> Result<f64> {
        let kernel = &self.model.kernel;
        kernel.check_point(v, t)?;
        let prior = kernel.eval_unchecked(v, t, v, t);
        let Some(factor) = &self.factor else {
            return Ok(prior);
        };
        let mut w = cross_unchecked(kernel, self.model.samples.as_slice(), v, t);
        factor.l_dirty().solve_lower_triangular_mut(&mut w);
        clamp_variance(prior, prior - w.norm_squared())
    }
}

pub fn posterior_mean(
    kernel: &ProductKernel,
    samples: &SampleSet,
    q: PosteriorQuery,
    v: usize,
    t: f64,
) -> Result<f64> {
    fit_krr(kernel, samples, q.noise_variance)?.predict(v, t)
}

/// `k(x,x) − kᵀ(K(S,S) + σ²I)⁻¹k` at `x = (v,t)`.
///
/// Laplacian time kernels take the exact state-space route of
/// [`posterior_variance_markov`], which is linear in `M`; all other kernels
/// use the dense factorization of [`posterior_variance_dense`].
pub fn posterior_variance(
    kernel: &ProductKernel,
    samples: &SampleSet,
    q: PosteriorQuery,
    v: usize,
    t: f64,
) -> Result<f64> {
    match kernel.time {
        TimeKernel::LaplacianRbf { .. } => posterior_variance_markov(kernel, samples, q, v, t),
        _ => posterior_variance_dense(kernel, samples, q, v, t),
    }
}

pub fn posterior_variance_dense(
    kernel: &ProductKernel,
    samples: &SampleSet,
    q: PosteriorQuery,
    v: usize,
    t: f64,
) -> Result<f64> {
    kernel.check_point(v, t)?;
    samples.validate(kernel)?;
    let prior = kernel.eval_unchecked(v, t, v, t);
    if samples.is_empty() {
        return Ok(prior);
    }
    let gram = gram_unchecked(kernel, samples.as_slice());
    let factor = linalg::factor_regularized(&gram, q.noise_variance)?;
    let mut w = cross_unchecked(kernel, samples.as_slice(), v, t);
    factor.l_dirty().solve_lower_triangular_mut(&mut w);
    clamp_variance(prior, prior - w.norm_squared())
}

/// Posterior variance for `k_T(s,t) = exp(−|s−t|/γ)` by Kalman filtering.
///
/// Under this kernel the vertex vector `x(t) ∈ ℝᴺ` is a stationary
/// Ornstein–Uhlenbeck process with covariance `K_G`:
/// `x(t+Δ) = e^{−Δ/γ}x(t) + w`, `Cov(w) = (1 − e^{−2Δ/γ})K_G`. The filter
/// runs over samples in time order; on reaching `t` the state is augmented
/// with a frozen copy of `x_v(t)`, so its final variance is the smoothed
/// posterior variance. Cost is `O(M N²)`.
pub fn posterior_variance_markov(
    kernel: &ProductKernel,
    samples: &SampleSet,
    q: PosteriorQuery,
    v: usize,
    t: f64,
) -> Result<f64> {
    let TimeKernel::LaplacianRbf { gamma, .. } = kernel.time else {
        return Err(Error::UnsupportedKernel);
    };
    kernel.check_point(v, t)?;
    samples.validate(kernel)?;
    let kg = kernel.graph.matrix();
    let n = kg.nrows();
    let prior = kg[(v, v)];

    let mut order: Vec<&Sample> = samples.iter().collect();
    order.sort_by(|a, b| a.time.total_cmp(&b.time));

    // Index n is the frozen query component once `augmented` is set.
    let mut p = DMatrix::zeros(n + 1, n + 1);
    p.view_mut((0, 0), (n, n)).copy_from(kg);
    let mut now = order.first().map_or(t, |s| s.time.min(t));
    let mut augmented = false;
    let sigma2 = q.noise_variance;

    let propagate = |p: &mut DMatrix<f64>, dt: f64| {
        if dt <= 0.0 {
            return;
        }
        let a = (-dt / gamma).exp();
        let fresh = 1.0 - a * a;
        for i in 0..=n {
            for j in 0..=n {
                let si = if i < n { a } else { 1.0 };
                let sj = if j < n { a } else { 1.0 };
                p[(i, j)] *= si * sj;
                if i < n && j < n {
                    p[(i, j)] += fresh * kg[(i, j)];
                }
            }
        }
    };

    let augment = |p: &mut DMatrix<f64>| {
        for i in 0..n {
            p[(i, n)] = p[(i, v)];
            p[(n, i)] = p[(v, i)];
        }
        p[(n, n)] = p[(v, v)];
    };

    for s in order {
        if !augmented && s.time >= t {
            propagate(&mut p, t - now);
            now = t;
            augment(&mut p);
            augmented = true;
        }
        propagate(&mut p, s.time - now);
        now = s.time;
        let u = s.vertex;
        let innovation = p[(u, u)] + sigma2;
        let gain = p.column(u) / innovation;
        let row = p.row(u).clone_owned();
        p -= gain * row;
        linalg::symmetrize(&mut p);
    }
    if !augmented {
        propagate(&mut p, t - now);
        augment(&mut p);
    }
    clamp_variance(prior, p[(n, n)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GraphKernel;
    use crate::quadrature::TimeDomain;

    fn p2_kernel(b: f64) -> ProductKernel {
        let graph = Arc::new(Graph::path(2).unwrap());
        ProductKernel::new(
            GraphKernel::quadratic(graph, b).unwrap(),
            TimeKernel::gaussian(0.5, TimeDomain::unit()).unwrap(),
        )
    }

    #[test]
    fn single_sample_fit_is_scalar_inverse() {
        let k = p2_kernel(0.3);
        let samples = SampleSet::from_triples(&[(1, 0.4, 2.0)]);
        let k0 = k.eval(1, 0.4, 1, 0.4).unwrap();
        let model = fit_krr(&k, &samples, 0.1).unwrap();
        assert!((model.coefficients()[0] - 2.0 / (k0 + 0.1)).abs() < 1e-15);
        let own = model.predict(1, 0.4).unwrap();
        assert!((own - k0 * 2.0 / (k0 + 0.1)).abs() < 1e-14);
    }

    #[test]
    fn empty_model_predicts_zero_and_prior_variance() {
        let k = p2_kernel(0.3);
        let samples = SampleSet::default();
        assert_eq!(fit_krr(&k, &samples, 0.1).unwrap().predict(0, 0.2).unwrap(), 0.0);
        let q = PosteriorQuery::new(0.1).unwrap();
        let prior = k.eval(0, 0.2, 0, 0.2).unwrap();
        assert_eq!(posterior_variance(&k, &samples, q, 0, 0.2).unwrap(), prior);
        assert_eq!(posterior_mean(&k, &samples, q, 0, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn zero_targets_give_zero_coefficients() {
        let k = p2_kernel(0.5);
        let samples = SampleSet::from_triples(&[(0, 0.1, 0.0), (1, 0.9, 0.0)]);
        let model = fit_krr(&k, &samples, 1.0).unwrap();
        assert!(model.coefficients().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn single_sample_variance_formula() {
        let k = p2_kernel(0.2);
        let samples = SampleSet::from_triples(&[(0, 0.5, 1.0)]);
        let q = PosteriorQuery::new(0.3).unwrap();
        let k0 = k.eval(0, 0.5, 0, 0.5).unwrap();
        let var = posterior_variance(&k, &samples, q, 0, 0.5).unwrap();
        assert!((var - k0 * 0.3 / (k0 + 0.3)).abs() < 1e-14);
    }

    #[test]
    fn duplicate_points_give_rank_one_gram() {
        let k = p2_kernel(0.2);
        let samples = SampleSet::from_triples(&[(0, 0.5, 1.0), (0, 0.5, 1.0)]);
        let g = assemble_gram(&k, &samples).unwrap();
        assert!(g.iter().all(|&x| x == g[(0, 0)]));
    }

    #[test]
    fn out_of_domain_rejected() {
        let k = p2_kernel(0.2);
        let samples = SampleSet::from_triples(&[(0, 1.5, 1.0)]);
        assert!(matches!(fit_krr(&k, &samples, 0.1), Err(Error::OutOfDomain(..))));
        let model = fit_krr(&k, &SampleSet::default(), 0.1).unwrap();
        assert!(matches!(model.predict(0, -0.1), Err(Error::OutOfDomain(..))));
        assert!(matches!(model.predict(2, 0.1), Err(Error::InvalidVertex { .. })));
    }

    #[test]
    fn localized_requires_polynomial_kernel() {
        let graph = Arc::new(Graph::path(2).unwrap());
        let k = ProductKernel::new(
            GraphKernel::spectral(graph, &[1.0, 0.5]).unwrap(),
            TimeKernel::gaussian(0.5, TimeDomain::unit()).unwrap(),
        );
        let model = fit_krr(&k, &SampleSet::from_triples(&[(0, 0.2, 1.0)]), 0.1).unwrap();
        assert!(matches!(model.predict_localized(0, 0.2), Err(Error::NoPolyDegree)));
    }

    #[test]
    fn markov_route_matches_dense() {
        let graph = Arc::new(Graph::path(3).unwrap());
        let k = ProductKernel::new(
            GraphKernel::quadratic(graph, 0.4).unwrap(),
            TimeKernel::laplacian(0.3, TimeDomain::unit()).unwrap(),
        );
        let samples = SampleSet::from_triples(&[
            (0, 0.9, 0.0),
            (2, 0.1, 0.0),
            (1, 0.5, 0.0),
            (0, 0.5, 0.0),
            (2, 0.7, 0.0),
        ]);
        let q = PosteriorQuery::new(0.05).unwrap();
        for (v, t) in [(1, 0.3), (0, 0.0), (2, 1.0), (1, 0.5), (0, 0.95)] {
            let dense = posterior_variance_dense(&k, &samples, q, v, t).unwrap();
            let markov = posterior_variance_markov(&k, &samples, q, v, t).unwrap();
            assert!((dense - markov).abs() < 1e-12, "{v} {t}: {dense} vs {markov}");
        }
    }

    #[test]
    fn variance_clamp_slack() {
        assert_eq!(clamp_variance(1.0, -1e-12).unwrap(), 0.0);
        assert!(matches!(clamp_variance(1.0, -1e-6), Err(Error::NegativeVariance(_))));
    }
}
