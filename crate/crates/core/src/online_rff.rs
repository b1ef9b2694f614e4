//! Random Fourier features for the product kernel and the streaming SGD
//! predictor built on them.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDoc};
use crate::hexfloat;
use crate::kernels::{KernelSpec, ProductKernel, TimeKernel};
use crate::reconstruct::SampleSet;

/// `η(v,t) = p_v ⊗ z(t)` with `z(t) = √(2/F)·cos(ωt + b)`.
#[derive(Debug, Clone)]
pub struct RffFeatureMap {
    kernel: ProductKernel,
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    sqrt_graph: DMatrix<f64>,
    sqrt_degree: Option<usize>,
    seed: u64,
    stream: u64,
}

impl RffFeatureMap {
    pub fn new(kernel: &ProductKernel, features: usize, seed: u64) -> Result<Self> {
        Self::with_stream(kernel, features, seed, 0)
    }

    /// Draw from stream `stream` of the ChaCha generator seeded by `seed`.
    pub fn with_stream(kernel: &ProductKernel, features: usize, seed: u64, stream: u64) -> Result<Self> {
        if features == 0 {
            return Err(Error::param("feature count F must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let frequencies: Vec<f64> = match kernel.time {
            TimeKernel::GaussianRbf { gamma, .. } => {
                let normal = Normal::new(0.0, (2.0 / gamma).sqrt())
                    .map_err(|e| Error::param(e.to_string()))?;
                normal.sample_iter(&mut rng).take(features).collect()
            }
            TimeKernel::LaplacianRbf { gamma, .. } => {
                let cauchy = Cauchy::new(0.0, 1.0 / gamma).map_err(|e| Error::param(e.to_string()))?;
                cauchy.sample_iter(&mut rng).take(features).collect()
            }
            _ => return Err(Error::UnsupportedKernel),
        };
        let phases = (0..features).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Ok(RffFeatureMap {
            kernel: kernel.clone(),
            frequencies,
            phases,
            sqrt_graph: kernel.graph.sqrt_matrix().clone(),
            sqrt_degree: kernel.graph.sqrt_poly_degree(),
            seed,
            stream,
        })
    }

    pub fn n_features(&self) -> usize {
        self.frequencies.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.sqrt_graph.nrows()
    }

    /// Length `N·F` of `η`.
    pub fn dim(&self) -> usize {
        self.n_vertices() * self.n_features()
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn sqrt_degree(&self) -> Option<usize> {
        self.sqrt_degree
    }

    /// `K_G^{1/2}(u, v)`, the `u`-th entry of `p_v`.
    pub fn sqrt_entry(&self, u: usize, v: usize) -> f64 {
        self.sqrt_graph[(u, v)]
    }

    pub fn time_features(&self, t: f64) -> Result<DVector<f64>> {
        self.kernel.time.check(t)?;
        Ok(self.time_features_unchecked(t))
    }

    fn time_features_unchecked(&self, t: f64) -> DVector<f64> {
        let scale = (2.0 / self.n_features() as f64).sqrt();
        DVector::from_iterator(
            self.n_features(),
            self.frequencies.iter().zip(&self.phases).map(|(w, b)| scale * (w * t + b).cos()),
        )
    }

    fn in_support(&self, u: usize, v: usize) -> bool {
        match self.sqrt_degree {
            Some(l) => self.kernel.graph.graph().hops().dist(u, v) <= l,
            None => true,
        }
    }

    /// `η(v,t)`; block `u` is `p_{u,v}·z(t)` and is exactly zero outside the
    /// `L₀`-hop support when the square root is a polynomial of degree `L₀`.
    pub fn features(&self, v: usize, t: f64) -> Result<DVector<f64>> {
        self.kernel.check_point(v, t)?;
        let z = self.time_features_unchecked(t);
        let f = self.n_features();
        let mut eta = DVector::zeros(self.dim());
        for u in 0..self.n_vertices() {
            if !self.in_support(u, v) {
                continue;
            }
            let p = self.sqrt_graph[(u, v)];
            eta.rows_mut(u * f, f).axpy(p, &z, 0.0);
        }
        Ok(eta)
    }

    /// `‖η(v,t)‖² = ‖p_v‖²·‖z(t)‖²`.
    pub fn feature_norm_sq(&self, v: usize, t: f64) -> Result<f64> {
        Ok(self.features(v, t)?.norm_squared())
    }
}

/// SGD on `q(c) = Σ_m (cᵀη_m − y_m)² + μ‖c‖²`, one sample per step:
/// `c ← θ₁c + θ₂·ê·η` with `θ₁ = 1 − 2θμ/M`, `θ₂ = 2θ`.
///
/// Updates take `&mut self`; wrap in a lock to share between a writer and
/// concurrent readers.
#[derive(Debug, Clone)]
pub struct RffPredictor {
    map: RffFeatureMap,
    weights: DVector<f64>,
    ridge: f64,
    horizon: usize,
    step: f64,
    updates: u64,
}

impl RffPredictor {
    pub fn new(map: RffFeatureMap, ridge: f64, horizon: usize, step: f64) -> Result<Self> {
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::param(format!("ridge mu = {ridge} must be nonnegative")));
        }
        if horizon == 0 {
            return Err(Error::param("horizon M must be at least 1"));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::param(format!("step theta = {step} must be positive")));
        }
        let theta1 = 1.0 - 2.0 * step * ridge / horizon as f64;
        if theta1 <= 0.0 {
            return Err(Error::StepTooLarge(theta1));
        }
        let weights = DVector::zeros(map.dim());
        Ok(RffPredictor { map, weights, ridge, horizon, step, updates: 0 })
    }

    /// `θ = 0.05 / max_m ‖η(v_m, t_m)‖²`.
    pub fn default_step(map: &RffFeatureMap, samples: &SampleSet) -> Result<f64> {
        let mut max = 0.0f64;
        for s in samples {
            max = max.max(map.feature_norm_sq(s.vertex, s.time)?);
        }
        if max <= 0.0 {
            return Err(Error::param("cannot derive a default step from zero features"));
        }
        Ok(0.05 / max)
    }

    pub fn map(&self) -> &RffFeatureMap {
        &self.map
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: DVector<f64>) -> Result<()> {
        if weights.len() != self.map.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for feature dimension {}",
                weights.len(),
                self.map.dim()
            )));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn theta1(&self) -> f64 {
        1.0 - 2.0 * self.step * self.ridge / self.horizon as f64
    }

    pub fn theta2(&self) -> f64 {
        2.0 * self.step
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn predict(&self, v: usize, t: f64) -> Result<f64> {
        Ok(self.weights.dot(&self.map.features(v, t)?))
    }

    /// `Σ_{u ∈ N̄_{L₀}(v)} c_uᵀ p_{u,v} z(t)`.
    pub fn predict_localized(&self, v: usize, t: f64) -> Result<f64> {
        let degree = self.map.sqrt_degree.ok_or(Error::NoPolyDegree)?;
        self.map.kernel.check_point(v, t)?;
        let z = self.map.time_features_unchecked(t);
        let f = self.map.n_features();
        let hops = self.map.kernel.graph.graph().hops();
        Ok((0..self.map.n_vertices())
            .filter(|&u| hops.dist(u, v) <= degree)
            .map(|u| self.map.sqrt_graph[(u, v)] * self.weights.rows(u * f, f).dot(&z))
            .sum())
    }

    /// Predict at `(v,t)` before seeing `y`, then update. Returns the
    /// prediction and the error `ê = y − prediction`.
    pub fn sgd_step(&mut self, v: usize, t: f64, y: f64) -> Result<(f64, f64)> {
        let eta = self.map.features(v, t)?;
        let prediction = self.weights.dot(&eta);
        let error = y - prediction;
        let (theta1, theta2) = (self.theta1(), self.theta2());
        self.weights.axpy(theta2 * error, &eta, theta1);
        self.updates += 1;
        Ok((prediction, error))
    }

    /// `q(c)` over `samples`.
    pub fn objective(&self, samples: &SampleSet) -> Result<f64> {
        let mut total = self.ridge * self.weights.norm_squared();
        for s in samples {
            let r = self.predict(s.vertex, s.time)? - s.value;
            total += r * r;
        }
        Ok(total)
    }

    /// `q_m(c) = (cᵀη_m − y_m)² + (μ/M)‖c‖²`.
    pub fn sample_objective(&self, v: usize, t: f64, y: f64) -> Result<f64> {
        let r = self.predict(v, t)? - y;
        Ok(r * r + self.ridge / self.horizon as f64 * self.weights.norm_squared())
    }

    pub fn to_doc(&self) -> RffCheckpoint {
        RffCheckpoint {
            seed: self.map.seed,
            stream: self.map.stream,
            features: self.map.n_features(),
            graph: self.map.kernel.graph.graph().to_doc(),
            kernel: self.map.kernel.spec(),
            ridge: self.ridge,
            horizon: self.horizon,
            step: self.step,
            update_count: self.updates,
            weights: self.weights.iter().copied().collect(),
        }
    }

    pub fn from_doc(doc: &RffCheckpoint) -> Result<Self> {
        let graph = Arc::new(Graph::from_doc(&doc.graph)?);
        let kernel = doc.kernel.build(graph)?;
        let map = RffFeatureMap::with_stream(&kernel, doc.features, doc.seed, doc.stream)?;
        let mut predictor = RffPredictor::new(map, doc.ridge, doc.horizon, doc.step)?;
        predictor.set_weights(DVector::from_vec(doc.weights.clone()))?;
        predictor.updates = doc.update_count;
        Ok(predictor)
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

/// Persisted predictor; features are regenerated from `(seed, stream)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffCheckpoint {
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    #[serde(rename = "F")]
    pub features: usize,
    pub graph: GraphDoc,
    pub kernel: KernelSpec,
    #[serde(with = "hexfloat::scalar")]
    pub ridge: f64,
    pub horizon: usize,
    #[serde(with = "hexfloat::scalar")]
    pub step: f64,
    pub update_count: u64,
    #[serde(with = "hexfloat::vec")]
    pub weights: Vec<f64>,
}

/// Closed-form minimizer of `q(c)` for a fixed feature map:
/// `(HᵀH + μI)c = Hᵀy` with rows `η_mᵀ` of `H`.
pub fn ridge_optimum(map: &RffFeatureMap, samples: &SampleSet, ridge: f64) -> Result<DVector<f64>> {
    let dim = map.dim();
    let mut h = DMatrix::zeros(samples.len(), dim);
    for (m, s) in samples.iter().enumerate() {
        h.row_mut(m).copy_from(&map.features(s.vertex, s.time)?.transpose());
    }
    let mut normal = h.transpose() * &h;
    for i in 0..dim {
        normal[(i, i)] += ridge;
    }
    let rhs = h.transpose() * samples.values();
    let chol = nalgebra::Cholesky::new(normal).ok_or(Error::SolveFailure)?;
    Ok(chol.solve(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GraphKernel;
    use crate::quadrature::TimeDomain;

    fn kernel(graph_kernel: impl Fn(Arc<Graph>) -> Result<GraphKernel>) -> ProductKernel {
        let graph = Arc::new(Graph::path(4).unwrap());
        ProductKernel::new(
            graph_kernel(graph).unwrap(),
            TimeKernel::gaussian(1.0, TimeDomain::unit()).unwrap(),
        )
    }

    #[test]
    fn same_seed_same_features() {
        let k = kernel(|g| GraphKernel::quadratic(g, 0.3));
        let a = RffFeatureMap::new(&k, 16, 7).unwrap();
        let b = RffFeatureMap::new(&k, 16, 7).unwrap();
        assert_eq!(a.frequencies(), b.frequencies());
        assert_eq!(a.phases(), b.phases());
        let c = RffFeatureMap::with_stream(&k, 16, 7, 1).unwrap();
        assert_ne!(a.frequencies(), c.frequencies());
    }

    #[test]
    fn identity_graph_has_one_block() {
        let k = kernel(GraphKernel::identity);
        let map = RffFeatureMap::new(&k, 8, 1).unwrap();
        let eta = map.features(2, 0.3).unwrap();
        let z = map.time_features(0.3).unwrap();
        for u in 0..4 {
            let block = eta.rows(u * 8, 8);
            if u == 2 {
                assert_eq!(block.clone_owned(), z);
            } else {
                assert!(block.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn polynomial_sqrt_blocks_vanish_outside_support() {
        let k = kernel(|g| GraphKernel::quadratic(g, 0.0));
        assert_eq!(k.graph.sqrt_poly_degree(), Some(1));
        let map = RffFeatureMap::new(&k, 8, 3).unwrap();
        let eta = map.features(0, 0.5).unwrap();
        assert!(eta.rows(3 * 8, 8).iter().all(|&x| x == 0.0));
        assert!(eta.rows(2 * 8, 8).iter().all(|&x| x == 0.0));
        assert!(k.graph.sqrt_matrix()[(3, 0)].abs() < 1e-12);
    }

    #[test]
    fn unsupported_time_kernel() {
        let graph = Arc::new(Graph::path(2).unwrap());
        let k = ProductKernel::new(
            GraphKernel::identity(graph).unwrap(),
            TimeKernel::bandlimited(vec![1.0], TimeDomain::unit()).unwrap(),
        );
        assert!(matches!(RffFeatureMap::new(&k, 4, 0), Err(Error::UnsupportedKernel)));
    }

    #[test]
    fn first_step_from_zero() {
        let k = kernel(|g| GraphKernel::quadratic(g, 0.3));
        let map = RffFeatureMap::new(&k, 8, 5).unwrap();
        let eta = map.features(1, 0.2).unwrap();
        let mut p = RffPredictor::new(map, 0.1, 10, 0.01).unwrap();
        let (pred, err) = p.sgd_step(1, 0.2, 1.5).unwrap();
        assert_eq!((pred, err), (0.0, 1.5));
        let expected = eta * (2.0 * 0.01 * 1.5);
        assert!((p.weights() - expected).amax() < 1e-15);
        assert_eq!(p.update_count(), 1);
    }

    #[test]
    fn zero_error_without_ridge_keeps_weights() {
        let k = kernel(|g| GraphKernel::quadratic(g, 0.3));
        let map = RffFeatureMap::new(&k, 8, 5).unwrap();
        let mut p = RffPredictor::new(map, 0.0, 10, 0.01).unwrap();
        p.set_weights(DVector::from_fn(32, |i, _| i as f64 * 0.01)).unwrap();
        let before = p.weights().clone();
        let y = p.predict(2, 0.7).unwrap();
        let (_, err) = p.sgd_step(2, 0.7, y).unwrap();
        assert_eq!(err, 0.0);
        assert_eq!(p.weights(), &before);
    }

    #[test]
    fn step_too_large_rejected() {
        let k = kernel(|g| GraphKernel::quadratic(g, 0.3));
        let map = RffFeatureMap::new(&k, 4, 0).unwrap();
        assert!(matches!(RffPredictor::new(map, 1.0, 2, 1.0), Err(Error::StepTooLarge(_))));
    }

    #[test]
    fn localized_requires_sqrt_polynomial() {
        let k = kernel(|g| GraphKernel::quadratic(g, 0.3));
        let map = RffFeatureMap::new(&k, 4, 0).unwrap();
        let p = RffPredictor::new(map, 0.1, 10, 0.01).unwrap();
        assert!(matches!(p.predict_localized(0, 0.1), Err(Error::NoPolyDegree)));
    }

    #[test]
    fn objective_trivial_cases() {
        let k = kernel(|g| GraphKernel::quadratic(g, 0.0));
        let map = RffFeatureMap::new(&k, 4, 0).unwrap();
        let mut p = RffPredictor::new(map, 0.5, 10, 0.01).unwrap();
        let samples = SampleSet::from_triples(&[(0, 0.1, 2.0), (3, 0.4, -1.0)]);
        assert_eq!(p.objective(&samples).unwrap(), 5.0);
        p.set_weights(DVector::from_element(16, 0.5)).unwrap();
        assert!((p.objective(&SampleSet::default()).unwrap() - 0.5 * 4.0).abs() < 1e-15);
    }
}
