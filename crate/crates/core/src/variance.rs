//! Prior sampling on a time grid, uniform exclusive sampling plans, the
//! grid-conditioned limit variance and the neighborhood variance bound.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kernels::{neighborhood_residual, GraphKernel, ProductKernel};
use crate::linalg;
use crate::quadrature::{trapezoid_weights, TimeDomain};
use crate::reconstruct::{posterior_variance, GpPosterior, PosteriorQuery, Sample, SampleSet};

/// Relative eigenvalue cutoff of the grid pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Mix `(seed, index)` into an independent 64-bit seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The product kernel discretized on a uniform time grid.
///
/// Joint values are indexed vertex-major, `index = v·G + g`, so the joint
/// covariance is `K_G ⊗ K_T(grid)`.
#[derive(Debug, Clone)]
pub struct GpGrid {
    kernel: ProductKernel,
    times: Vec<f64>,
    weights: Vec<f64>,
    time_gram: DMatrix<f64>,
    factor: OnceLock<Option<DMatrix<f64>>>,
}

impl GpGrid {
    pub fn new(kernel: &ProductKernel, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::param("time grid needs at least 2 points"));
        }
        let times = kernel.domain().uniform_grid(points);
        for &t in &times {
            kernel.time.check(t)?;
        }
        let weights = trapezoid_weights(&times);
        let time_gram = kernel.time.gram(&times);
        Ok(GpGrid { kernel: kernel.clone(), times, weights, time_gram, factor: OnceLock::new() })
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn n_vertices(&self) -> usize {
        self.kernel.n_vertices()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn time_gram(&self) -> &DMatrix<f64> {
        &self.time_gram
    }

    pub fn index(&self, v: usize, g: usize) -> usize {
        v * self.n_times() + g
    }

    pub fn joint_cov(&self) -> DMatrix<f64> {
        self.kernel.graph.matrix().kronecker(&self.time_gram)
    }

    /// Lower factor `F` with `F Fᵀ = joint_cov + jitter·I`, jitter
    /// `1e-10·tr/NG` escalated ×10 up to three times when needed.
    pub fn factor(&self) -> Result<&DMatrix<f64>> {
        self.factor
            .get_or_init(|| {
                let cov = self.joint_cov();
                let base = PINV_CUTOFF * cov.trace() / cov.nrows() as f64;
                linalg::cholesky_with_jitter(&cov, base, 3).map(|(c, _)| c.unpack())
            })
            .as_ref()
            .ok_or(Error::FactorizationFailure)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let factor = self.factor()?;
        let xi = DVector::from_iterator(factor.nrows(), (0..factor.nrows()).map(|_| rng.sample(StandardNormal)));
        Ok(factor * xi)
    }

    /// One prior draw from the ChaCha stream seeded by `seed`.
    pub fn sample_seeded(&self, seed: u64) -> Result<DVector<f64>> {
        self.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Reshape a joint vector into the `N × G` matrix of vertex rows.
    pub fn as_matrix(&self, values: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_vertices(), self.n_times(), |v, g| values[self.index(v, g)])
    }
}

/// Grid-conditioned variance `Var(f(v₀, t_g) | f(v, ·) on the grid, v ≠ v₀)`.
///
/// The conditioning covariance is `K_G** ⊗ K_T` with `K_G**` the graph
/// kernel without row and column `v₀`; its eigenpairs are products of the
/// factor eigenpairs, and pairs with `λ_a μ_b ≤ cutoff·max` are dropped.
pub fn limit_variance_discretized(grid: &GpGrid, v0: usize, g: usize) -> Result<f64> {
    limit_variance_with_cutoff(grid, v0, g, PINV_CUTOFF)
}

pub fn limit_variance_with_cutoff(grid: &GpGrid, v0: usize, g: usize, cutoff: f64) -> Result<f64> {
    LimitVariance::new(grid, v0, cutoff)?.at(g)
}

/// Shared eigendecompositions for limit variances at many grid points.
struct LimitVariance<'a> {
    grid: &'a GpGrid,
    prior_graph: f64,
    graph_weights: Vec<(f64, f64)>,
    time_values: DVector<f64>,
    time_vectors: DMatrix<f64>,
    threshold: f64,
}

impl<'a> LimitVariance<'a> {
    fn new(grid: &'a GpGrid, v0: usize, cutoff: f64) -> Result<Self> {
        let kg = grid.kernel.graph.matrix();
        grid.kernel.graph.graph().check_vertex(v0)?;
        let others: Vec<usize> = (0..kg.nrows()).filter(|&u| u != v0).collect();
        let (time_values, time_vectors) = linalg::sorted_symmetric_eigen(&grid.time_gram)?;
        let time_max = time_values.iter().fold(0.0f64, |m, x| m.max(*x));
        let mut graph_weights = Vec::new();
        let mut graph_max = 0.0f64;
        if !others.is_empty() {
            let sub = DMatrix::from_fn(others.len(), others.len(), |i, j| kg[(others[i], others[j])]);
            let cross = DVector::from_iterator(others.len(), others.iter().map(|&u| kg[(u, v0)]));
            let (values, vectors) = linalg::sorted_symmetric_eigen(&sub)?;
            graph_max = values.iter().fold(0.0f64, |m, x| m.max(*x));
            for (a, &lambda) in values.iter().enumerate() {
                let proj = vectors.column(a).dot(&cross);
                graph_weights.push((lambda, proj * proj));
            }
        }
        Ok(LimitVariance {
            grid,
            prior_graph: kg[(v0, v0)],
            graph_weights,
            time_values,
            time_vectors,
            threshold: cutoff * graph_max * time_max,
        })
    }

    fn at(&self, g: usize) -> Result<f64> {
        if g >= self.grid.n_times() {
            return Err(Error::param(format!("grid index {g} out of range")));
        }
        let prior = self.prior_graph * self.grid.time_gram[(g, g)];
        let mut explained = 0.0;
        for &(lambda, proj_sq) in &self.graph_weights {
            if lambda <= 0.0 {
                continue;
            }
            for (b, &mu) in self.time_values.iter().enumerate() {
                if lambda * mu <= self.threshold {
                    continue;
                }
                let w = self.time_vectors[(g, b)];
                explained += proj_sq * mu * w * w / lambda;
            }
        }
        Ok((prior - explained).clamp(0.0, prior.max(0.0)))
    }
}

/// Trapezoid integral over the contiguous sub-grid `range` of the limit
/// variance at `v₀`.
pub fn integrated_limit_variance(grid: &GpGrid, v0: usize, range: std::ops::Range<usize>) -> Result<f64> {
    if range.is_empty() || range.end > grid.n_times() {
        return Err(Error::param("sub-grid range must be a nonempty part of the grid"));
    }
    let limit = LimitVariance::new(grid, v0, PINV_CUTOFF)?;
    let weights = trapezoid_weights(&grid.times[range.clone()]);
    range.zip(weights).try_fold(0.0, |acc, (g, w)| Ok(acc + w * limit.at(g)?))
}

/// Limit variance at every grid point.
pub fn limit_variance_profile(grid: &GpGrid, v0: usize) -> Result<Vec<f64>> {
    let limit = LimitVariance::new(grid, v0, PINV_CUTOFF)?;
    (0..grid.n_times()).map(|g| limit.at(g)).collect()
}

/// `M₀` i.i.d. uniform times on every vertex except `v₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusiveSamplePlan {
    pub excluded_vertex: usize,
    pub per_vertex: usize,
    pub seed: u64,
    pub nested: bool,
    pub samples: SampleSet,
}

/// Draw an exclusive plan; sample values are 0.
///
/// With `nested`, vertex `v` draws from stream `v` of the generator, so a
/// plan with larger `M₀` extends every per-vertex sequence of a smaller one.
/// Otherwise one stream is consumed vertex by vertex.
pub fn draw_exclusive_plan(
    graph: &Graph,
    v0: usize,
    per_vertex: usize,
    domain: TimeDomain,
    seed: u64,
    nested: bool,
) -> Result<ExclusiveSamplePlan> {
    graph.check_vertex(v0)?;
    if graph.n_vertices() < 2 {
        return Err(Error::param("exclusive sampling needs at least 2 vertices"));
    }
    if per_vertex == 0 {
        return Err(Error::param("M0 must be at least 1"));
    }
    let mut shared = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = SampleSet::default();
    for v in (0..graph.n_vertices()).filter(|&v| v != v0) {
        let mut own;
        let rng = if nested {
            own = ChaCha8Rng::seed_from_u64(seed);
            own.set_stream(v as u64);
            &mut own
        } else {
            &mut shared
        };
        for _ in 0..per_vertex {
            let t = domain.lo + domain.len() * rng.random::<f64>();
            samples.push(Sample::new(v, t, 0.0));
        }
    }
    Ok(ExclusiveSamplePlan { excluded_vertex: v0, per_vertex, seed, nested, samples })
}

/// Posterior variance at `(v₀, t₀)` given the plan's sample locations.
pub fn empirical_posterior_variance(
    kernel: &ProductKernel,
    plan: &ExclusiveSamplePlan,
    noise_variance: f64,
    v0: usize,
    t0: f64,
) -> Result<f64> {
    posterior_variance(kernel, &plan.samples, PosteriorQuery::new(noise_variance)?, v0, t0)
}

/// `∫ Var(f(v₀,t) | S) dt` by the grid's trapezoid rule.
pub fn integrated_posterior_variance(
    grid: &GpGrid,
    samples: &SampleSet,
    noise_variance: f64,
    v0: usize,
) -> Result<f64> {
    let posterior = GpPosterior::new(&grid.kernel, samples, PosteriorQuery::new(noise_variance)?)?;
    grid.times
        .iter()
        .zip(&grid.weights)
        .try_fold(0.0, |acc, (&t, w)| Ok(acc + w * posterior.variance(v0, t)?))
}

/// `l(v₀, d)`: residual variance of `K_G` at `v₀` given its open `d`-hop
/// neighborhood.
pub fn l_value(kernel: &GraphKernel, v0: usize, d: usize) -> Result<f64> {
    neighborhood_residual(kernel, v0, d)
}

/// Inputs of the asymptotic variance bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// `k_T(t₀, t₀)`.
    pub kt: f64,
    /// `l(v₀, d)`.
    pub l: f64,
    #[serde(rename = "M0")]
    pub m0: f64,
    pub c0: f64,
    /// Time-domain dimension `D`.
    #[serde(rename = "D")]
    pub dim: u32,
    /// Ball-to-domain measure ratio `C_D`.
    #[serde(rename = "CD")]
    pub c_d: f64,
    /// Neighborhood size `|N_d(v₀)|`.
    #[serde(rename = "Nd")]
    pub n_d: u32,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
    #[serde(default)]
    pub c3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub bound: f64,
    pub probability: f64,
}

/// `bound = k_T·l + (C₁/c₀ + C₂c₀²)M₀^{−1/(3D+1)} + C₃c₀M₀^{−2/(3D+1)}`,
/// `probability = (1 − 1/(2(1−c₀)²C_D M₀^{1/(3D+1)}))^{N_d}` with the base
/// floored at 0.
pub fn var_bound(p: &BoundParams) -> Result<BoundResult> {
    if !(p.c0 > 0.0 && p.c0 < 1.0) {
        return Err(Error::param(format!("c0 = {} must lie in (0, 1)", p.c0)));
    }
    if !(p.m0 >= 1.0 && p.m0.is_finite()) {
        return Err(Error::param(format!("M0 = {} must be at least 1", p.m0)));
    }
    if p.dim == 0 {
        return Err(Error::param("dimension D must be at least 1"));
    }
    if !(p.c_d > 0.0 && p.c_d.is_finite()) {
        return Err(Error::param(format!("C_D = {} must be positive", p.c_d)));
    }
    for (name, x) in [("kt", p.kt), ("l", p.l), ("C1", p.c1), ("C2", p.c2), ("C3", p.c3)] {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::param(format!("{name} = {x} must be nonnegative")));
        }
    }
    let root = p.m0.powf(1.0 / (3 * p.dim + 1) as f64);
    let bound = p.kt * p.l + (p.c1 / p.c0 + p.c2 * p.c0 * p.c0) / root + p.c3 * p.c0 / (root * root);
    let one_minus = 1.0 - p.c0;
    let base = (1.0 - 0.5 / (one_minus * one_minus * p.c_d * root)).max(0.0);
    Ok(BoundResult { bound, probability: base.powi(p.n_d as i32) })
}

/// `C_D` for an interval: Lebesgue measure of a unit ball in ℝ over the
/// domain length.
pub fn interval_ball_ratio(domain: TimeDomain) -> f64 {
    2.0 / domain.len()
}

/// One Monte Carlo trial record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(rename = "M0")]
    pub m0: usize,
    pub seed: u64,
    pub variance: f64,
    pub limit: f64,
    pub bound: f64,
    pub probability: f64,
}

/// Both sides of `Var(x) = E[Var(x|z)] + Var(E[x|z])`, traced over a target
/// block of the grid, with `z` the noisy grid values on `observed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalVarianceCheck {
    /// `tr Var(x)`, exact.
    pub prior: f64,
    /// `tr E[Var(x|z)]`, exact Schur complement.
    pub expected_conditional: f64,
    /// Monte Carlo `tr Var(E[x|z])`.
    pub variance_of_mean: f64,
    pub variance_of_mean_se: f64,
    /// Monte Carlo `tr Var(x)`, for the unconditional side.
    pub empirical_prior: f64,
    pub empirical_prior_se: f64,
    pub draws: usize,
}

impl TotalVarianceCheck {
    /// `|prior − (E[Var|z] + Var(E|z))|` in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.prior - self.expected_conditional - self.variance_of_mean).abs() / self.variance_of_mean_se
    }
}

pub fn total_variance_check(
    grid: &GpGrid,
    target: &BTreeSet<usize>,
    observed: &BTreeSet<usize>,
    noise_variance: f64,
    draws: usize,
    seed: u64,
) -> Result<TotalVarianceCheck> {
    if draws < 2 {
        return Err(Error::param("need at least 2 draws"));
    }
    if noise_variance.is_nan() || noise_variance < 0.0 {
        return Err(Error::param("noise variance must be nonnegative"));
    }
    let cov = grid.joint_cov();
    let size = cov.nrows();
    if target.iter().chain(observed).any(|&i| i >= size) {
        return Err(Error::param("grid index out of range"));
    }
    let t: Vec<usize> = target.iter().copied().collect();
    let o: Vec<usize> = observed.iter().copied().collect();
    let c_tt = DMatrix::from_fn(t.len(), t.len(), |i, j| cov[(t[i], t[j])]);
    let c_to = DMatrix::from_fn(t.len(), o.len(), |i, j| cov[(t[i], o[j])]);
    let mut c_oo = DMatrix::from_fn(o.len(), o.len(), |i, j| cov[(o[i], o[j])]);
    for i in 0..o.len() {
        c_oo[(i, i)] += noise_variance;
    }
    let pinv = pseudo_inverse(&c_oo)?;
    // E[x|z] = B z.
    let b = &c_to * pinv;
    let conditional = &c_tt - &b * c_to.transpose();
    let prior = c_tt.trace();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean_sq = Vec::with_capacity(draws);
    let mut prior_sq = Vec::with_capacity(draws);
    for _ in 0..draws {
        let x = grid.sample(&mut rng)?;
        let z = DVector::from_iterator(
            o.len(),
            o.iter().map(|&i| x[i] + noise_variance.sqrt() * rng.sample::<f64, _>(StandardNormal)),
        );
        mean_sq.push((&b * z).norm_squared());
        prior_sq.push(t.iter().map(|&i| x[i] * x[i]).sum::<f64>());
    }
    let (variance_of_mean, variance_of_mean_se) = mean_and_se(&mean_sq);
    let (empirical_prior, empirical_prior_se) = mean_and_se(&prior_sq);
    Ok(TotalVarianceCheck {
        prior,
        expected_conditional: conditional.trace(),
        variance_of_mean,
        variance_of_mean_se,
        empirical_prior,
        empirical_prior_se,
        draws,
    })
}

fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = linalg::sorted_symmetric_eigen(m)?;
    let max = values.iter().fold(0.0f64, |a, x| a.max(*x));
    let inv: Vec<f64> =
        values.iter().map(|&x| if x > PINV_CUTOFF * max { 1.0 / x } else { 0.0 }).collect();
    Ok(linalg::spectral_matrix(&vectors, &inv))
}

pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::kernels::TimeKernel;

    fn grid(n: usize, b: f64, points: usize) -> GpGrid {
        let graph = Arc::new(Graph::path(n).unwrap());
        let kernel = ProductKernel::new(
            GraphKernel::quadratic(graph, b).unwrap(),
            TimeKernel::gaussian(0.1, TimeDomain::unit()).unwrap(),
        );
        GpGrid::new(&kernel, points).unwrap()
    }

    #[test]
    fn plan_counts_and_exclusion() {
        let graph = Graph::path(3).unwrap();
        let plan = draw_exclusive_plan(&graph, 1, 5, TimeDomain::unit(), 9, true).unwrap();
        assert_eq!(plan.samples.len(), 10);
        assert!(plan.samples.iter().all(|s| s.vertex != 1));
        let single = draw_exclusive_plan(&graph, 0, 1, TimeDomain::unit(), 9, false).unwrap();
        assert_eq!(single.samples.len(), 2);
        assert!(draw_exclusive_plan(&graph, 3, 1, TimeDomain::unit(), 9, true).is_err());
    }

    #[test]
    fn nested_plans_share_prefixes() {
        let graph = Graph::path(3).unwrap();
        let small = draw_exclusive_plan(&graph, 1, 5, TimeDomain::unit(), 4, true).unwrap();
        let large = draw_exclusive_plan(&graph, 1, 10, TimeDomain::unit(), 4, true).unwrap();
        for v in [0, 2] {
            let a: Vec<f64> = small.samples.on_vertex(v).iter().map(|s| s.time).collect();
            let b: Vec<f64> = large.samples.on_vertex(v).iter().map(|s| s.time).collect();
            assert_eq!(a[..], b[..5]);
        }
    }

    #[test]
    fn identity_graph_gives_no_reduction() {
        let graph = Arc::new(Graph::path(3).unwrap());
        let kernel = ProductKernel::new(
            GraphKernel::identity(graph).unwrap(),
            TimeKernel::gaussian(0.1, TimeDomain::unit()).unwrap(),
        );
        let grid = GpGrid::new(&kernel, 16).unwrap();
        assert_eq!(limit_variance_discretized(&grid, 1, 5).unwrap(), 1.0);
    }

    #[test]
    fn perfectly_correlated_vertices() {
        let g = grid(2, 0.0, 32);
        for idx in [0, 10, 31] {
            assert!(limit_variance_discretized(&g, 0, idx).unwrap() < 1e-6);
        }
    }

    #[test]
    fn bound_example_probability() {
        let p = BoundParams {
            kt: 1.0,
            l: 0.5,
            m0: 1e4,
            c0: 0.5,
            dim: 1,
            c_d: 1.0,
            n_d: 1,
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
        };
        let r = var_bound(&p).unwrap();
        assert!((r.probability - 0.8).abs() < 1e-12);
        assert_eq!(r.bound, 0.5);
        assert!(var_bound(&BoundParams { c0: 1.0, ..p }).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: BTreeSet<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
