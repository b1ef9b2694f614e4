//! Synthetic reconstruction experiments, metrics and graph construction
//! from data.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::isolated_krr;
use crate::error::{Error, Result};
use crate::graph::{Graph, Gso};
use crate::kernels::{GraphKernelSpec, KernelSpec, TimeKernelSpec};
use crate::online_rff::{RffFeatureMap, RffPredictor};
use crate::reconstruct::{fit_krr, Sample, SampleSet};
use crate::variance::{derive_seed, mean_and_se, GpGrid};

/// `Σ(truth − estimate)² / Σ truth²`.
pub fn relative_error(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} truth values vs {} estimates",
            truth.len(),
            estimate.len()
        )));
    }
    let energy: f64 = truth.iter().map(|x| x * x).sum();
    if energy <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    let err: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(err / energy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GraphSource {
    Path { n: usize },
    Cycle { n: usize },
    Grid { rows: usize, cols: usize },
    File { path: PathBuf },
}

impl GraphSource {
    pub fn load(&self, gso: Gso) -> Result<Graph> {
        let graph = match self {
            GraphSource::Path { n } => Graph::path(*n)?,
            GraphSource::Cycle { n } => Graph::cycle(*n)?,
            GraphSource::Grid { rows, cols } => Graph::grid(*rows, *cols)?,
            GraphSource::File { path } => return Graph::load_edge_list(path, gso),
        };
        if gso == Gso::Combinatorial {
            Ok(graph)
        } else {
            let edges: Vec<_> = graph.edges().iter().map(|e| (e.u, e.v, e.w)).collect();
            Graph::with_gso(graph.n_vertices(), &edges, gso)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KrrGgsp,
    IsolatedKrr,
    /// One streaming pass of the random-feature predictor.
    Rff,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::KrrGgsp => "krr_ggsp",
            Method::IsolatedKrr => "isolated_krr",
            Method::Rff => "rff",
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::KrrGgsp, Method::IsolatedKrr]
}

fn default_grid_points() -> usize {
    64
}

fn default_repetitions() -> usize {
    10
}

fn default_noise_ratio() -> f64 {
    0.01
}

fn default_features() -> usize {
    256
}

/// A synthetic experiment: draw from the prior on a grid, add noise, mask,
/// reconstruct, score on held-out entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub kernel: KernelSpec,
    /// Ridge; defaults to the noise variance.
    #[serde(default)]
    pub mu: Option<f64>,
    /// Fraction `ρ` of grid entries observed.
    pub observation_ratio: f64,
    /// Noise variance as a fraction of the mean squared signal.
    #[serde(default = "default_noise_ratio")]
    pub noise_ratio: f64,
    /// Absolute noise variance; overrides `noise_ratio`.
    #[serde(default)]
    pub noise_variance: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Random features for [`Method::Rff`].
    #[serde(default = "default_features")]
    pub features: usize,
    /// Time window `[lo, hi]` held out entirely for validation; when set,
    /// observations come only from outside it and scoring only from inside.
    #[serde(default)]
    pub validation_window: Option<[f64; 2]>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.observation_ratio > 0.0 && self.observation_ratio <= 1.0) {
            return Err(Error::param(format!("observation ratio {} must lie in (0, 1]", self.observation_ratio)));
        }
        if !(self.noise_ratio >= 0.0 && self.noise_ratio.is_finite()) {
            return Err(Error::param("noise ratio must be nonnegative"));
        }
        if let Some(s) = self.noise_variance {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::param("noise variance must be nonnegative"));
            }
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::param("mu must be positive"));
            }
        }
        if self.repetitions == 0 || self.methods.is_empty() {
            return Err(Error::param("need at least one repetition and one method"));
        }
        if let Some([lo, hi]) = self.validation_window {
            if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                return Err(Error::param("validation window must satisfy lo < hi"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean: f64,
    pub std_error: f64,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub repetition: usize,
    pub seed: u64,
    pub noise_variance: f64,
    pub observed: usize,
    pub evaluated: usize,
    pub errors: Vec<(Method, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: ExperimentConfig,
    pub repetitions: usize,
    pub methods: Vec<MethodSummary>,
    pub records: Vec<RepetitionRecord>,
}

impl MetricReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Repetitions in which `a` scored strictly lower error than `b`.
    pub fn wins(&self, a: Method, b: Method) -> usize {
        let (Some(sa), Some(sb)) = (self.summary(a), self.summary(b)) else {
            return 0;
        };
        sa.errors.iter().zip(&sb.errors).filter(|(x, y)| x < y).count()
    }
}

pub fn run_synthetic(config: &ExperimentConfig) -> Result<MetricReport> {
    config.validate()?;
    let graph = Arc::new(config.graph.load(config.kernel.gso)?);
    let kernel = config.kernel.build(graph)?;
    let grid = GpGrid::new(&kernel, config.grid_points)?;
    grid.factor()?;

    let records = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(config, &grid, rep))
        .collect::<Result<Vec<_>>>()?;

    let methods = config
        .methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let errors: Vec<f64> = records.iter().map(|r| r.errors[i].1).collect();
            let (mean, std_error) = if errors.len() > 1 { mean_and_se(&errors) } else { (errors[0], 0.0) };
            MethodSummary { method, mean, std_error, errors }
        })
        .collect();
    Ok(MetricReport { config: config.clone(), repetitions: config.repetitions, methods, records })
}

fn run_repetition(config: &ExperimentConfig, grid: &GpGrid, rep: usize) -> Result<RepetitionRecord> {
    let seed = derive_seed(config.seed, rep as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = grid.as_matrix(&grid.sample(&mut rng)?);
    let (n, g) = truth.shape();
    let times = grid.times();

    let in_window = |t: f64| config.validation_window.is_some_and(|[lo, hi]| t >= lo && t <= hi);
    let candidates: Vec<(usize, usize)> =
        (0..n).flat_map(|v| (0..g).map(move |j| (v, j))).filter(|&(_, j)| !in_window(times[j])).collect();
    let count = ((config.observation_ratio * candidates.len() as f64).round() as usize).clamp(1, candidates.len());
    let mut observed_flag = DMatrix::from_element(n, g, false);
    for i in index::sample(&mut rng, candidates.len(), count) {
        let (v, j) = candidates[i];
        observed_flag[(v, j)] = true;
    }

    let power = truth.norm_squared() / (n * g) as f64;
    let noise_variance = config.noise_variance.unwrap_or(config.noise_ratio * power);
    let noise_sd = noise_variance.sqrt();
    let mut samples = SampleSet::default();
    for v in 0..n {
        for j in 0..g {
            if observed_flag[(v, j)] {
                let noise: f64 = rng.sample(StandardNormal);
                samples.push(Sample::new(v, times[j], truth[(v, j)] + noise_sd * noise));
            }
        }
    }

    let mut eval: Vec<(usize, usize)> = (0..n)
        .flat_map(|v| (0..g).map(move |j| (v, j)))
        .filter(|&(v, j)| !observed_flag[(v, j)])
        .filter(|&(_, j)| config.validation_window.is_none() || in_window(times[j]))
        .collect();
    if eval.is_empty() {
        eval = (0..n).flat_map(|v| (0..g).map(move |j| (v, j))).collect();
    }
    let truth_values: Vec<f64> = eval.iter().map(|&(v, j)| truth[(v, j)]).collect();

    let mu = match config.mu {
        Some(mu) => mu,
        None if noise_variance > 0.0 => noise_variance,
        None => return Err(Error::param("mu is required when the noise variance is zero")),
    };
    let kernel = grid.kernel();
    let mut errors = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let estimate: Vec<f64> = match method {
            Method::KrrGgsp => {
                let model = fit_krr(kernel, &samples, mu)?;
                eval.iter().map(|&(v, j)| model.predict(v, times[j])).collect::<Result<_>>()?
            }
            Method::IsolatedKrr => {
                let model = isolated_krr(&samples, &kernel.time, n, mu)?;
                eval.iter().map(|&(v, j)| model.predict(v, times[j])).collect::<Result<_>>()?
            }
            Method::Rff => {
                let map = RffFeatureMap::new(kernel, config.features, derive_seed(seed, u64::MAX))?;
                let step = RffPredictor::default_step(&map, &samples)?;
                let mut predictor = RffPredictor::new(map, mu, samples.len().max(1), step)?;
                let mut order: Vec<usize> = (0..samples.len()).collect();
                order.sort_by(|&a, &b| samples.as_slice()[a].time.total_cmp(&samples.as_slice()[b].time));
                for i in order {
                    let s = samples.as_slice()[i];
                    predictor.sgd_step(s.vertex, s.time, s.value)?;
                }
                eval.iter().map(|&(v, j)| predictor.predict(v, times[j])).collect::<Result<_>>()?
            }
        };
        errors.push((method, relative_error(&truth_values, &estimate)?));
    }
    Ok(RepetitionRecord {
        repetition: rep,
        seed,
        noise_variance,
        observed: samples.len(),
        evaluated: eval.len(),
        errors,
    })
}

/// Hyperparameter grid; empty lists keep the configured value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningEntry {
    pub gamma: Option<f64>,
    pub b: Option<f64>,
    pub mu: Option<f64>,
    pub mean: f64,
    pub std_error: f64,
}

/// Score every grid combination on the first configured method and return
/// all entries with the best one first.
pub fn tune(config: &ExperimentConfig, grid: &TuningGrid) -> Result<Vec<TuningEntry>> {
    let opt = |xs: &[f64]| -> Vec<Option<f64>> {
        if xs.is_empty() {
            vec![None]
        } else {
            xs.iter().copied().map(Some).collect()
        }
    };
    let mut entries = Vec::new();
    for gamma in opt(&grid.gamma) {
        for b in opt(&grid.b) {
            for mu in opt(&grid.mu) {
                let mut trial = config.clone();
                if let Some(gamma) = gamma {
                    trial.kernel.time = match trial.kernel.time {
                        TimeKernelSpec::Gaussian { .. } => TimeKernelSpec::Gaussian { gamma },
                        TimeKernelSpec::Laplacian { .. } => TimeKernelSpec::Laplacian { gamma },
                        _ => return Err(Error::param("gamma tuning needs a gaussian or laplacian kernel")),
                    };
                }
                if let Some(b) = b {
                    match trial.kernel.graph {
                        GraphKernelSpec::Quadratic { .. } => trial.kernel.graph = GraphKernelSpec::Quadratic { b },
                        _ => return Err(Error::param("b tuning needs a quadratic graph kernel")),
                    }
                }
                if mu.is_some() {
                    trial.mu = mu;
                }
                let report = run_synthetic(&trial)?;
                let first = &report.methods[0];
                entries.push(TuningEntry { gamma, b, mu, mean: first.mean, std_error: first.std_error });
            }
        }
    }
    entries.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    Ok(entries)
}

/// Edges between rows of `data` (vertices × observations) whose Pearson
/// correlation magnitude exceeds `threshold`, weighted by that magnitude.
pub fn correlation_graph(data: &DMatrix<f64>, threshold: f64) -> Result<Vec<(usize, usize, f64)>> {
    let (n, t) = data.shape();
    if t < 2 {
        return Err(Error::param("need at least two observations per vertex"));
    }
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|v| {
            let row: Vec<f64> = data.row(v).iter().copied().collect();
            let mean = row.iter().sum::<f64>() / t as f64;
            row.iter().map(|x| x - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if norms[u] == 0.0 || norms[v] == 0.0 {
                continue;
            }
            let dot: f64 = centered[u].iter().zip(&centered[v]).map(|(a, b)| a * b).sum();
            let corr = (dot / (norms[u] * norms[v])).abs();
            if corr > threshold {
                edges.push((u, v, corr));
            }
        }
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(relative_error(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert!(matches!(relative_error(&[0.0], &[1.0]), Err(Error::ZeroSignal)));
    }

    #[test]
    fn correlation_graph_thresholds() {
        let data = DMatrix::from_row_slice(3, 4, &[1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.1, 1.0, -1.0, 1.0, -1.0]);
        let edges = correlation_graph(&data, 0.5).unwrap();
        assert_eq!(edges.len(), 1);
        assert_eq!((edges[0].0, edges[0].1), (0, 1));
    }

    #[test]
    fn config_defaults() {
        let config: ExperimentConfig = serde_json::from_str(
            r#"{"graph": {"type": "path", "n": 3},
                "kernel": {"graph": {"type": "quadratic", "b": 0.2}, "time": {"type": "gaussian", "gamma": 0.05}},
                "observation_ratio": 0.3}"#,
        )
        .unwrap();
        assert_eq!(config.grid_points, 64);
        assert_eq!(config.methods, default_methods());
        assert!(config.validate().is_ok());
    }
}
