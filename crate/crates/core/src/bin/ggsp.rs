use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::{json, Value};

use ggsp::baselines::{gtrss_as_krr_check, solve_gtrss, GtrssProblem};
use ggsp::error::ErrorKind;
use ggsp::harness::{correlation_graph, run_synthetic, tune, ExperimentConfig, TuningGrid};
use ggsp::kernels::{gtrss_prior_correlation, KernelSpec, ProductKernel};
use ggsp::online_rff::{RffFeatureMap, RffPredictor};
use ggsp::reconstruct::{fit_krr, GpPosterior, KrrModel, PosteriorQuery, SampleSet};
use ggsp::variance::{
    derive_seed, draw_exclusive_plan, empirical_posterior_variance, integrated_limit_variance,
    interval_ball_ratio, l_value, limit_variance_discretized, var_bound, BoundParams, GpGrid, TrialRecord,
};
use ggsp::{io as gio, Error, Graph, Gso};

#[derive(Parser)]
#[command(name = "ggsp", version, about = "Kernel reconstruction of time-vertex graph signals")]
struct Cli {
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file of flag values; explicit flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a KRR model and write it as JSON.
    Fit(FitArgs),
    /// Evaluate a saved model at query points.
    Predict(PredictArgs),
    /// Posterior mean and variance at query points.
    Variance(VarianceArgs),
    /// Stream samples through the random-feature SGD predictor.
    Online(OnlineArgs),
    /// Solve a temporal-difference graph smoothing instance.
    Gtrss(GtrssArgs),
    /// Prior correlation between the first and last step of the difference kernel.
    GtrssCorr(GtrssCorrArgs),
    /// Draw one prior realization on a time grid.
    Simulate(SimulateArgs),
    /// Grid-conditioned limit variance at an excluded vertex.
    LimitVar(LimitVarArgs),
    /// Evaluate the neighborhood variance bound and its probability.
    Bound(BoundArgs),
    /// Run a synthetic reconstruction experiment from `--config`.
    Synthetic(SyntheticArgs),
    /// Build an edge list from thresholded row correlations.
    CorrGraph(CorrGraphArgs),
    /// Posterior variance under repeated exclusive sampling plans.
    ExclusiveTrials(TrialsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GsoArg {
    Combinatorial,
    Normalized,
}

impl From<GsoArg> for Gso {
    fn from(g: GsoArg) -> Self {
        match g {
            GsoArg::Combinatorial => Gso::Combinatorial,
            GsoArg::Normalized => Gso::Normalized,
        }
    }
}

#[derive(Args)]
struct KernelArgs {
    /// Edge-list file.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum)]
    gso: Option<GsoArg>,
    /// Kernel spec as inline JSON or a path to a JSON file.
    #[arg(long)]
    kernel: String,
}

impl KernelArgs {
    fn load(&self) -> Result<ProductKernel, CliError> {
        let spec = load_kernel_spec(&self.kernel)?;
        let gso = self.gso.map(Gso::from).unwrap_or(spec.gso);
        let graph = Arc::new(Graph::load_edge_list(&self.graph, gso)?);
        Ok(spec.build(graph)?)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// CSV with header vertex,time,value.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    mu: f64,
}

#[derive(Args)]
struct QueryArgs {
    /// CSV with header vertex,time.
    #[arg(long, conflicts_with_all = ["vertex", "time"])]
    queries: Option<PathBuf>,
    #[arg(long, requires = "time")]
    vertex: Option<usize>,
    #[arg(long, requires = "vertex")]
    time: Option<f64>,
}

impl QueryArgs {
    fn load(&self) -> Result<Vec<(usize, f64)>, CliError> {
        match (&self.queries, self.vertex, self.time) {
            (Some(path), _, _) => Ok(gio::read_queries(File::open(path)?)?),
            (None, Some(v), Some(t)) => Ok(vec![(v, t)]),
            _ => Err(CliError::Usage("give --queries or both --vertex and --time".into())),
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    queries: QueryArgs,
    /// Sum only over samples within the kernel's polynomial support.
    #[arg(long)]
    localized: bool,
}

#[derive(Args)]
struct VarianceArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    samples: PathBuf,
    /// Observation noise variance.
    #[arg(long)]
    sigma2: f64,
    #[command(flatten)]
    queries: QueryArgs,
}

#[derive(Args)]
struct OnlineArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// CSV stream vertex,time,value consumed in order.
    #[arg(long)]
    stream: PathBuf,
    #[arg(long, default_value_t = 256)]
    features: usize,
    #[arg(long)]
    mu: f64,
    /// Penalty horizon M; defaults to the stream length.
    #[arg(long)]
    horizon: Option<usize>,
    /// SGD step; defaults to 0.05 over the largest squared feature norm.
    #[arg(long)]
    step: Option<f64>,
    /// Resume from a saved checkpoint instead of starting at zero.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Write the final checkpoint here.
    #[arg(long)]
    save: Option<PathBuf>,
}

#[derive(Args)]
struct GtrssArgs {
    /// JSON instance: graph, X_o, mask, mu_tv, alpha, beta, delta0.
    #[arg(long)]
    instance: PathBuf,
    /// Also report the discrepancy to the equivalent KRR model.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct GtrssCorrArgs {
    #[arg(long = "T")]
    steps: usize,
    #[arg(long, default_value_t = 1e-5)]
    delta0: f64,
    /// Emit every power of two from 2 up to T.
    #[arg(long)]
    sweep: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Write times and values as hex floats.
    #[arg(long)]
    hex: bool,
}

#[derive(Args)]
struct LimitVarArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    v0: usize,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Also report the pointwise value at this grid index.
    #[arg(long)]
    index: Option<usize>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    l: f64,
    #[arg(long)]
    kt: f64,
    #[arg(long = "M0")]
    m0: f64,
    #[arg(long)]
    c0: f64,
    #[arg(long = "D", default_value_t = 1)]
    dim: u32,
    #[arg(long = "CD")]
    c_d: f64,
    #[arg(long = "Nd")]
    n_d: u32,
    #[arg(long = "C1", default_value_t = 0.0)]
    c1: f64,
    #[arg(long = "C2", default_value_t = 0.0)]
    c2: f64,
    #[arg(long = "C3", default_value_t = 0.0)]
    c3: f64,
}

#[derive(Args)]
struct SyntheticArgs {
    /// Tuning grid JSON `{gamma: [..], b: [..], mu: [..]}`.
    #[arg(long)]
    tune: Option<PathBuf>,
}

#[derive(Args)]
struct CorrGraphArgs {
    /// Headerless CSV, one row of observations per vertex.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct TrialsArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    v0: usize,
    #[arg(long = "M0")]
    m0: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    sigma2: f64,
    #[arg(long)]
    t0: f64,
    /// Neighborhood radius for l(v0, d).
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    c0: f64,
    #[arg(long = "CD")]
    c_d: Option<f64>,
    /// Grid resolution of the limit variance.
    #[arg(long, default_value_t = 64)]
    grid: usize,
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(Error::Json(e))
    }
}

fn load_kernel_spec(text: &str) -> Result<KernelSpec, CliError> {
    if text.trim_start().starts_with('{') {
        Ok(KernelSpec::from_json(text)?)
    } else {
        Ok(KernelSpec::from_json(&std::fs::read_to_string(text)?)?)
    }
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(out: &mut dyn Write, value: &Value) -> Result<(), CliError> {
    writeln!(out, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

#[derive(Deserialize)]
struct GtrssInstance {
    graph: PathBuf,
    #[serde(rename = "X_o")]
    observations: Vec<Vec<f64>>,
    mask: Vec<Vec<f64>>,
    mu_tv: f64,
    alpha: f64,
    beta: f64,
    delta0: f64,
    #[serde(default)]
    gso: Gso,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch(format!("{what} rows differ in length")).into());
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    let mut out = open_out(&cli.out)?;
    match cli.command {
        Command::Fit(a) => {
            let kernel = a.kernel.load()?;
            let samples = gio::ingest_samples(&a.samples, &kernel)?;
            let model = fit_krr(&kernel, &samples, a.mu)?;
            writeln!(out, "{}", model.to_json()?)?;
        }
        Command::Predict(a) => {
            let model = KrrModel::load(&a.model)?;
            for (v, t) in a.queries.load()? {
                let p = if a.localized { model.predict_localized(v, t)? } else { model.predict(v, t)? };
                emit(&mut out, &json!({"vertex": v, "time": t, "prediction": p}))?;
            }
        }
        Command::Variance(a) => {
            let kernel = a.kernel.load()?;
            let samples = gio::ingest_samples(&a.samples, &kernel)?;
            let posterior = GpPosterior::new(&kernel, &samples, PosteriorQuery::new(a.sigma2)?)?;
            for (v, t) in a.queries.load()? {
                let mean = posterior.mean(v, t)?;
                let variance = posterior.variance(v, t)?;
                emit(&mut out, &json!({"vertex": v, "time": t, "mean": mean, "variance": variance}))?;
            }
        }
        Command::Online(a) => {
            let kernel = a.kernel.load()?;
            let stream = gio::ingest_samples(&a.stream, &kernel)?;
            let mut predictor = match &a.checkpoint {
                Some(path) => RffPredictor::load(path)?,
                None => {
                    let map = RffFeatureMap::new(&kernel, a.features, seed)?;
                    let step = match a.step {
                        Some(s) => s,
                        None => RffPredictor::default_step(&map, &stream)?,
                    };
                    let horizon = a.horizon.unwrap_or(stream.len().max(1));
                    RffPredictor::new(map, a.mu, horizon, step)?
                }
            };
            for s in &stream {
                let (prediction, error) = predictor.sgd_step(s.vertex, s.time, s.value)?;
                emit(
                    &mut out,
                    &json!({"step": predictor.update_count(), "vertex": s.vertex, "time": s.time,
                            "value": s.value, "prediction": prediction, "error": error}),
                )?;
            }
            if let Some(path) = &a.save {
                predictor.save(path)?;
            }
        }
        Command::Gtrss(a) => {
            let inst: GtrssInstance = serde_json::from_str(&std::fs::read_to_string(&a.instance)?)?;
            let graph = Arc::new(Graph::load_edge_list(&inst.graph, inst.gso)?);
            let problem = GtrssProblem::new(
                graph,
                rows_to_matrix(&inst.mask, "mask")?,
                rows_to_matrix(&inst.observations, "X_o")?,
                inst.mu_tv,
                inst.alpha,
                inst.beta,
                inst.delta0,
            )?;
            let x = solve_gtrss(&problem)?;
            let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
            let mut record = json!({"solution": rows, "objective": problem.objective(&x)?});
            if a.check {
                record["krr_discrepancy"] = json!(gtrss_as_krr_check(&problem)?);
            }
            emit(&mut out, &record)?;
        }
        Command::GtrssCorr(a) => {
            let steps: Vec<usize> = if a.sweep {
                std::iter::successors(Some(2usize), |t| Some(t * 2)).take_while(|&t| t <= a.steps).collect()
            } else {
                vec![a.steps]
            };
            for t in steps {
                let corr = gtrss_prior_correlation(t, a.delta0)?;
                emit(&mut out, &json!({"T": t, "delta0": a.delta0, "correlation": corr}))?;
            }
        }
        Command::Simulate(a) => {
            let kernel = a.kernel.load()?;
            let grid = GpGrid::new(&kernel, a.grid)?;
            let values = grid.as_matrix(&grid.sample_seeded(seed)?);
            let samples: SampleSet = (0..values.nrows())
                .flat_map(|v| grid.times().iter().enumerate().map(move |(g, &t)| (v, g, t)))
                .map(|(v, g, t)| ggsp::Sample::new(v, t, values[(v, g)]))
                .collect();
            gio::write_samples(&mut out, &samples, a.hex)?;
        }
        Command::LimitVar(a) => {
            let kernel = a.kernel.load()?;
            let grid = GpGrid::new(&kernel, a.grid)?;
            let integrated = integrated_limit_variance(&grid, a.v0, 0..a.grid)?;
            let prior_trace: f64 =
                grid.times().iter().zip(grid.weights()).map(|(&t, w)| w * kernel.eval_unchecked(a.v0, t, a.v0, t)).sum();
            let mut record = json!({"v0": a.v0, "G": a.grid, "integrated": integrated, "prior_trace": prior_trace});
            if let Some(g) = a.index {
                record["time"] = json!(grid.times().get(g));
                record["value"] = json!(limit_variance_discretized(&grid, a.v0, g)?);
            }
            emit(&mut out, &record)?;
        }
        Command::Bound(a) => {
            let params = BoundParams {
                kt: a.kt,
                l: a.l,
                m0: a.m0,
                c0: a.c0,
                dim: a.dim,
                c_d: a.c_d,
                n_d: a.n_d,
                c1: a.c1,
                c2: a.c2,
                c3: a.c3,
            };
            let r = var_bound(&params)?;
            emit(&mut out, &json!({"bound": r.bound, "probability": r.probability, "params": params}))?;
        }
        Command::Synthetic(a) => {
            let path = cli.config.as_ref().ok_or_else(|| CliError::Usage("synthetic needs --config".into()))?;
            let mut config: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            if let Some(tune_path) = &a.tune {
                let grid: TuningGrid = serde_json::from_str(&std::fs::read_to_string(tune_path)?)?;
                for entry in tune(&config, &grid)? {
                    emit(&mut out, &serde_json::to_value(entry)?)?;
                }
            } else {
                let report = run_synthetic(&config)?;
                for record in &report.records {
                    emit(&mut out, &serde_json::to_value(record)?)?;
                }
                let summary = json!({"summary": report.methods.iter().map(|m| json!({
                    "method": m.method, "mean": m.mean, "std_error": m.std_error})).collect::<Vec<_>>(),
                    "repetitions": report.repetitions, "config": report.config});
                emit(&mut out, &summary)?;
                if let Some(path) = &config.output {
                    std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
                }
            }
        }
        Command::CorrGraph(a) => {
            let data = gio::read_matrix(File::open(&a.data)?)?;
            let edges = correlation_graph(&data, a.threshold)?;
            writeln!(out, "n {}", data.nrows())?;
            for (u, v, w) in edges {
                writeln!(out, "{u} {v} {w}")?;
            }
        }
        Command::ExclusiveTrials(a) => {
            let kernel = a.kernel.load()?;
            let graph = kernel.graph.graph().clone();
            let grid = GpGrid::new(&kernel, a.grid)?;
            let nearest = grid
                .times()
                .iter()
                .enumerate()
                .min_by(|x, y| (x.1 - a.t0).abs().total_cmp(&(y.1 - a.t0).abs()))
                .map(|(g, _)| g)
                .unwrap_or(0);
            let limit = limit_variance_discretized(&grid, a.v0, nearest)?;
            let l = l_value(&kernel.graph, a.v0, a.d)?;
            let n_d = graph.hop_neighborhood(a.v0, a.d)?.len() as u32;
            let params = BoundParams {
                kt: kernel.time.eval(a.t0, a.t0)?,
                l,
                m0: a.m0 as f64,
                c0: a.c0,
                dim: 1,
                c_d: a.c_d.unwrap_or_else(|| interval_ball_ratio(kernel.domain())),
                n_d,
                c1: 0.0,
                c2: 0.0,
                c3: 0.0,
            };
            let bound = var_bound(&params)?;
            for trial in 0..a.trials {
                let trial_seed = derive_seed(seed, trial as u64);
                let plan = draw_exclusive_plan(&graph, a.v0, a.m0, kernel.domain(), trial_seed, true)?;
                let variance = empirical_posterior_variance(&kernel, &plan, a.sigma2, a.v0, a.t0)?;
                let record = TrialRecord {
                    m0: a.m0,
                    seed: trial_seed,
                    variance,
                    limit,
                    bound: bound.bound,
                    probability: bound.probability,
                };
                emit(&mut out, &serde_json::to_value(record)?)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Expand `--config file.json` into flags inserted right after the
/// subcommand, so flags given on the command line come later and win.
fn expand_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut config_path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            config_path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        }
    }
    let Some(path) = config_path else { return Ok(args) };
    let sub = args.iter().position(|a| {
        matches!(
            a.as_str(),
            "fit" | "predict" | "variance" | "online" | "gtrss" | "gtrss-corr" | "simulate" | "limit-var"
                | "bound" | "corr-graph" | "exclusive-trials"
        )
    });
    let Some(sub) = sub else { return Ok(args) };
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(Path::new(&path))?)?;
    let Value::Object(map) = doc else {
        return Err(CliError::Usage("--config must hold a JSON object".into()));
    };
    let mut flags = Vec::new();
    for (key, value) in map {
        let flag = format!("--{key}");
        match value {
            Value::Bool(true) => flags.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => flags.extend([flag, s]),
            Value::Number(n) => flags.extend([flag, n.to_string()]),
            other => flags.extend([flag, other.to_string()]),
        }
    }
    let mut expanded = args[..=sub].to_vec();
    expanded.extend(flags);
    expanded.extend_from_slice(&args[sub + 1..]);
    Ok(expanded)
}

fn parse(args: Vec<String>) -> Result<Cli, clap::Error> {
    let command = Cli::command().args_override_self(true).mut_subcommands(|s| s.args_override_self(true));
    Cli::from_arg_matches(&command.try_get_matches_from(args)?)
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let result = expand_config(std::env::args().collect()).and_then(|args| match parse(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code == 0 {
                std::process::exit(0);
            }
            Err(CliError::Usage(String::new()))
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(1)
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
