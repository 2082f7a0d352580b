//! Subcommand implementations. Each returns the paths it wrote.

use std::path::PathBuf;

use postensor_core::baselines::{als_fit, als_select_rank, DEFAULT_RANKS};
use postensor_core::completion::{
    self, CrossValidation, GapCache, RiskGapEstimate, DEFAULT_LAMBDA_GRID, DEFAULT_THRESHOLD_GRID,
};
use postensor_core::decompose::construct_exact_decomposition;
use postensor_core::risk::prediction_error_with;
use postensor_core::solver::{self, SolveOptions, SolveReport};
use postensor_core::synth::{self, ExperimentSpec};
use postensor_core::{DenseTensor, FactorSet, NoiseModel, ObservationSet, PartitionComplex};
use rayon::prelude::*;
use serde::Serialize;

use crate::cli::{Command, RunArgs};
use crate::error::{CliError, Result};
use crate::formats::{self, Model, Table};

/// ALS sweeps when `--sweeps` is absent.
pub const DEFAULT_SWEEPS: usize = 100;

/// Sample sizes of `benchmark` when `--n` is absent.
pub const DEFAULT_BENCHMARK_SIZES: [usize; 4] = [100, 500, 1000, 5000];

/// Runs a parsed command.
pub fn run(command: Command) -> Result<Vec<PathBuf>> {
    let name = command.name();
    let args = command.args().clone().resolve()?;
    validate(&args)?;
    match command {
        Command::Complete(_) => complete(&args),
        Command::Decompose(_) => decompose(&args),
        Command::Approximate(_) => approximate(&args),
        Command::Benchmark(_) => benchmark(&args),
        Command::Synth(_) => synth_cmd(&args),
        Command::Predict(_) => predict(&args),
    }
    .map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {}", name, m)),
        e => e,
    })
}

fn validate(a: &RunArgs) -> Result<()> {
    if a.threshold.is_some() && a.cv_grid.is_some() {
        return Err(CliError::Usage(
            "--threshold and --cv-grid are mutually exclusive".into(),
        ));
    }
    if let Some(e) = a.epsilon {
        if !(e > 0.0 && e.is_finite()) {
            return Err(CliError::Usage(format!("--epsilon must be positive, got {}", e)));
        }
    }
    if let Some(m) = a.bound {
        if !(m > 1.0 && m.is_finite()) {
            return Err(CliError::Usage(format!("--M must exceed 1, got {}", m)));
        }
    }
    if let Some(f) = a.floor {
        if !(f > 0.0 && f.is_finite()) {
            return Err(CliError::Usage(format!("--floor must be positive, got {}", f)));
        }
    }
    if a.lambda
        .as_ref()
        .is_some_and(|l| l.is_empty() || l.iter().any(|v| !(*v >= 0.0)))
    {
        return Err(CliError::Usage("--lambda values must be nonnegative".into()));
    }
    if a.cv_grid
        .as_ref()
        .is_some_and(|g| g.is_empty() || g.iter().any(|v| v.is_nan()))
    {
        return Err(CliError::Usage("--cv-grid must list numbers".into()));
    }
    if a.trials == Some(0) {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    if a.rank == Some(0) || a.sweeps == Some(0) {
        return Err(CliError::Usage("--rank and --sweeps must be at least 1".into()));
    }
    if a.n.as_ref().is_some_and(|n| n.is_empty() || n.contains(&0)) {
        return Err(CliError::Usage("--n must list positive sample sizes".into()));
    }
    if let Some(noise) = &a.noise {
        parse_noise(noise)?;
    }
    Ok(())
}

/// Parses `none` or `k,theta`.
pub fn parse_noise(s: &str) -> Result<NoiseModel> {
    if s.trim().eq_ignore_ascii_case("none") {
        return Ok(NoiseModel::None);
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let parsed: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
    match parsed.as_deref() {
        Some(&[k, theta]) => NoiseModel::gamma(k, theta).map_err(|e| CliError::Usage(format!("--noise: {}", e))),
        _ => Err(CliError::Usage(format!(
            "--noise expects 'none' or 'k,theta', got '{}'",
            s
        ))),
    }
}

fn solve_options(a: &RunArgs) -> SolveOptions {
    let d = SolveOptions::default();
    SolveOptions {
        epsilon: a.epsilon.unwrap_or(d.epsilon),
        bound: a.bound,
        seed: a.seed.unwrap_or(0),
        ..d
    }
}

fn clamp(v: f64, floor: Option<f64>) -> f64 {
    floor.map_or(v, |f| v.max(f))
}

fn read_levels(a: &RunArgs) -> Result<Option<formats::LevelMap>> {
    a.levels.as_deref().map(formats::read_levels).transpose()
}

fn read_data(a: &RunArgs, command: &str, require_y: bool) -> Result<(PathBuf, Table)> {
    let path = a.require(&a.data, "data", command)?.to_path_buf();
    let levels = read_levels(a)?;
    let table = formats::read_table(&path, a.dims.as_deref(), levels.as_ref(), require_y)?;
    Ok((path, table))
}

fn read_truth(a: &RunArgs, shape: &postensor_core::TensorShape) -> Result<Option<DenseTensor>> {
    let Some(path) = a.truth.as_deref() else {
        return Ok(None);
    };
    let t = formats::read_tensor(path)?;
    if t.shape() != shape {
        return Err(CliError::format(
            path,
            None,
            format!(
                "truth has dims {:?} but the data has {:?}",
                t.shape().dims(),
                shape.dims()
            ),
        ));
    }
    Ok(Some(t))
}

fn single_lambda(a: &RunArgs) -> Result<Option<f64>> {
    match a.lambda.as_deref() {
        None => Ok(None),
        Some(&[l]) => Ok(Some(l)),
        Some(_) => Err(CliError::Usage(
            "a list of --lambda values needs cross-validation".into(),
        )),
    }
}

#[derive(Serialize)]
struct CvRow {
    threshold: f64,
    lambda: Option<f64>,
    partition: Vec<Vec<usize>>,
    validation_risk: Option<f64>,
}

#[derive(Serialize)]
struct GapRow {
    j: usize,
    q: usize,
    gap: f64,
    converged: bool,
}

#[derive(Serialize)]
struct SolveSummary {
    objective: f64,
    kkt_residual: f64,
    feasibility_residual: f64,
    converged: bool,
    iterations: usize,
    pinned_cells: usize,
}

impl From<&SolveReport> for SolveSummary {
    fn from(r: &SolveReport) -> Self {
        Self {
            objective: r.objective,
            kkt_residual: r.kkt_residual,
            feasibility_residual: r.feasibility_residual,
            converged: r.converged,
            iterations: r.iterations,
            pinned_cells: r.pinned_cells.len(),
        }
    }
}

#[derive(Serialize)]
struct CompleteMetrics {
    prediction_error: Option<f64>,
    partition: Vec<Vec<usize>>,
    threshold: f64,
    lambda: Option<f64>,
    validation_risk: Vec<CvRow>,
    nesting_violations: Vec<(f64, f64)>,
    gaps: Vec<GapRow>,
    observations: usize,
    solve: SolveSummary,
}

fn gap_rows<'a>(gaps: impl Iterator<Item = &'a RiskGapEstimate>) -> Vec<GapRow> {
    gaps.map(|g| GapRow {
        j: g.j,
        q: g.q,
        gap: g.gap,
        converged: g.converged,
    })
    .collect()
}

fn truth_error(truth: &Option<DenseTensor>, model: &Model, floor: Option<f64>) -> Option<f64> {
    truth
        .as_ref()
        .map(|t| prediction_error_with(t, |x| clamp(model.eval(x).expect("shape checked"), floor)))
}

fn complete(a: &RunArgs) -> Result<Vec<PathBuf>> {
    let (path, table) = read_data(a, "complete", true)?;
    let obs = table.observations(&path, a.floor)?;
    let truth = read_truth(a, obs.shape())?;
    let base = solve_options(a);
    let opts = SolveOptions {
        bound: Some(base.resolve_bound(&obs)),
        ..base
    };

    let (factors, metrics) = if let Some(t) = a.threshold {
        let lambda = single_lambda(a)?;
        let mut cache = GapCache::new();
        let partition = completion::estimate_partition_cached(&obs, t, &opts, &mut cache)?;
        let report = fit(&obs, &partition, &opts, lambda)?;
        let metrics = CompleteMetrics {
            prediction_error: None,
            partition: partition.facets().to_vec(),
            threshold: t,
            lambda,
            validation_risk: Vec::new(),
            nesting_violations: Vec::new(),
            gaps: gap_rows(cache.estimates()),
            observations: obs.len(),
            solve: (&report).into(),
        };
        (report.factors()?, metrics)
    } else {
        let grid = a.cv_grid.clone().unwrap_or_else(|| DEFAULT_THRESHOLD_GRID.to_vec());
        let cv: CrossValidation = match &a.lambda {
            Some(ls) => completion::cross_validate_sparse(&obs, &grid, ls, &opts)?,
            None => completion::cross_validate(&obs, &grid, &opts)?,
        };
        let metrics = CompleteMetrics {
            prediction_error: None,
            partition: cv.partition.facets().to_vec(),
            threshold: cv.threshold,
            lambda: cv.lambda,
            validation_risk: cv
                .entries
                .iter()
                .map(|e| CvRow {
                    threshold: e.threshold,
                    lambda: e.lambda,
                    partition: e.partition.facets().to_vec(),
                    validation_risk: e.validation_risk,
                })
                .collect(),
            nesting_violations: cv.nesting_violations.clone(),
            gaps: gap_rows(cv.gaps.iter()),
            observations: obs.len(),
            solve: (&cv.report).into(),
        };
        (cv.factors, metrics)
    };
    let model = Model::Partition(factors);
    let metrics = CompleteMetrics {
        prediction_error: truth_error(&truth, &model, a.floor),
        ..metrics
    };
    let out = a.out_dir();
    let (model_path, metrics_path) = (out.join("model.json"), out.join("metrics.json"));
    formats::write_model(&model_path, &model)?;
    formats::write_json(&metrics_path, &metrics)?;
    Ok(vec![model_path, metrics_path])
}

fn fit(obs: &ObservationSet, c: &PartitionComplex, opts: &SolveOptions, lambda: Option<f64>) -> Result<SolveReport> {
    Ok(match lambda {
        Some(l) => solver::solve_sparse(
            obs,
            c,
            &SolveOptions {
                lambda: Some(l),
                ..opts.clone()
            },
        )?,
        None => solver::solve_convex(obs, c, opts)?,
    })
}

fn decompose(a: &RunArgs) -> Result<Vec<PathBuf>> {
    let truth_path = a.require(&a.truth, "truth", "decompose")?;
    let tensor = formats::read_tensor(truth_path)?;
    let facets = a
        .facets
        .as_deref()
        .ok_or_else(|| CliError::Usage("requires --facets".into()))?;
    let complex = formats::parse_facets(facets, tensor.shape().order())?;
    let bound = a.bound.unwrap_or_else(|| tight_bound(&tensor));
    let params = construct_exact_decomposition(&tensor, &complex, bound)?;
    let path = a.out_dir().join("model.json");
    formats::write_model(&path, &Model::Partition(params))?;
    Ok(vec![path])
}

/// Smallest `M ≥ 2` with every entry in `[M⁻¹, M]`.
fn tight_bound(t: &DenseTensor) -> f64 {
    let (lo, hi) = (t.min(), t.max());
    if lo > 0.0 {
        hi.max(1.0 / lo).max(2.0)
    } else {
        2.0
    }
}

#[derive(Serialize)]
struct ApproximateMetrics {
    prediction_error: Option<f64>,
    facets: Option<Vec<Vec<usize>>>,
    lambda: Option<f64>,
    solve: Option<SolveSummary>,
    rank: Option<usize>,
    training_loss: Option<f64>,
}

fn approximate(a: &RunArgs) -> Result<Vec<PathBuf>> {
    let (path, table) = read_data(a, "approximate", true)?;
    let obs = table.observations(&path, a.floor)?;
    let truth = read_truth(a, obs.shape())?;
    let (model, metrics) = if let Some(q) = a.rank {
        if a.facets.is_some() || a.lambda.is_some() {
            return Err(CliError::Usage(
                "--rank fits a CP model and excludes --facets and --lambda".into(),
            ));
        }
        let fit = als_fit(&obs, q, a.sweeps.unwrap_or(DEFAULT_SWEEPS), a.seed.unwrap_or(0))?;
        let metrics = ApproximateMetrics {
            prediction_error: None,
            facets: None,
            lambda: None,
            solve: None,
            rank: Some(q),
            training_loss: fit.loss_trace.last().copied(),
        };
        (Model::Cp(fit.model), metrics)
    } else {
        let order = obs.shape().order();
        let complex = match a.facets.as_deref() {
            Some(f) => formats::parse_facets(f, order)?,
            None => PartitionComplex::singletons(order),
        };
        let lambda = single_lambda(a)?;
        let report = fit(&obs, &complex, &solve_options(a), lambda)?;
        let metrics = ApproximateMetrics {
            prediction_error: None,
            facets: Some(complex.facets().to_vec()),
            lambda,
            solve: Some((&report).into()),
            rank: None,
            training_loss: None,
        };
        (Model::Partition(report.factors()?), metrics)
    };
    let metrics = ApproximateMetrics {
        prediction_error: truth_error(&truth, &model, a.floor),
        ..metrics
    };
    let out = a.out_dir();
    let (model_path, metrics_path) = (out.join("model.json"), out.join("metrics.json"));
    formats::write_model(&model_path, &model)?;
    formats::write_json(&metrics_path, &metrics)?;
    Ok(vec![model_path, metrics_path])
}

/// Methods compared by [`run_benchmark`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Cross-validated partition fit.
    PartitionLogLinear,
    /// Cross-validated partition fit with an ℓ1 budget.
    SparsePartitionLogLinear,
    /// Alternating least squares CP fit.
    Als,
}

impl Method {
    /// All methods in report order.
    pub const ALL: [Method; 3] = [Self::PartitionLogLinear, Self::SparsePartitionLogLinear, Self::Als];

    /// Row label.
    pub fn label(self) -> &'static str {
        match self {
            Self::PartitionLogLinear => "partition-log-linear",
            Self::SparsePartitionLogLinear => "sparse-partition-log-linear",
            Self::Als => "als",
        }
    }
}

/// Settings of [`run_benchmark`].
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    /// Ground truth.
    pub truth: DenseTensor,
    /// Sample sizes.
    pub sizes: Vec<usize>,
    /// Trials per sample size.
    pub trials: usize,
    /// Noise model.
    pub noise: NoiseModel,
    /// Base seed.
    pub seed: u64,
    /// Threshold grid.
    pub thresholds: Vec<f64>,
    /// ℓ1 budget grid for the sparse method.
    pub lambdas: Vec<f64>,
    /// Candidate ALS ranks; a single entry fixes the rank.
    pub ranks: Vec<usize>,
    /// ALS sweeps.
    pub sweeps: usize,
    /// Solver options.
    pub solve: SolveOptions,
    /// Measurement and prediction floor.
    pub floor: Option<f64>,
    /// Methods to run.
    pub methods: Vec<Method>,
}

impl BenchmarkConfig {
    /// Defaults for `truth`: every method, the default grids and gamma
    /// noise with `k = θ_g = 1`.
    pub fn new(truth: DenseTensor) -> Self {
        Self {
            truth,
            sizes: DEFAULT_BENCHMARK_SIZES.to_vec(),
            trials: 20,
            noise: NoiseModel::Gamma { shape: 1.0, scale: 1.0 },
            seed: 0,
            thresholds: DEFAULT_THRESHOLD_GRID.to_vec(),
            lambdas: DEFAULT_LAMBDA_GRID.to_vec(),
            ranks: DEFAULT_RANKS.to_vec(),
            sweeps: DEFAULT_SWEEPS,
            solve: SolveOptions::default(),
            floor: None,
            methods: Method::ALL.to_vec(),
        }
    }

    /// Seed of trial `trial` at sample size index `size_index`.
    pub fn trial_seed(&self, size_index: usize, trial: usize) -> u64 {
        self.seed.wrapping_add((size_index * self.trials + trial) as u64)
    }
}

/// Per-trial errors of a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    /// Sample sizes.
    pub sizes: Vec<usize>,
    /// Methods run.
    pub methods: Vec<Method>,
    /// `errors[m][s][t]`: method `m`, size `s`, trial `t`.
    pub errors: Vec<Vec<Vec<f64>>>,
}

impl BenchmarkResult {
    /// Median over trials for method `m` and size index `s`.
    pub fn median(&self, m: usize, s: usize) -> f64 {
        median(&self.errors[m][s])
    }

    /// Medians of `method` per sample size, if it was run.
    pub fn medians(&self, method: Method) -> Option<Vec<f64>> {
        let m = self.methods.iter().position(|&x| x == method)?;
        Some((0..self.sizes.len()).map(|s| self.median(m, s)).collect())
    }
}

/// Median, averaging the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Runs every (size, trial) pair in parallel; results do not depend on the
/// number of threads.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkResult> {
    let jobs: Vec<(usize, usize)> = (0..cfg.sizes.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let per_job: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(s, t)| benchmark_trial(cfg, cfg.sizes[s], cfg.trial_seed(s, t)))
        .collect::<Result<_>>()?;
    let mut errors = vec![vec![Vec::with_capacity(cfg.trials); cfg.sizes.len()]; cfg.methods.len()];
    for (&(s, _), errs) in jobs.iter().zip(per_job) {
        for (m, e) in errs.into_iter().enumerate() {
            errors[m][s].push(e);
        }
    }
    Ok(BenchmarkResult {
        sizes: cfg.sizes.clone(),
        methods: cfg.methods.clone(),
        errors,
    })
}

fn benchmark_trial(cfg: &BenchmarkConfig, n: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = ExperimentSpec {
        truth: cfg.truth.clone(),
        n,
        noise: cfg.noise,
        seed,
        trials: 1,
    };
    let mut obs = synth::sample_trial(&spec, 0)?;
    if let Some(f) = cfg.floor {
        let records = obs
            .records()
            .iter()
            .map(|r| postensor_core::Observation {
                x: r.x.clone(),
                y: r.y.max(f),
            })
            .collect();
        obs = ObservationSet::new(obs.shape().clone(), records)?;
    }
    let score = |f: &FactorSet| prediction_error_with(&cfg.truth, |x| clamp(f.eval(x).expect("same shape"), cfg.floor));
    cfg.methods
        .iter()
        .map(|m| {
            Ok(match m {
                Method::PartitionLogLinear => {
                    score(&completion::cross_validate(&obs, &cfg.thresholds, &cfg.solve)?.factors)
                }
                Method::SparsePartitionLogLinear => {
                    score(&completion::cross_validate_sparse(&obs, &cfg.thresholds, &cfg.lambdas, &cfg.solve)?.factors)
                }
                Method::Als => {
                    let model = match cfg.ranks.as_slice() {
                        &[q] => als_fit(&obs, q, cfg.sweeps, seed)?.model,
                        ranks => als_select_rank(&obs, ranks, cfg.sweeps, seed)?.fit.model,
                    };
                    prediction_error_with(&cfg.truth, |x| clamp(model.eval(x).expect("same shape"), cfg.floor))
                }
            })
        })
        .collect()
}

fn truth_or_benchmark(a: &RunArgs) -> Result<DenseTensor> {
    match a.truth.as_deref() {
        Some(p) => formats::read_tensor(p),
        None => Ok(synth::benchmark_tensor().to_dense()),
    }
}

fn benchmark(a: &RunArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = BenchmarkConfig::new(truth_or_benchmark(a)?);
    if let Some(n) = &a.n {
        cfg.sizes = n.clone();
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(noise) = &a.noise {
        cfg.noise = parse_noise(noise)?;
    }
    cfg.seed = a.seed.unwrap_or(0);
    if let Some(g) = &a.cv_grid {
        cfg.thresholds = g.clone();
    } else if let Some(t) = a.threshold {
        cfg.thresholds = vec![t];
    }
    if let Some(l) = &a.lambda {
        cfg.lambdas = l.clone();
    }
    if let Some(q) = a.rank {
        cfg.ranks = vec![q];
    }
    cfg.sweeps = a.sweeps.unwrap_or(DEFAULT_SWEEPS);
    cfg.solve = solve_options(a);
    cfg.floor = a.floor;

    let result = run_benchmark(&cfg)?;
    let out = a.out_dir();
    let mut header = vec!["method".to_string()];
    header.extend(result.sizes.iter().map(|n| n.to_string()));
    let report: Vec<Vec<String>> = result
        .methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let mut row = vec![method.label().to_string()];
            row.extend((0..result.sizes.len()).map(|s| formats::format_number(result.median(m, s))));
            row
        })
        .collect();
    let mut plot = Vec::new();
    let mut trials = Vec::new();
    for (m, method) in result.methods.iter().enumerate() {
        for (s, n) in result.sizes.iter().enumerate() {
            plot.push(vec![
                method.label().to_string(),
                n.to_string(),
                formats::format_number(result.median(m, s)),
            ]);
            for (t, e) in result.errors[m][s].iter().enumerate() {
                trials.push(vec![
                    method.label().to_string(),
                    n.to_string(),
                    t.to_string(),
                    formats::format_number(*e),
                ]);
            }
        }
    }
    let paths = [out.join("report.csv"), out.join("plot.csv"), out.join("trials.csv")];
    formats::write_csv(&paths[0], &header, &report)?;
    formats::write_csv(&paths[1], &strings(&["method", "n", "median_prediction_error"]), &plot)?;
    formats::write_csv(
        &paths[2],
        &strings(&["method", "n", "trial", "prediction_error"]),
        &trials,
    )?;
    Ok(paths.to_vec())
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn synth_cmd(a: &RunArgs) -> Result<Vec<PathBuf>> {
    let truth = truth_or_benchmark(a)?;
    let n = match a.n.as_deref() {
        None => 1000,
        Some(&[n]) => n,
        Some(_) => return Err(CliError::Usage("--n takes a single sample size".into())),
    };
    let spec = ExperimentSpec {
        truth: truth.clone(),
        n,
        noise: a
            .noise
            .as_deref()
            .map(parse_noise)
            .transpose()?
            .unwrap_or(NoiseModel::None),
        seed: a.seed.unwrap_or(0),
        trials: a.trials.unwrap_or(1),
    };
    let out = a.out_dir();
    let truth_path = out.join("truth.json");
    formats::write_tensor(&truth_path, &truth)?;
    let mut paths = vec![truth_path];
    for t in 0..spec.trials {
        let obs = synth::sample_trial(&spec, t)?;
        let name = if spec.trials == 1 {
            "observations.csv".to_string()
        } else {
            format!("observations-{}.csv", t)
        };
        let p = out.join(name);
        formats::write_observations(&p, &obs)?;
        paths.push(p);
    }
    Ok(paths)
}

fn predict(a: &RunArgs) -> Result<Vec<PathBuf>> {
    let model_path = a.require(&a.model, "model", "predict")?;
    let model = formats::read_model(model_path)?;
    let dims = a.dims.clone().unwrap_or_else(|| model.shape().dims().to_vec());
    if dims != model.shape().dims() {
        return Err(CliError::Usage(format!(
            "--dims {:?} disagree with the model's {:?}",
            dims,
            model.shape().dims()
        )));
    }
    let levels = read_levels(a)?;
    let data_path = a.require(&a.data, "data", "predict")?;
    let table = formats::read_table(data_path, Some(&dims), levels.as_ref(), false)?;
    let mut header = table.columns.clone();
    header.push("prediction".into());
    let mut rows = Vec::with_capacity(table.indices.len());
    for x in &table.indices {
        let mut row: Vec<String> = x
            .coords()
            .iter()
            .zip(&table.columns)
            .map(|(&v, col)| match levels.as_ref().and_then(|l| l.get(col)) {
                Some(names) => names[v - 1].clone(),
                None => v.to_string(),
            })
            .collect();
        row.push(formats::format_number(clamp(model.eval(x)?, a.floor)));
        rows.push(row);
    }
    let path = a.out_dir().join("predictions.csv");
    formats::write_csv(&path, &header, &rows)?;
    Ok(vec![path])
}

/// Writes `paths` as a JSON summary line.
pub fn summary(command: &str, paths: &[PathBuf]) -> String {
    serde_json::json!({
        "command": command,
        "outputs": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    })
    .to_string()
}
