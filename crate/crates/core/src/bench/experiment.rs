//! Experiment configs, result records and the runner.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvGrid};
use super::functions::{build_test_function, FunctionSpec, TestFunction, DEFAULT_GRID};
use super::plot::plot_error_vs_n;
use crate::baselines::{random_gd, random_search, sample_points, SearchSampler, StepSize};
use crate::certify::{certify_minimizer, certify_minimum, estimate_seminorm, CertifyOptions, FillEstimate, FillKind};
use crate::error::{Error, Result};
use crate::geometry::{default_probes, fill_distance_empirical, Domain};
use crate::kernels::{max_order, KernelConfig};
use crate::localizer::LocalizeOutput;
use crate::solver::SolverConfig;

/// Version of the experiment config format.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KernelSos,
    RandomSearch,
    RandomGd,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::KernelSos => "kernel_sos",
            Method::RandomSearch => "random_search",
            Method::RandomGd => "random_gd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdConfig {
    pub steps: usize,
    pub step_size: StepSize,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig { steps: 10, step_size: StepSize::default() }
    }
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

fn default_true() -> bool {
    true
}

fn default_workers() -> usize {
    1
}

/// An experiment: methods x sample sizes x seeds on one test function over
/// `[-1, 1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub function: FunctionSpec,
    /// Normalization grid points per axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
    pub methods: Vec<Method>,
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sampler: SearchSampler,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Cross-validation grid; without it the run uses `solver.lambda` and
    /// `kernel.sigma`.
    #[serde(default)]
    pub cv: Option<CvGrid>,
    #[serde(default)]
    pub gd: GdConfig,
    /// Attach a heuristic certificate to kernel runs when the kernel allows one.
    #[serde(default)]
    pub certify: bool,
    #[serde(default = "default_true")]
    pub plots: bool,
    /// Worker threads for the run queue; 0 uses every available core.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.methods.is_empty() || self.n.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("methods, n and seeds must be non-empty".into()));
        }
        self.solver.validate()?;
        self.kernel.build(self.function.dim())?;
        Ok(())
    }

    pub fn cv_grid(&self) -> CvGrid {
        self.cv.clone().unwrap_or_else(|| CvGrid::single(self.solver.lambda, self.kernel.sigma))
    }

    /// Evaluations the kernel method spends at sample size `n`, including
    /// one per cross-validation cell. Baselines get the same budget.
    pub fn budget(&self, n: usize) -> usize {
        if self.methods.contains(&Method::KernelSos) {
            n + self.cv_grid().cells()
        } else {
            n
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub method: Method,
    pub n: usize,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub sigma: Option<f64>,
    /// Parabola weight of the solver.
    pub nu: Option<f64>,
    pub c_hat: Option<f64>,
    pub f_at_z: f64,
    pub gap_to_true_min: f64,
    pub cert_bound: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_ms: f64,
}

impl Record {
    /// Equality ignoring the timing column.
    pub fn same_result(&self, other: &Record) -> bool {
        Record { wall_ms: 0.0, ..self.clone() } == Record { wall_ms: 0.0, ..other.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: Method,
    pub n: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub records: Vec<Record>,
    pub failures: Vec<Failure>,
    pub csv_path: PathBuf,
    pub plots: Vec<PathBuf>,
}

fn cube(d: usize) -> Result<Domain> {
    Domain::cube(d, 1.0)
}

fn kernel_run(cfg: &ExperimentConfig, func: &TestFunction, n: usize, seed: u64) -> Result<Record> {
    let d = func.d;
    let domain = cube(d)?;
    let kernel = cfg.kernel.build(d)?;
    let grid = cfg.cv_grid();
    let pts = sample_points(&domain, n, cfg.sampler, seed)?;
    let start = Instant::now();
    let cv = cross_validate(|x| func.eval(x), &pts, &domain, &kernel, &cfg.solver, &grid)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let cell = cv.best_cell();
    let f_at_z = cell.f_at_z.expect("selected cell was solved");
    let cert_bound = if cfg.certify { certificate(cfg, func, &cv.output, &cv.data, f_at_z, &domain, seed)? } else { None };
    Ok(Record {
        method: Method::KernelSos,
        n,
        seed,
        lambda: Some(cell.lambda),
        sigma: Some(cell.sigma),
        nu: Some(cfg.solver.nu),
        c_hat: cell.c_hat,
        f_at_z,
        gap_to_true_min: f_at_z - func.true_min(),
        cert_bound,
        iterations: Some(cell.iterations),
        wall_ms,
    })
}

/// Heuristic certificate: finite-difference seminorm and empirical fill
/// distance, at the largest order the kernel admits.
fn certificate(
    cfg: &ExperimentConfig,
    func: &TestFunction,
    out: &crate::solver::SolveOutput,
    data: &crate::solver::SampleSet,
    f_at_z: f64,
    domain: &Domain,
    seed: u64,
) -> Result<Option<f64>> {
    let Some(m) = max_order(data.kernel()) else { return Ok(None) };
    let seminorm = estimate_seminorm(|x| func.eval(x), domain, m, 8, None, seed)?;
    let h = fill_distance_empirical(data.points(), domain, default_probes(data.len()), seed)?;
    let opts = CertifyOptions { m, seminorm, fill: FillEstimate { value: h, kind: FillKind::Empirical, valid: true } };
    let cert = if cfg.solver.nu > 0.0 {
        certify_minimizer(&LocalizeOutput::from_solve(out.clone(), data.len()), data, f_at_z, &opts)?
    } else {
        certify_minimum(out, data, f_at_z, &opts)?
    };
    Ok(Some(cert.gap_bound))
}

fn baseline_run(cfg: &ExperimentConfig, func: &TestFunction, method: Method, n: usize, seed: u64) -> Result<Record> {
    let domain = cube(func.d)?;
    let budget = cfg.budget(n);
    let start = Instant::now();
    let res = match method {
        Method::RandomSearch => random_search(|x| func.eval(x), &domain, budget, cfg.sampler, seed)?,
        Method::RandomGd => random_gd(|x| func.eval(x), &domain, budget, cfg.gd.steps, &cfg.gd.step_size, seed)?,
        Method::KernelSos => unreachable!("handled by kernel_run"),
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(Record {
        method,
        n,
        seed,
        lambda: None,
        sigma: None,
        nu: None,
        c_hat: None,
        f_at_z: res.best_f,
        gap_to_true_min: res.best_f - func.true_min(),
        cert_bound: None,
        iterations: None,
        wall_ms,
    })
}

/// Runs one `(method, n, seed)` cell of an experiment.
pub fn run_single(cfg: &ExperimentConfig, func: &TestFunction, method: Method, n: usize, seed: u64) -> Result<Record> {
    match method {
        Method::KernelSos => kernel_run(cfg, func, n, seed),
        _ => baseline_run(cfg, func, method, n, seed),
    }
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Runs every `(method, n, seed)` cell on a queue of `workers` threads and
/// writes `results.csv` (plus `failures.csv` and plots) into `out_dir`.
/// Rows keep grid order.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let func = build_test_function(&cfg.function, cfg.grid)?;
    let jobs: Vec<(Method, usize, u64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.n.iter().flat_map(move |&n| cfg.seeds.iter().map(move |&s| (m, n, s))))
        .collect();
    let workers = match cfg.workers {
        0 => std::thread::available_parallelism().map_or(1, |w| w.get()),
        w => w,
    }
    .min(jobs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<Record>)>> = Mutex::new(Vec::with_capacity(jobs.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(method, n, seed)) = jobs.get(k) else { break };
                let r = run_single(cfg, &func, method, n, seed);
                match &r {
                    Ok(r) => log::info!("{} n={n} seed={seed}: f(z)={:.4e} ({:.0} ms)", method.name(), r.f_at_z, r.wall_ms),
                    Err(e) => log::warn!("{} n={n} seed={seed} failed: {e}", method.name()),
                }
                results.lock().expect("result queue").push((k, r));
            });
        }
    });
    let mut results = results.into_inner().expect("result queue");
    results.sort_by_key(|(k, _)| *k);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results {
        match r {
            Ok(r) => records.push(r),
            Err(e) => {
                let (method, n, seed) = jobs[k];
                failures.push(Failure { method, n, seed, error: e.to_string() });
            }
        }
    }
    let csv_path = out_dir.join("results.csv");
    write_records(&csv_path, &records)?;
    if !failures.is_empty() {
        let mut w = csv::Writer::from_path(out_dir.join("failures.csv"))?;
        for f in &failures {
            w.serialize(f)?;
        }
        w.flush()?;
    }
    let mut plots = Vec::new();
    if cfg.plots && !records.is_empty() {
        let path = out_dir.join("error_vs_n.svg");
        let title = if cfg.name.is_empty() { "error vs n".to_string() } else { cfg.name.clone() };
        plot_error_vs_n(&records, &path, &title)?;
        plots.push(path);
    }
    Ok(ExperimentReport { records, failures, csv_path, plots })
}
