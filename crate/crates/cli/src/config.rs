//! Run configuration for `solve`, `localize` and `certify`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ksos::baselines::SearchSampler;
use ksos::bench::{FunctionSpec, DEFAULT_GRID};
use ksos::kernels::KernelConfig;
use ksos::localizer::RestartSchedule;
use ksos::solver::Factorization;
use ksos::SolverConfig;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

fn default_n() -> usize {
    200
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

fn default_kernel() -> KernelConfig {
    KernelConfig { family: "sobolev".into(), s: None, nu: Some(2.5), sigma: 0.3 }
}

/// One problem and how to solve it.
///
/// Without `data`, `n` points of the test function `function` (Gaussian bumps
/// by default) are sampled on `[-1, 1]^d`. With `data`, samples are read from
/// a CSV with columns `x1..xd,f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub function: Option<FunctionSpec>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampler: SearchSampler,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_kernel")]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub restart: RestartSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            function: None,
            data: None,
            n: default_n(),
            seed: 0,
            sampler: SearchSampler::default(),
            grid: default_grid(),
            kernel: default_kernel(),
            solver: SolverConfig::default(),
            restart: RestartSchedule::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!("schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version);
        }
        Ok(cfg)
    }

    pub fn function_spec(&self) -> FunctionSpec {
        self.function.clone().unwrap_or_default()
    }
}

/// Flags that override [`SolverConfig`] fields.
#[derive(Args, Clone, Debug, Default)]
pub struct SolverFlags {
    /// Trace penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Barrier weight.
    #[arg(long)]
    pub eps_barrier: Option<f64>,
    /// Stop once the scaled Newton decrement is at most this.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Parabola weight (0 solves the plain problem).
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, value_enum)]
    pub factorization: Option<FactorizationArg>,
    /// Solve at the final barrier weight only, without continuation.
    #[arg(long)]
    pub no_continuation: bool,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum FactorizationArg {
    Auto,
    Direct,
    Reduced,
}

impl From<FactorizationArg> for Factorization {
    fn from(f: FactorizationArg) -> Self {
        match f {
            FactorizationArg::Auto => Factorization::Auto,
            FactorizationArg::Direct => Factorization::Direct,
            FactorizationArg::Reduced => Factorization::Reduced,
        }
    }
}

impl SolverFlags {
    pub fn apply(&self, cfg: &mut SolverConfig) {
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.eps_barrier {
            cfg.eps_barrier = v;
        }
        if let Some(v) = self.kappa {
            cfg.kappa = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.nu {
            cfg.nu = v;
        }
        if let Some(v) = self.factorization {
            cfg.factorization = v.into();
        }
        if self.no_continuation {
            cfg.continuation = false;
        }
    }
}

/// Flags shared by `solve` and `localize`.
#[derive(Args, Clone, Debug, Default)]
pub struct ProblemFlags {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV of samples with columns `x1..xd,f`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of sampled points.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Matérn order of the kernel.
    #[arg(long)]
    pub kernel_nu: Option<f64>,
    /// Kernel length-scale.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

impl ProblemFlags {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(nu) = self.kernel_nu {
            cfg.kernel.nu = Some(nu);
            cfg.kernel.s = None;
        }
        if let Some(s) = self.sigma {
            cfg.kernel.sigma = s;
        }
        self.solver.apply(&mut cfg.solver);
        cfg.solver.validate()?;
        Ok(cfg)
    }
}
