//! `ksos`: kernel sum-of-squares global minimization from the command line.

mod config;
mod problem;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ksos::baselines::sample_points;
use ksos::bench::{run_experiment, ExperimentConfig, Method};
use ksos::certify::{
    certify_minimizer, certify_minimum, estimate_seminorm, fill_estimates, Certificate, CertifyOptions, FillEstimate,
    FillKind, Seminorm,
};
use ksos::kernels::{max_order, KernelConfig};
use ksos::localizer::{warm_restart, LocalizeOutput};
use ksos::solver::{recover_from_alpha, solve, SolveOutput};
use ksos::SampleSet;
use ndarray::Array1;

use config::{ProblemFlags, SolverFlags};
use problem::{rows, Problem, SavedRun};

#[derive(Parser, Debug)]
#[command(name = "ksos", version, about = "Global minimization with kernel sum-of-squares relaxations")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a function once and solve the relaxation.
    Solve {
        #[command(flatten)]
        problem: ProblemFlags,
        /// Directory for run.json.
        #[arg(long, default_value = "ksos-out")]
        out_dir: PathBuf,
    },
    /// Warm-restart localization of the minimizer (needs --nu > 0).
    Localize {
        #[command(flatten)]
        problem: ProblemFlags,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long)]
        n_per_stage: Option<usize>,
        /// Radius multiplier between stages.
        #[arg(long)]
        shrink: Option<f64>,
        #[arg(long, default_value = "ksos-out")]
        out_dir: PathBuf,
    },
    /// Run an experiment grid from a TOML config.
    Bench(BenchArgs),
    /// Certificate for a saved run.
    Certify(CertifyArgs),
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "ksos-bench")]
    out_dir: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FillArg {
    Empirical,
    Probabilistic,
    Given,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    /// run.json written by `solve` or `localize`.
    #[arg(long)]
    run: PathBuf,
    /// Differentiability order; defaults to the largest the kernel allows.
    #[arg(long)]
    m: Option<u32>,
    /// Bound on the order-m derivatives of f; estimated by finite
    /// differences when omitted.
    #[arg(long)]
    seminorm: Option<f64>,
    #[arg(long, value_enum, default_value = "empirical")]
    fill: FillArg,
    /// Fill distance for `--fill given`.
    #[arg(long)]
    h: Option<f64>,
    /// Failure probability of the probabilistic fill bound.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Value of f at the candidate, when the run does not record it.
    #[arg(long)]
    f_at_z: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for certificate.json; printed only when omitted.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Solve { problem, out_dir } => cmd_solve(&problem, &out_dir),
        Command::Localize { problem, stages, n_per_stage, shrink, out_dir } => {
            cmd_localize(&problem, stages, n_per_stage, shrink, &out_dir)
        }
        Command::Bench(args) => cmd_bench(&args),
        Command::Certify(args) => cmd_certify(&args),
    }
}

fn sample(problem: &Problem, cfg: &config::RunConfig) -> Result<SampleSet> {
    let domain = problem.domain()?;
    let kernel = cfg.kernel.build(problem.dim())?;
    let data = match problem {
        Problem::Function(f) => {
            let pts = sample_points(&domain, cfg.n, cfg.sampler, cfg.seed)?;
            SampleSet::from_fn(pts, kernel, |x| f.eval(x))?
        }
        Problem::Table { points, values } => SampleSet::new(points.clone(), values.clone(), kernel)?,
    };
    Ok(data.with_domain(domain)?)
}

fn print_solution(out: &SolveOutput, f_at_z: Option<f64>) {
    println!("status        {:?} after {} iterations", out.status, out.iterations);
    println!("c_hat         {:.10e}", out.c_hat);
    if out.nu > 0.0 {
        println!("vertex value  {:.10e}", out.vertex_value());
    }
    println!("z_hat         {:?}", out.z_hat);
    if let Some(v) = f_at_z {
        println!("f(z_hat)      {v:.10e}");
    }
    println!("trace B       {:.6e}", out.trace_b);
}

fn save_run(out_dir: &Path, run: &SavedRun) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join("run.json");
    run.save(&path)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn cmd_solve(flags: &ProblemFlags, out_dir: &Path) -> Result<ExitCode> {
    let cfg = flags.resolve()?;
    let problem = Problem::from_config(&cfg)?;
    let data = sample(&problem, &cfg)?;
    let out = solve(&data, &cfg.solver)?;
    let f_at_z = problem.eval(&out.z_hat);
    print_solution(&out, f_at_z);
    let run = SavedRun {
        schema_version: config::SCHEMA_VERSION,
        verb: "solve".into(),
        kernel: KernelConfig::from(data.kernel()),
        solver: cfg.solver.clone(),
        domain: data.domain().expect("domain attached").clone(),
        points: rows(data.points()),
        values: data.values().to_vec(),
        alpha: out.alpha.to_vec(),
        summary: out.summary(),
        f_at_z,
        vertex_value: out.vertex_value(),
        stages: Vec::new(),
        evaluations: data.len(),
        config: cfg,
    };
    save_run(out_dir, &run)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_localize(
    flags: &ProblemFlags,
    stages: Option<usize>,
    n_per_stage: Option<usize>,
    shrink: Option<f64>,
    out_dir: &Path,
) -> Result<ExitCode> {
    let mut cfg = flags.resolve()?;
    if cfg.solver.nu <= 0.0 {
        bail!("localize needs a positive parabola weight (--nu)");
    }
    if let Some(s) = stages {
        cfg.restart.stages = s;
    }
    if let Some(n) = n_per_stage {
        cfg.restart.n_per_stage = n;
    }
    if let Some(s) = shrink {
        cfg.restart.shrink = s;
    }
    let problem = Problem::from_config(&cfg)?;
    let Problem::Function(f) = &problem else {
        bail!("localize samples new points and needs a function, not --data");
    };
    let domain = problem.domain()?;
    let kernel = cfg.kernel.build(problem.dim())?;
    let out: LocalizeOutput = warm_restart(|x| f.eval(x), &domain, &kernel, &cfg.solver, &cfg.restart, cfg.seed)?;
    for s in &out.stage_log {
        println!(
            "stage {}  radius {:.4e}  sigma {:.4e}  vertex {:.6e}  step {:.3e}  {:?}",
            s.stage, s.radius, s.sigma, s.vertex_value, s.step, s.solve_status
        );
    }
    let f_at_z = Some(f.eval(&out.z_hat));
    print_solution(&out.last, f_at_z);
    let data = out.data.as_ref().expect("warm restart keeps its samples");
    let run = SavedRun {
        schema_version: config::SCHEMA_VERSION,
        verb: "localize".into(),
        kernel: KernelConfig::from(data.kernel()),
        solver: cfg.solver.clone(),
        domain: domain.clone(),
        points: rows(data.points()),
        values: data.values().to_vec(),
        alpha: out.last.alpha.to_vec(),
        summary: out.last.summary(),
        f_at_z,
        vertex_value: out.vertex_value,
        stages: out.stage_log.clone(),
        evaluations: out.evaluations,
        config: cfg,
    };
    save_run(out_dir, &run)?;
    Ok(ExitCode::SUCCESS)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    args.solver.apply(&mut cfg.solver);
    let report = run_experiment(&cfg, &args.out_dir)?;
    let mut groups: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
    for r in &report.records {
        groups.entry((r.method, r.n)).or_default().push(r.gap_to_true_min);
    }
    println!("{:<14} {:>6} {:>6} {:>14}", "method", "n", "runs", "median gap");
    for ((m, n), mut v) in groups {
        println!("{:<14} {:>6} {:>6} {:>14.6e}", m.name(), n, v.len(), median(&mut v));
    }
    println!("wrote {}", report.csv_path.display());
    for p in &report.plots {
        println!("wrote {}", p.display());
    }
    if report.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "{} runs failed; see {}",
            report.failures.len(),
            args.out_dir.join("failures.csv").display()
        );
        Ok(ExitCode::from(1))
    }
}

fn cmd_certify(args: &CertifyArgs) -> Result<ExitCode> {
    let saved = SavedRun::load(&args.run)?;
    let data = saved.sample_set()?;
    let out = recover_from_alpha(&data, &saved.solver, Array1::from(saved.alpha.clone()))?;
    let domain = data.domain().expect("saved runs carry a domain").clone();
    let m = match args.m {
        Some(m) => m,
        None => max_order(data.kernel()).context("the kernel admits no certificate order; pick a smoother kernel")?,
    };
    let f_at_z = args.f_at_z.or(saved.f_at_z).context("the run has no f(z_hat); pass --f-at-z")?;
    let seminorm = match args.seminorm {
        Some(v) => Seminorm::known(v),
        None => {
            if saved.config.data.is_some() {
                bail!("a run on tabulated data needs --seminorm");
            }
            let f = ksos::bench::build_test_function(&saved.config.function_spec(), saved.config.grid)?;
            estimate_seminorm(|x| f.eval(x), &domain, m, 16, None, args.seed)?
        }
    };
    let fill = match args.fill {
        FillArg::Given => FillEstimate::given(args.h.context("--fill given needs --h")?),
        kind => {
            let probes = ksos::geometry::default_probes(data.len());
            let all = fill_estimates(&data, &domain, args.delta, probes, args.seed)?;
            let want = |f: &&FillEstimate| match kind {
                FillArg::Empirical => f.kind == FillKind::Empirical,
                _ => matches!(f.kind, FillKind::Probabilistic { .. }),
            };
            *all.iter().find(want).context("the probabilistic fill bound needs i.i.d. uniform samples; use --fill empirical or given")?
        }
    };
    let opts = CertifyOptions { m, seminorm, fill };
    let cert: Certificate = if saved.solver.nu > 0.0 {
        certify_minimizer(&LocalizeOutput::from_solve(out, data.len()), &data, f_at_z, &opts)?
    } else {
        certify_minimum(&out, &data, f_at_z, &opts)?
    };
    let json = serde_json::to_string_pretty(&cert)?;
    println!("{json}");
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        let path = dir.join("certificate.json");
        fs::write(&path, json)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
