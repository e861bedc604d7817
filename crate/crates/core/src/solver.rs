//! Log-det-barrier dual of the subsampled sum-of-squares problem, solved by
//! damped Newton on the slice `alpha^T 1 = 1`.
//!
//! With `M(alpha) = Phi^T Diag(alpha) Phi + lambda I` and `t = eps / n`, the
//! dual objective is
//!
//! ```text
//! H(alpha) = sum_i alpha_i f_i - t log det M(alpha) + t log t - eps
//!            + nu/2 (-sum_i alpha_i |x_i|^2 + |sum_i alpha_i x_i|^2)
//! ```
//!
//! Every quantity is read off `W = Phi^T M^{-1} Phi`: the gradient is
//! `f_i - t W_ii` and the Hessian is `t W o W` (plus `nu X X^T`). When
//! `lambda = 0` and `R` is invertible, `W = Diag(alpha)^{-1}` exactly and the
//! problem is separable.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use ndarray_linalg::cholesky::{CholeskyFactorized, InverseCInto};
use ndarray_linalg::{Cholesky, Diag, FactorizeC, Solve, SolveC, SolveTriangular, UPLO};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, PointSet};
use crate::gram::{cholesky_jitter, cross_vector, gram, GramFactor, DEFAULT_JITTER_SCHEDULE};
use crate::kernels::KernelSpec;

pub const DEFAULT_EPS_BARRIER: f64 = 1e-3;
pub const DEFAULT_KAPPA: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 500;
/// Step halvings tried before a Newton iteration is abandoned.
pub const MAX_BACKTRACKS: usize = 60;

/// Parameters of one dual solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Trace penalty `lambda >= 0`.
    pub lambda: f64,
    /// Barrier weight `eps > 0`.
    pub eps_barrier: f64,
    /// Stop once `sqrt(n / eps) * decrement <= kappa`.
    pub kappa: f64,
    pub max_iters: usize,
    /// Parabola weight; zero solves the plain lower-bound problem.
    pub nu: f64,
    pub factorization: Factorization,
    /// Start [`solve`] at a barrier weight near the range of `f` and divide it
    /// by [`CONTINUATION_FACTOR`] per stage, warm-starting each stage.
    pub continuation: bool,
}

/// Barrier-weight ratio between consecutive continuation stages.
pub const CONTINUATION_FACTOR: f64 = 10.0;
/// Decrement threshold for every continuation stage but the last.
pub const STAGE_KAPPA: f64 = 0.1;

/// How `M(alpha)` is factored when `lambda > 0`.
///
/// With `lambda = 0` the separable closed form is always used.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factorization {
    /// `Reduced` when every squared pivot of `R` is at least
    /// [`REDUCED_PIVOT_FLOOR`], `Direct` otherwise.
    #[default]
    Auto,
    /// Cholesky of `M = R Diag(alpha) R^T + lambda I`.
    Direct,
    /// Cholesky of `N = Diag(alpha) + lambda K^{-1}`, using `M = R N R^T`
    /// and `W = N^{-1}`. About three times cheaper per iteration but
    /// sensitive to the conditioning of `K`.
    Reduced,
}

/// Smallest squared pivot of `R` for which `Auto` picks `Reduced`.
pub const REDUCED_PIVOT_FLOOR: f64 = 1e-5;

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 1e-3,
            eps_barrier: DEFAULT_EPS_BARRIER,
            kappa: DEFAULT_KAPPA,
            max_iters: DEFAULT_MAX_ITERS,
            nu: 0.0,
            factorization: Factorization::default(),
            continuation: true,
        }
    }
}

impl SolverConfig {
    pub fn new(lambda: f64) -> Self {
        SolverConfig { lambda, ..Default::default() }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps_barrier = eps;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_factorization(mut self, factorization: Factorization) -> Self {
        self.factorization = factorization;
        self
    }

    pub fn with_continuation(mut self, continuation: bool) -> Self {
        self.continuation = continuation;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_barrier.is_finite() && self.eps_barrier > 0.0) {
            return Err(invalid(format!("eps_barrier must be positive, got {}", self.eps_barrier)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(invalid(format!("nu must be nonnegative, got {}", self.nu)));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Sample points, function values and the Cholesky features of the kernel.
#[derive(Clone, Debug)]
pub struct SampleSet {
    points: PointSet,
    values: Array1<f64>,
    kernel: KernelSpec,
    gram: GramFactor,
    sq_norms: Array1<f64>,
    domain: Option<Domain>,
    rinv: OnceLock<Array2<f64>>,
    kinv: OnceLock<Array2<f64>>,
}

impl SampleSet {
    pub fn new(points: PointSet, values: Array1<f64>, kernel: KernelSpec) -> Result<Self> {
        Self::with_jitter_schedule(points, values, kernel, &DEFAULT_JITTER_SCHEDULE)
    }

    pub fn with_jitter_schedule(
        points: PointSet,
        values: Array1<f64>,
        kernel: KernelSpec,
        schedule: &[f64],
    ) -> Result<Self> {
        if values.len() != points.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("f(x_{i}) = {}", values[i])));
        }
        let k = gram(&kernel, &points)?;
        let gram = cholesky_jitter(&k, schedule)?;
        let sq_norms = points.points().map_axis(Axis(1), |r| r.dot(&r));
        Ok(SampleSet {
            points,
            values,
            kernel,
            gram,
            sq_norms,
            domain: None,
            rinv: OnceLock::new(),
            kinv: OnceLock::new(),
        })
    }

    /// Evaluates `f` at every point.
    pub fn from_fn<F>(points: PointSet, kernel: KernelSpec, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> f64,
    {
        let values: Array1<f64> = points.rows().map(&mut f).collect();
        Self::new(points, values, kernel)
    }

    /// Attaches the search region; the candidate minimizer is projected onto it.
    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        if domain.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: domain.dim() });
        }
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn gram(&self) -> &GramFactor {
        &self.gram
    }

    pub fn domain(&self) -> Option<&Domain> {
        self.domain.as_ref()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn range(&self) -> f64 {
        self.max_value() - self.min_value()
    }

    /// `R^{-1}`, computed on first use.
    pub(crate) fn factor_inverse(&self) -> &Array2<f64> {
        self.rinv.get_or_init(|| {
            let eye = Array2::<f64>::eye(self.len());
            self.gram
                .factor()
                .solve_triangular(UPLO::Upper, Diag::NonUnit, &eye)
                .expect("R has a positive diagonal")
        })
    }

    /// `(K + eta I)^{-1} = R^{-1} R^{-T}`, computed on first use.
    pub(crate) fn kernel_inverse(&self) -> &Array2<f64> {
        self.kinv.get_or_init(|| {
            let rinv = self.factor_inverse();
            rinv.dot(&rinv.t())
        })
    }

    fn min_pivot_sq(&self) -> f64 {
        self.gram.factor().diag().iter().fold(f64::INFINITY, |a, &v| a.min(v * v))
    }

    /// Index of the smallest sampled value.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Factorization of `M(alpha)`.
#[derive(Clone, Debug)]
enum MFactor {
    /// `lambda = 0`: `M = R Diag(alpha) R^T` with `alpha > 0`.
    Separable,
    /// Lower Cholesky factor of `M`.
    Direct(Array2<f64>),
    /// Lower Cholesky factor of `N = Diag(alpha) + lambda K^{-1}`.
    Reduced(Array2<f64>),
}

fn use_reduced(data: &SampleSet, cfg: &SolverConfig) -> bool {
    match cfg.factorization {
        Factorization::Auto => data.min_pivot_sq() >= REDUCED_PIVOT_FLOOR,
        Factorization::Direct => false,
        Factorization::Reduced => true,
    }
}

fn lower_cholesky(m: &Array2<f64>) -> Result<Array2<f64>> {
    let l = m.cholesky(UPLO::Lower).map_err(|_| Error::OutOfDomain)?;
    if l.diag().iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::OutOfDomain);
    }
    Ok(l)
}

fn log_diag_sum(l: &Array2<f64>) -> f64 {
    l.diag().iter().map(|v| v.ln()).sum()
}

/// Factors `M(alpha)` and returns `log det M(alpha)` alongside.
fn factor_m(data: &SampleSet, cfg: &SolverConfig, alpha: &Array1<f64>) -> Result<(MFactor, f64)> {
    let r = data.gram.factor();
    let lambda = cfg.lambda;
    if lambda == 0.0 {
        if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::OutOfDomain);
        }
        let logdet = 2.0 * log_diag_sum(r) + alpha.iter().map(|v| v.ln()).sum::<f64>();
        return Ok((MFactor::Separable, logdet));
    }
    if use_reduced(data, cfg) {
        let mut n = data.kernel_inverse() * lambda;
        for (i, &a) in alpha.iter().enumerate() {
            n[[i, i]] += a;
        }
        let l = lower_cholesky(&n)?;
        let logdet = 2.0 * (log_diag_sum(r) + log_diag_sum(&l));
        return Ok((MFactor::Reduced(l), logdet));
    }
    let mut scaled = r.clone();
    for (mut col, &a) in scaled.axis_iter_mut(Axis(1)).zip(alpha) {
        col *= a;
    }
    let mut m = scaled.dot(&r.t());
    m.diag_mut().mapv_inplace(|v| v + lambda);
    let l = lower_cholesky(&m)?;
    let logdet = 2.0 * log_diag_sum(&l);
    Ok((MFactor::Direct(l), logdet))
}

fn objective_value(data: &SampleSet, cfg: &SolverConfig, alpha: &Array1<f64>, logdet: f64) -> f64 {
    let t = cfg.eps_barrier / data.len() as f64;
    let mut h = alpha.dot(&data.values) - t * logdet + t * t.ln() - cfg.eps_barrier;
    if cfg.nu != 0.0 {
        let z = data.points.points().t().dot(alpha);
        h += 0.5 * cfg.nu * (z.dot(&z) - alpha.dot(&data.sq_norms));
    }
    h
}

/// A dual iterate with the factorization used by one Newton iteration.
#[derive(Clone, Debug)]
pub struct DualState {
    alpha: Array1<f64>,
    objective: f64,
    factor: MFactor,
    /// `Phi^T M^{-1} Phi`.
    w: Array2<f64>,
}

/// Newton direction on the slice and its decrement.
#[derive(Clone, Debug)]
pub struct NewtonStep {
    pub direction: Array1<f64>,
    /// `sqrt(Delta^T H'' Delta)`.
    pub decrement: f64,
    /// `sqrt(n / eps) * decrement`, the decrement of the self-concordant
    /// function `(n / eps) H`.
    pub scaled_decrement: f64,
    /// Ridge added to `H''` before it could be factored.
    pub ridge: f64,
}

impl DualState {
    /// Factors `M(alpha)`; fails with [`Error::OutOfDomain`] outside the barrier domain.
    pub fn new(data: &SampleSet, cfg: &SolverConfig, alpha: Array1<f64>) -> Result<Self> {
        if alpha.len() != data.len() {
            return Err(Error::DimensionMismatch { expected: data.len(), got: alpha.len() });
        }
        let (factor, logdet) = factor_m(data, cfg, &alpha)?;
        let objective = objective_value(data, cfg, &alpha, logdet);
        Ok(Self::from_factor(data, alpha, factor, objective))
    }

    fn from_factor(data: &SampleSet, alpha: Array1<f64>, factor: MFactor, objective: f64) -> Self {
        let w = match &factor {
            MFactor::Separable => Array2::from_diag(&alpha.mapv(f64::recip)),
            MFactor::Direct(l) => {
                let y = l
                    .solve_triangular(UPLO::Lower, Diag::NonUnit, data.gram.factor())
                    .expect("nonsingular triangular factor");
                y.t().dot(&y)
            }
            MFactor::Reduced(l) => CholeskyFactorized { factor: l.clone(), uplo: UPLO::Lower }
                .invc_into()
                .expect("nonsingular Cholesky factor"),
        };
        DualState { alpha, objective, factor, w }
    }

    pub fn alpha(&self) -> &Array1<f64> {
        &self.alpha
    }

    /// `H(alpha)` including its constant terms.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// `Phi_i^T M^{-1} Phi_j`.
    pub fn feature_inverse(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn gradient(&self, data: &SampleSet, cfg: &SolverConfig) -> Array1<f64> {
        let t = cfg.eps_barrier / data.len() as f64;
        let mut g = &data.values - &(self.w.diag().to_owned() * t);
        if cfg.nu != 0.0 {
            let x = data.points.points();
            let z = x.t().dot(&self.alpha);
            g = g - &(data.sq_norms.clone() * (0.5 * cfg.nu)) + &(x.dot(&z) * cfg.nu);
        }
        g
    }

    pub fn hessian(&self, data: &SampleSet, cfg: &SolverConfig) -> Array2<f64> {
        let t = cfg.eps_barrier / data.len() as f64;
        let mut h = self.w.mapv(|v| t * v * v);
        if cfg.nu != 0.0 {
            let x = data.points.points();
            h = h + x.dot(&x.t()) * cfg.nu;
        }
        h
    }

    /// Newton direction projected onto `1^T Delta = 0`.
    pub fn newton_step(&self, data: &SampleSet, cfg: &SolverConfig) -> Result<NewtonStep> {
        let n = data.len();
        // constant shifts of g leave the projected direction unchanged
        let g = self.gradient(data, cfg);
        let g = &g - g.mean().expect("non-empty");
        let h = self.hessian(data, cfg);
        let ones = Array1::<f64>::ones(n);
        let scale = h.diag().sum() / n as f64;
        if !scale.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Newton system".into()));
        }
        let mut ridge = 0.0;
        let mut next_ridge = 1e-12 * scale;
        let (hg, h1, h_used) = loop {
            let mut hr = h.clone();
            hr.diag_mut().mapv_inplace(|v| v + ridge);
            if let Ok(fac) = hr.factorizec(UPLO::Lower) {
                let hg = fac.solvec(&g).map_err(|_| Error::SingularSystem)?;
                let h1 = fac.solvec(&ones).map_err(|_| Error::SingularSystem)?;
                let denom = h1.sum();
                if denom.is_finite() && denom > 0.0 && hg.iter().all(|v| v.is_finite()) {
                    break (hg, h1, hr);
                }
            }
            if next_ridge > 1e-2 * scale {
                return Err(Error::SingularSystem);
            }
            ridge = next_ridge;
            next_ridge *= 100.0;
        };
        let mut direction = &hg - &(h1.clone() * (hg.sum() / h1.sum()));
        let drift = direction.sum() / n as f64;
        direction.mapv_inplace(|v| v - drift);
        let decrement = direction.dot(&h_used.dot(&direction)).max(0.0).sqrt();
        let scaled_decrement = (n as f64 / cfg.eps_barrier).sqrt() * decrement;
        Ok(NewtonStep { direction, decrement, scaled_decrement, ridge })
    }
}

/// Termination reason of [`solve`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Scaled decrement fell below `kappa`.
    Converged,
    /// Round-off prevented any further decrease of the objective.
    Stalled,
    MaxIters,
}

/// One damped-Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    /// Objective before the step.
    pub objective: f64,
    pub decrement: f64,
    pub scaled_decrement: f64,
    /// Fraction of the Newton direction taken.
    pub step: f64,
    pub backtracks: usize,
}

/// `(eps / n) M^{-1}` stored as `scale * G^T G`.
#[derive(Clone, Debug)]
pub struct BHat {
    scale: f64,
    g: Array2<f64>,
}

impl BHat {
    /// `u^T B u`.
    pub fn quad_form(&self, u: ArrayView1<'_, f64>) -> f64 {
        let v = self.g.dot(&u);
        self.scale * v.dot(&v)
    }

    pub fn trace(&self) -> f64 {
        self.scale * self.g.iter().map(|v| v * v).sum::<f64>()
    }

    /// Diagonal entries `B_ii`.
    pub fn diag(&self) -> Array1<f64> {
        self.g.map_axis(Axis(0), |c| self.scale * c.dot(&c))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.g.t().dot(&self.g) * self.scale
    }

    /// `u_j^T B u_j` for every column `u_j` of `u`.
    pub fn quad_forms(&self, u: &Array2<f64>) -> Array1<f64> {
        let v = self.g.dot(u);
        v.map_axis(Axis(0), |c| self.scale * c.dot(&c))
    }
}

/// Recovered primal quantities and the iteration log.
#[derive(Clone, Debug)]
pub struct SolveOutput {
    /// Multiplier estimate `mean_i H'(alpha)_i`.
    pub c_hat: f64,
    /// Largest `c` keeping every constraint `f_i - c - Phi_i^T B Phi_i >= 0`.
    pub c_feas: f64,
    pub alpha: Array1<f64>,
    /// Candidate minimizer, projected onto the domain when one is attached.
    pub z_hat: Vec<f64>,
    /// `sum_i alpha_i x_i` before projection.
    pub z_raw: Vec<f64>,
    pub b_hat: BHat,
    /// `Phi_i^T B Phi_i`.
    pub phi_b_phi: Array1<f64>,
    pub trace_b: f64,
    /// `max_i |f_i - c_hat - Phi_i^T B Phi_i|` (with parabola terms when `nu > 0`).
    pub residual_max: f64,
    pub history: Vec<IterRecord>,
    pub iterations: usize,
    pub status: SolveStatus,
    pub backtracks: usize,
    pub jitter: f64,
    pub objective: f64,
    pub final_decrement: f64,
    pub lambda: f64,
    pub eps_barrier: f64,
    pub nu: f64,
}

impl SolveOutput {
    /// Height of the fitted parabola's vertex, `c_hat - nu/2 |z|^2`.
    pub fn vertex_value(&self) -> f64 {
        self.c_hat - 0.5 * self.nu * self.z_raw.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            c_hat: self.c_hat,
            c_feas: self.c_feas,
            z_hat: self.z_hat.clone(),
            trace_b: self.trace_b,
            residual_max: self.residual_max,
            final_decrement: self.final_decrement,
            iterations: self.iterations,
            status: self.status,
            backtracks: self.backtracks,
            jitter: self.jitter,
            lambda: self.lambda,
            eps_barrier: self.eps_barrier,
            nu: self.nu,
        }
    }
}

/// Serializable digest of a [`SolveOutput`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub c_hat: f64,
    pub c_feas: f64,
    pub z_hat: Vec<f64>,
    pub trace_b: f64,
    pub residual_max: f64,
    pub final_decrement: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub backtracks: usize,
    pub jitter: f64,
    pub lambda: f64,
    pub eps_barrier: f64,
    pub nu: f64,
}

fn reproject(alpha: &mut Array1<f64>) {
    let shift = (1.0 - alpha.sum()) / alpha.len() as f64;
    alpha.mapv_inplace(|v| v + shift);
}

/// Barrier weights visited by [`solve`], ending at `cfg.eps_barrier`.
pub fn barrier_schedule(data: &SampleSet, cfg: &SolverConfig) -> Vec<f64> {
    let eps = cfg.eps_barrier;
    if !cfg.continuation {
        return vec![eps];
    }
    let mut e = data.range().max(eps);
    let mut out = vec![e];
    while e > eps {
        e = (e / CONTINUATION_FACTOR).max(eps);
        out.push(e);
    }
    out
}

/// Damped Newton from `alpha = 1/n` until the scaled decrement is at most
/// `kappa`, through the stages of [`barrier_schedule`].
pub fn solve(data: &SampleSet, cfg: &SolverConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    let n = data.len();
    let mut alpha = Array1::from_elem(n, 1.0 / n as f64);
    let mut history = Vec::new();
    let mut backtracks = 0;
    let schedule = barrier_schedule(data, cfg);
    let (last, early) = schedule.split_last().expect("non-empty schedule");
    for &eps in early {
        let stage = SolverConfig { eps_barrier: eps, kappa: cfg.kappa.max(STAGE_KAPPA), ..cfg.clone() };
        let run = newton(data, &stage, DualState::new(data, &stage, alpha)?)?;
        history.extend(run.history);
        backtracks += run.backtracks;
        alpha = run.state.alpha;
    }
    let stage = SolverConfig { eps_barrier: *last, ..cfg.clone() };
    let mut run = newton(data, &stage, DualState::new(data, &stage, alpha)?)?;
    history.append(&mut run.history);
    run.history = history;
    run.backtracks += backtracks;
    Ok(run.finish(data, cfg))
}

/// Damped Newton from a given feasible iterate at `cfg.eps_barrier`.
pub fn solve_from(data: &SampleSet, cfg: &SolverConfig, state: DualState) -> Result<SolveOutput> {
    cfg.validate()?;
    Ok(newton(data, cfg, state)?.finish(data, cfg))
}

struct NewtonRun {
    state: DualState,
    history: Vec<IterRecord>,
    status: SolveStatus,
    backtracks: usize,
    final_decrement: f64,
}

impl NewtonRun {
    fn finish(self, data: &SampleSet, cfg: &SolverConfig) -> SolveOutput {
        recover(data, cfg, self.state, self.history, self.status, self.backtracks, self.final_decrement)
    }
}

fn newton(data: &SampleSet, cfg: &SolverConfig, mut state: DualState) -> Result<NewtonRun> {
    if !state.objective.is_finite() {
        return Err(Error::NonFinite("dual objective at the starting point".into()));
    }
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIters;
    let mut backtracks = 0;
    let mut final_decrement = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let step = state.newton_step(data, cfg)?;
        final_decrement = step.scaled_decrement;
        if step.scaled_decrement <= cfg.kappa {
            status = SolveStatus::Converged;
            break;
        }
        let slack = 1e-13 * (1.0 + state.objective.abs());
        let damped = 1.0 / (1.0 + step.scaled_decrement);
        let try_step = |t: f64| -> Option<(Array1<f64>, MFactor, f64)> {
            let mut trial = &state.alpha - &(step.direction.clone() * t);
            reproject(&mut trial);
            let (factor, logdet) = factor_m(data, cfg, &trial).ok()?;
            let obj = objective_value(data, cfg, &trial, logdet);
            (obj.is_finite() && obj <= state.objective + slack).then_some((trial, factor, obj))
        };
        let mut accepted = None;
        let mut t = damped;
        for bt in 0..MAX_BACKTRACKS {
            if let Some((trial, factor, obj)) = try_step(t) {
                accepted = Some((trial, factor, obj, bt));
                break;
            }
            t *= 0.5;
        }
        let record = |step_taken: f64, bt: usize| IterRecord {
            objective: state.objective,
            decrement: step.decrement,
            scaled_decrement: step.scaled_decrement,
            step: step_taken,
            backtracks: bt,
        };
        log::trace!(
            "H = {:.12e}, scaled decrement {:.3e}, step {t:.3e}",
            state.objective,
            step.scaled_decrement
        );
        match accepted {
            Some((alpha, factor, obj, bt)) => {
                history.push(record(t, bt));
                backtracks += bt;
                state = DualState::from_factor(data, alpha, factor, obj);
            }
            None if step.scaled_decrement < 1e-2 => {
                history.push(record(0.0, MAX_BACKTRACKS));
                status = SolveStatus::Stalled;
                break;
            }
            None => return Err(Error::BacktrackFailed),
        }
    }
    if status == SolveStatus::MaxIters {
        log::warn!(
            "damped Newton stopped after {} iterations with scaled decrement {final_decrement:.3e}",
            cfg.max_iters
        );
    }
    Ok(NewtonRun { state, history, status, backtracks, final_decrement })
}

fn recover(
    data: &SampleSet,
    cfg: &SolverConfig,
    state: DualState,
    history: Vec<IterRecord>,
    status: SolveStatus,
    backtracks: usize,
    final_decrement: f64,
) -> SolveOutput {
    let n = data.len();
    let t = cfg.eps_barrier / n as f64;
    let grad = state.gradient(data, cfg);
    let c_hat = grad.mean().expect("non-empty");
    let phi_b_phi = state.w.diag().to_owned() * t;
    let x = data.points.points();
    let z = x.t().dot(&state.alpha);
    let shifted = if cfg.nu != 0.0 {
        &data.values - &(data.sq_norms.clone() * (0.5 * cfg.nu)) + &(x.dot(&z) * cfg.nu)
    } else {
        data.values.clone()
    };
    let slack = &shifted - &phi_b_phi;
    let c_feas = slack.iter().copied().fold(f64::INFINITY, f64::min);
    let residual_max = slack.iter().map(|v| (v - c_hat).abs()).fold(0.0, f64::max);
    // M^{-1} = G^T G
    let g = match &state.factor {
        MFactor::Separable => {
            let mut g = data.factor_inverse().clone();
            for (mut row, &a) in g.axis_iter_mut(Axis(0)).zip(&state.alpha) {
                row /= a.sqrt();
            }
            g
        }
        MFactor::Direct(l) => {
            let eye = Array2::<f64>::eye(n);
            l.solve_triangular(UPLO::Lower, Diag::NonUnit, &eye).expect("invertible L")
        }
        MFactor::Reduced(l) => l
            .solve_triangular(UPLO::Lower, Diag::NonUnit, data.factor_inverse())
            .expect("invertible L"),
    };
    let b_hat = BHat { scale: t, g };
    let trace_b = b_hat.trace();
    let z_raw = z.to_vec();
    let mut z_hat = z_raw.clone();
    if let Some(domain) = &data.domain {
        domain.project(&mut z_hat);
    }
    SolveOutput {
        c_hat,
        c_feas,
        alpha: state.alpha,
        z_hat,
        z_raw,
        b_hat,
        phi_b_phi,
        trace_b,
        residual_max,
        iterations: history.len(),
        history,
        status,
        backtracks,
        jitter: data.gram.jitter(),
        objective: state.objective,
        final_decrement,
        lambda: cfg.lambda,
        eps_barrier: cfg.eps_barrier,
        nu: cfg.nu,
    }
}

/// Re-derives a [`SolveOutput`] from a stored dual variable without iterating.
pub fn recover_from_alpha(data: &SampleSet, cfg: &SolverConfig, alpha: Array1<f64>) -> Result<SolveOutput> {
    cfg.validate()?;
    let state = DualState::new(data, cfg, alpha)?;
    let step = state.newton_step(data, cfg)?;
    let status = if step.scaled_decrement <= cfg.kappa { SolveStatus::Converged } else { SolveStatus::MaxIters };
    Ok(recover(data, cfg, state, Vec::new(), status, 0, step.scaled_decrement))
}

/// Worst-case Newton iteration count for the damped method, with the trace
/// of the unknown optimal operator replaced by `trace_b`.
pub fn iteration_budget(data: &SampleSet, cfg: &SolverConfig, trace_b: f64) -> Result<f64> {
    let n = data.len() as f64;
    let mean = data.values.mean().expect("non-empty");
    let mut k = data.gram.kernel_matrix().clone();
    k.diag_mut().mapv_inplace(|v| v + n * cfg.lambda);
    let logdet = match k.cholesky(UPLO::Lower) {
        Ok(l) => 2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>(),
        Err(_) => return Err(Error::SingularSystem),
    };
    let loglog = if cfg.kappa < 1.0 { (1.0 / cfg.kappa).ln().ln() } else { 0.0 };
    Ok((n / cfg.eps_barrier) * (mean - data.min_value())
        + logdet
        + (n / cfg.eps_barrier) * cfg.lambda * trace_b
        + cfg.eps_barrier.ln()
        + loglog)
}

fn features_at(data: &SampleSet, xs: &Array2<f64>) -> Result<Array2<f64>> {
    if xs.ncols() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: xs.ncols() });
    }
    let n = data.len();
    let mut v = Array2::<f64>::zeros((n, xs.nrows()));
    for (j, x) in xs.axis_iter(Axis(0)).enumerate() {
        let x = x.to_vec();
        v.column_mut(j).assign(&cross_vector(&data.kernel, &data.points, &x)?);
    }
    let rt = data.gram.factor().t().to_owned();
    Ok(rt.solve_triangular(UPLO::Lower, Diag::NonUnit, &v).expect("invertible R"))
}

/// Learned model `g(x) = v(x)^T R^{-1} B R^{-T} v(x)` at each row of `xs`,
/// where `v(x)_i = k(x, x_i)`.
pub fn model_eval_many(out: &SolveOutput, data: &SampleSet, xs: &Array2<f64>) -> Result<Array1<f64>> {
    let u = features_at(data, xs)?;
    Ok(u.axis_iter(Axis(1)).map(|c| out.b_hat.quad_form(c)).collect())
}

pub fn model_eval(out: &SolveOutput, data: &SampleSet, x: &[f64]) -> Result<f64> {
    let xs = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
    Ok(model_eval_many(out, data, &xs)?[0])
}

/// The model in kernel form,
/// `eps / (n lambda) (k(x, x) - q^T (K + lambda Diag(alpha)^{-1})^{-1} q)`.
///
/// It uses the full feature `phi(x)` where [`model_eval`] uses its projection
/// onto the span of the samples, so the two agree on the samples and differ
/// elsewhere by `eps / (n lambda)` times the power function
/// `k(x, x) - v^T K^{-1} v`.
pub fn model_eval_kernel_form(out: &SolveOutput, data: &SampleSet, x: &[f64]) -> Result<f64> {
    if out.lambda <= 0.0 {
        return Err(Error::Precondition("kernel form needs lambda > 0".into()));
    }
    if out.alpha.iter().any(|&a| a == 0.0) {
        return Err(Error::Precondition("kernel form needs alpha_i != 0".into()));
    }
    let q = cross_vector(&data.kernel, &data.points, x)?;
    let mut a = data.gram.kernel_matrix().clone();
    for (i, &al) in out.alpha.iter().enumerate() {
        a[[i, i]] += out.lambda / al;
    }
    let y = a.solve(&q).map_err(|_| Error::SingularSystem)?;
    let n = data.len() as f64;
    Ok(out.eps_barrier / (n * out.lambda) * (1.0 - q.dot(&y)))
}

/// Power function `k(x, x) - v^T K^{-1} v` of the sample set.
pub fn power_function(data: &SampleSet, x: &[f64]) -> Result<f64> {
    let q = cross_vector(&data.kernel, &data.points, x)?;
    let rt = data.gram.factor().t().to_owned();
    let u = rt.solve_triangular(UPLO::Lower, Diag::NonUnit, &q).expect("invertible R");
    Ok(1.0 - u.dot(&u))
}
