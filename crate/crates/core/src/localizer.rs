//! Minimizer localization with a parabola lower bound, and the warm-restart
//! driver that re-solves on shrinking balls around the current candidate.
//!
//! With `nu > 0` the solver fits `f(x) >= c - nu/2 |x|^2 + nu x^T z` on the
//! samples, i.e. a concave parabola with vertex `z`. The vertex height
//! `c - nu/2 |z|^2` estimates the minimum and `z` the minimizer, provided
//! `nu` is below the curvature `beta` of the quadratic growth of `f` around
//! its minimizer.

use ndarray::Array2;
use ndarray_linalg::{EigValsh, UPLO};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, PointSet, Sampler};
use crate::kernels::{KernelConstants, KernelSpec};
use crate::rng;
use crate::solver::{solve, SampleSet, SolveOutput, SolveStatus, SolverConfig};

/// Result of a parabola solve or of a full warm-restart run.
#[derive(Clone, Debug)]
pub struct LocalizeOutput {
    pub c_hat: f64,
    pub z_hat: Vec<f64>,
    /// `c_hat - nu/2 |z_hat|^2`, the estimate of the minimum value.
    pub vertex_value: f64,
    /// Output of the last successful solve; holds `B_hat` and `alpha`.
    pub last: SolveOutput,
    /// One row per warm-restart stage; empty for a single parabola solve.
    pub stage_log: Vec<StageRecord>,
    pub status: LocalizeStatus,
    /// Number of evaluations of `f`.
    pub evaluations: usize,
    /// Samples of the last successful solve, when the caller did not supply them.
    pub data: Option<SampleSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizeStatus {
    Complete,
    /// A stage failed; the output holds the last successful stage.
    StageFailed { stage: usize, reason: String },
}

/// One warm-restart stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub sigma: f64,
    pub c_hat: f64,
    pub vertex_value: f64,
    pub z: Vec<f64>,
    /// `|z_t - z_{t-1}|`, with `z_0` the initial center.
    pub step: f64,
    pub iterations: usize,
    pub solve_status: SolveStatus,
}

/// How the kernel bandwidth follows the stage radius.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelScaling {
    /// `sigma_t = sigma r_t / r_0`, keeping the sampling problem self-similar.
    #[default]
    Radius,
    Fixed,
}

/// Warm-restart schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestartSchedule {
    pub stages: usize,
    pub n_per_stage: usize,
    /// Radius multiplier between stages.
    pub shrink: f64,
    /// Initial center; defaults to the domain center.
    pub center: Option<Vec<f64>>,
    /// Initial radius; defaults to the domain's outer radius.
    pub radius: Option<f64>,
    pub kernel_scaling: KernelScaling,
}

impl Default for RestartSchedule {
    fn default() -> Self {
        RestartSchedule {
            stages: 4,
            n_per_stage: 150,
            shrink: (-1.0f64).exp(),
            center: None,
            radius: None,
            kernel_scaling: KernelScaling::Radius,
        }
    }
}

impl RestartSchedule {
    pub fn new(stages: usize, n_per_stage: usize) -> Self {
        RestartSchedule { stages, n_per_stage, ..Self::default() }
    }

    pub fn with_shrink(mut self, shrink: f64) -> Self {
        self.shrink = shrink;
        self
    }

    pub fn with_ball(mut self, center: Vec<f64>, radius: f64) -> Self {
        self.center = Some(center);
        self.radius = Some(radius);
        self
    }

    pub fn with_kernel_scaling(mut self, scaling: KernelScaling) -> Self {
        self.kernel_scaling = scaling;
        self
    }

    /// `r_t = r_0 shrink^t` for `t = 0..stages`.
    pub fn radii(&self, r0: f64) -> Vec<f64> {
        (0..self.stages).map(|t| r0 * self.shrink.powi(t as i32)).collect()
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        if self.stages == 0 || self.n_per_stage == 0 {
            return Err(invalid("stages and n_per_stage must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(invalid(format!("shrink must lie in (0, 1), got {}", self.shrink)));
        }
        if let Some(c) = &self.center {
            if c.len() != domain.dim() {
                return Err(Error::DimensionMismatch { expected: domain.dim(), got: c.len() });
            }
            if !domain.contains(c) {
                return Err(invalid("initial center lies outside the domain"));
            }
        }
        if let Some(r) = self.radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid(format!("radius must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

impl LocalizeOutput {
    /// Wraps a single solve that used `evaluations` function values.
    pub fn from_solve(out: SolveOutput, evaluations: usize) -> Self {
        LocalizeOutput {
            c_hat: out.c_hat,
            z_hat: out.z_hat.clone(),
            vertex_value: out.vertex_value(),
            last: out,
            stage_log: Vec::new(),
            status: LocalizeStatus::Complete,
            evaluations,
            data: None,
        }
    }
}

/// Parabola solve on fixed samples. With `nu = 0` this is exactly [`solve`].
pub fn solve_parabola(data: &SampleSet, cfg: &SolverConfig) -> Result<LocalizeOutput> {
    Ok(LocalizeOutput::from_solve(solve(data, cfg)?, data.len()))
}

const MAX_REJECTIONS_PER_POINT: usize = 100_000;

/// `n` uniform points in `B_r(center)` intersected with `domain`, by
/// rejection from the bounding box of the intersection.
pub fn sample_in_ball(domain: &Domain, center: &[f64], radius: f64, n: usize, seed: u64) -> Result<PointSet> {
    let d = domain.dim();
    if center.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: center.len() });
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(invalid(format!("radius must be positive, got {radius}")));
    }
    let (dlo, dhi) = domain.bounds();
    let lo: Vec<f64> = (0..d).map(|k| (center[k] - radius).max(dlo[k])).collect();
    let hi: Vec<f64> = (0..d).map(|k| (center[k] + radius).min(dhi[k])).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return Err(invalid("ball does not meet the domain"));
    }
    let frame = Domain::boxed(lo, hi)?;
    let mut r = rng::from_seed(seed);
    let mut pts = Array2::<f64>::zeros((n, d));
    let r2 = radius * radius;
    let mut budget = MAX_REJECTIONS_PER_POINT.saturating_mul(n.max(1));
    for i in 0..n {
        loop {
            if budget == 0 {
                return Err(invalid("rejection sampling in ball and domain exhausted its budget"));
            }
            budget -= 1;
            let x = frame.sample_point(&mut r);
            let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
            if d2 <= r2 && domain.contains(&x) {
                pts.row_mut(i).assign(&ndarray::ArrayView1::from(&x));
                break;
            }
        }
    }
    // uniform on the intersection, not on the domain
    PointSet::with_sampler(pts, Sampler::Given)
}

/// Runs the warm-restart scheme: stage `t` samples `n_per_stage` fresh points
/// in `B_{r_{t-1}}(z_{t-1})` within `domain`, solves the parabola problem,
/// recenters at its vertex and shrinks the radius.
pub fn warm_restart<F>(
    mut f: F,
    domain: &Domain,
    kernel: &KernelSpec,
    cfg: &SolverConfig,
    schedule: &RestartSchedule,
    seed: u64,
) -> Result<LocalizeOutput>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    schedule.validate(domain)?;
    if kernel.dim() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: domain.dim(), got: kernel.dim() });
    }
    let r0 = schedule.radius.unwrap_or_else(|| domain.outer_radius());
    let mut center = schedule.center.clone().unwrap_or_else(|| domain.center());
    let mut log = Vec::with_capacity(schedule.stages);
    let mut best: Option<(SolveOutput, SampleSet)> = None;
    let mut evaluations = 0;
    let mut status = LocalizeStatus::Complete;
    for (t, radius) in schedule.radii(r0).into_iter().enumerate() {
        let sigma = match schedule.kernel_scaling {
            KernelScaling::Radius => kernel.sigma() * radius / r0,
            KernelScaling::Fixed => kernel.sigma(),
        };
        let attempt = (|| -> Result<(SolveOutput, SampleSet)> {
            let pts = sample_in_ball(domain, &center, radius, schedule.n_per_stage, rng::derive_seed(seed, t as u64))?;
            evaluations += pts.len();
            let data = SampleSet::from_fn(pts, kernel.with_sigma(sigma)?, &mut f)?.with_domain(domain.clone())?;
            Ok((solve(&data, cfg)?, data))
        })();
        match attempt {
            Ok((out, data)) => {
                let step = out.z_hat.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                log::debug!("stage {t}: radius {radius:.3e}, c_hat {:.6e}, step {step:.3e}", out.c_hat);
                log.push(StageRecord {
                    stage: t,
                    center: center.clone(),
                    radius,
                    sigma,
                    c_hat: out.c_hat,
                    vertex_value: out.vertex_value(),
                    z: out.z_hat.clone(),
                    step,
                    iterations: out.iterations,
                    solve_status: out.status,
                });
                center = out.z_hat.clone();
                best = Some((out, data));
            }
            Err(e) if best.is_some() => {
                log::warn!("warm restart stage {t} failed: {e}; keeping stage {}", t - 1);
                status = LocalizeStatus::StageFailed { stage: t, reason: e.to_string() };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let (last, data) = best.expect("first stage succeeded");
    Ok(LocalizeOutput {
        c_hat: last.c_hat,
        z_hat: last.z_hat.clone(),
        vertex_value: last.vertex_value(),
        last,
        stage_log: log,
        status,
        evaluations,
        data: Some(data),
    })
}

/// Curvature estimate from finite-difference Hessians.
#[derive(Clone, Debug)]
pub struct BetaEstimate {
    /// Smallest Hessian eigenvalue over all probe points.
    pub beta: f64,
    /// Largest Hessian eigenvalue over all probe points.
    pub max_curvature: f64,
    /// Hessian at the center.
    pub hessian: Array2<f64>,
    pub evaluations: usize,
}

impl BetaEstimate {
    /// `beta / 4`, a conservative parabola weight.
    pub fn suggested_nu(&self) -> f64 {
        (self.beta / 4.0).max(0.0)
    }
}

fn fd_hessian<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64) -> Array2<f64> {
    let d = x.len();
    let mut hess = Array2::<f64>::zeros((d, d));
    let mut y = x.to_vec();
    let f0 = f(x);
    for i in 0..d {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        hess[[i, i]] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..d {
            let mut corner = |si: f64, sj: f64| {
                y[i] = x[i] + si * h;
                y[j] = x[j] + sj * h;
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h * h);
            hess[[i, j]] = v;
            hess[[j, i]] = v;
        }
    }
    hess
}

/// Estimates the growth curvature `beta` as the smallest eigenvalue of
/// central-difference Hessians at `center` and at `probes` uniform points
/// within `spread` of it.
///
/// This measures local curvature only; the global constant can be smaller
/// when `f` flattens away from its minimizer.
pub fn estimate_beta<F>(mut f: F, center: &[f64], h: f64, probes: usize, spread: f64, seed: u64) -> Result<BetaEstimate>
where
    F: FnMut(&[f64]) -> f64,
{
    if center.is_empty() {
        return Err(invalid("center must be non-empty"));
    }
    if !(h.is_finite() && h > 0.0) || !(spread.is_finite() && spread >= 0.0) {
        return Err(invalid("step and spread must be positive"));
    }
    let d = center.len();
    let mut evaluations = 0;
    let mut counted = |x: &[f64]| {
        evaluations += 1;
        f(x)
    };
    let hessian = fd_hessian(&mut counted, center, h);
    let eig = |m: &Array2<f64>| m.eigvalsh(UPLO::Lower).map_err(|e| Error::NonFinite(e.to_string()));
    let e0 = eig(&hessian)?;
    let mut beta = e0[0];
    let mut max_curvature = e0[d - 1];
    if probes > 0 && spread > 0.0 {
        let ball = Domain::ball(center.to_vec(), spread)?;
        let mut r = rng::from_seed(seed);
        for _ in 0..probes {
            let x = ball.sample_point(&mut r);
            let e = eig(&fd_hessian(&mut counted, &x, h))?;
            beta = beta.min(e[0]);
            max_curvature = max_curvature.max(e[d - 1]);
        }
    }
    Ok(BetaEstimate { beta, max_curvature, hessian, evaluations })
}

/// Constant-free value of the per-run sample size
/// `C^{d/m} (F/nu)^{d/m} R^d log(1/target)` with
/// `C = 3^m C_0 M D_m` and `F = seminorm + nu + trace_guess`.
///
/// The true bound carries an unspecified multiplicative constant and a
/// `trace_guess` that cannot be observed, so this is for orientation only.
pub fn stage_size_formula(
    constants: &KernelConstants,
    d: usize,
    seminorm: f64,
    nu: f64,
    trace_guess: f64,
    radius: f64,
    target: f64,
) -> Result<f64> {
    if !(nu > 0.0 && radius > 0.0 && target > 0.0 && target < 1.0) {
        return Err(invalid("need nu > 0, radius > 0 and target in (0, 1)"));
    }
    let m = constants.m as f64;
    let ratio = d as f64 / m;
    let c = 3f64.powf(m) * constants.c0 * constants.big_m * constants.d_m;
    let big_f = seminorm + nu + trace_guess;
    Ok(c.powf(ratio) * (big_f / nu).powf(ratio) * radius.powi(d as i32) * (1.0 / target).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radii_follow_the_shrink_factor() {
        let s = RestartSchedule::new(5, 10);
        let r = s.radii(2.0);
        for (t, v) in r.iter().enumerate() {
            assert!((v - 2.0 * (-(t as f64)).exp()).abs() <= 1e-15 * 2.0);
        }
        assert!(r.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn ball_samples_stay_in_both_sets() {
        let dom = Domain::cube(2, 1.0).unwrap();
        let pts = sample_in_ball(&dom, &[0.9, -0.9], 0.5, 300, 4).unwrap();
        for x in pts.rows() {
            assert!(dom.contains(x));
            assert!(((x[0] - 0.9).powi(2) + (x[1] + 0.9).powi(2)).sqrt() <= 0.5);
        }
        assert!(sample_in_ball(&dom, &[3.0, 3.0], 0.5, 1, 0).is_err());
    }

    #[test]
    fn fd_hessian_of_a_quadratic_is_exact() {
        let est = estimate_beta(|x| 2.0 * x[0] * x[0] + x[0] * x[1] + 0.5 * x[1] * x[1], &[0.1, 0.2], 1e-3, 3, 0.1, 1)
            .unwrap();
        assert!((est.hessian[[0, 0]] - 4.0).abs() < 1e-5);
        assert!((est.hessian[[0, 1]] - 1.0).abs() < 1e-5);
        assert!((est.hessian[[1, 1]] - 1.0).abs() < 1e-5);
        let lo = 2.5 - (2.25f64 + 1.0).sqrt();
        assert!((est.beta - lo).abs() < 1e-4);
        assert_eq!(est.evaluations, 4 * (1 + 2 * 2 + 4));
    }

    #[test]
    fn formula_grows_with_radius_and_precision() {
        let spec = KernelSpec::matern(2, 3.5, 1.0).unwrap();
        let k = crate::kernels::trace_constants(&spec, 2).unwrap();
        let a = stage_size_formula(&k, 2, 1.0, 0.5, 1.0, 1.0, 1e-2).unwrap();
        let b = stage_size_formula(&k, 2, 1.0, 0.5, 1.0, 2.0, 1e-2).unwrap();
        let c = stage_size_formula(&k, 2, 1.0, 0.5, 1.0, 1.0, 1e-4).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
        assert!((c / a - 2.0).abs() < 1e-12);
    }
}
