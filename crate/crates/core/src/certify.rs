//! A posteriori optimality certificates.
//!
//! If the sampled constraints hold up to `tau`, a function whose `m`-th
//! derivatives are bounded satisfies `g(x) >= -(eps + 2 tau)` everywhere with
//! `eps = C_0 (|g|_m + M D_m tr B) h^m`, where `h` is the fill distance. This
//! turns a solved instance into a bound on `f(z) - f_*`.
//!
//! Two inputs cannot be observed from samples: the derivative seminorm
//! `|f|_m` and the true fill distance. Certificates record where each came
//! from and are only marked rigorous when both are trustworthy.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use ndarray_linalg::{Diag, SolveTriangular, UPLO};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{fill_distance_bound, fill_distance_empirical, Domain, Sampler};
use crate::kernels::{trace_constants, KernelConstants};
use crate::localizer::LocalizeOutput;
use crate::rng;
use crate::solver::{SampleSet, SolveOutput};

/// Where a fill-distance value came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FillKind {
    /// Largest probe-to-sample distance; a lower bound on the true value.
    Empirical,
    /// High-probability upper bound for uniform samples.
    Probabilistic { delta: f64 },
    /// Supplied by the caller.
    Given,
}

impl fmt::Display for FillKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FillKind::Empirical => write!(f, "empirical-h (optimistic)"),
            FillKind::Probabilistic { delta } => write!(f, "probabilistic (delta={delta}-valid)"),
            FillKind::Given => write!(f, "given-h"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillEstimate {
    pub value: f64,
    pub kind: FillKind,
    /// False when a probabilistic bound is evaluated below its sample-size threshold.
    pub valid: bool,
}

impl FillEstimate {
    pub fn given(value: f64) -> Self {
        FillEstimate { value, kind: FillKind::Given, valid: true }
    }
}

/// Empirical fill distance, plus the probabilistic bound when the points were
/// drawn uniformly.
pub fn fill_estimates(data: &SampleSet, domain: &Domain, delta: f64, probes: usize, seed: u64) -> Result<Vec<FillEstimate>> {
    let mut out = vec![FillEstimate {
        value: fill_distance_empirical(data.points(), domain, probes, seed)?,
        kind: FillKind::Empirical,
        valid: true,
    }];
    if matches!(data.points().sampler(), Sampler::Uniform { .. }) {
        let b = fill_distance_bound(data.len(), domain, delta)?;
        out.push(FillEstimate { value: b.value, kind: FillKind::Probabilistic { delta }, valid: b.threshold_met });
    }
    Ok(out)
}

/// A bound on the derivative seminorm `|f|_{Omega,m}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seminorm {
    pub value: f64,
    /// True when estimated from finite differences rather than known.
    pub heuristic: bool,
}

impl Seminorm {
    pub fn known(value: f64) -> Self {
        Seminorm { value, heuristic: false }
    }
}

/// Every multi-index of total order `m` in `d` variables.
pub fn multi_indices(d: usize, m: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == d - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(d, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if d > 0 {
        rec(d, m, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `partial^a f(x)` by a tensor product of central difference stencils.
fn fd_partial<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], a: &[u32], h: f64) -> f64 {
    let axes: Vec<(usize, u32)> = a.iter().copied().enumerate().filter(|&(_, k)| k > 0).collect();
    let total: usize = axes.iter().map(|&(_, k)| k as usize + 1).product();
    let order: u32 = a.iter().sum();
    let mut y = x.to_vec();
    let mut acc = 0.0;
    for flat in 0..total {
        let mut rest = flat;
        let mut weight = 1.0;
        for &(axis, k) in &axes {
            let j = (rest % (k as usize + 1)) as u32;
            rest /= k as usize + 1;
            weight *= if j % 2 == 0 { 1.0 } else { -1.0 } * binomial(k, j);
            y[axis] = x[axis] + (0.5 * k as f64 - j as f64) * h;
        }
        acc += weight * f(&y);
    }
    acc / h.powi(order as i32)
}

/// Heuristic `|f|_{Omega,m}`: the largest finite-difference `m`-th partial
/// over `probes` uniform points of the domain. Step `h` defaults to
/// `eps_mach^{1/(m+2)}` times the diameter.
pub fn estimate_seminorm<F>(mut f: F, domain: &Domain, m: u32, probes: usize, h: Option<f64>, seed: u64) -> Result<Seminorm>
where
    F: FnMut(&[f64]) -> f64,
{
    if m == 0 || probes == 0 {
        return Err(invalid("need m >= 1 and at least one probe"));
    }
    let h = h.unwrap_or_else(|| f64::EPSILON.powf(1.0 / (m as f64 + 2.0)) * domain.diameter());
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid(format!("step must be positive, got {h}")));
    }
    let idx = multi_indices(domain.dim(), m);
    let mut r = rng::from_seed(seed);
    let mut best = 0.0f64;
    for _ in 0..probes {
        let x = domain.sample_point(&mut r);
        for a in &idx {
            best = best.max(fd_partial(&mut f, &x, a, h).abs());
        }
    }
    Ok(Seminorm { value: best, heuristic: true })
}

/// `max_i |t_i - c - q_i| + jitter max_i B_ii` from precomputed quadratic forms
/// `q_i = Phi_i^T B Phi_i`.
pub fn residual_tau_from(targets: ArrayView1<'_, f64>, c: f64, quad: ArrayView1<'_, f64>, b_diag_max: f64, jitter: f64) -> f64 {
    let worst = targets.iter().zip(quad).map(|(t, q)| (t - c - q).abs()).fold(0.0, f64::max);
    worst + jitter * b_diag_max.max(0.0)
}

/// Constraint slack `tau` of `(c, B)` on the samples, with the jitter of the
/// features folded in.
pub fn residual_tau(data: &SampleSet, c: f64, b: &Array2<f64>) -> Result<f64> {
    let n = data.len();
    if b.dim() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
    }
    let r = data.gram().factor();
    let quad = (r.t().dot(b) * r.t()).sum_axis(Axis(1));
    let bmax = b.diag().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(residual_tau_from(data.values().view(), c, quad.view(), bmax, data.gram().jitter()))
}

/// `eps = C_0 (seminorm + M D_m trace_b) h^m`, and whether the fill distance is
/// small enough for it to hold: `h <= r min(1, 1 / (18 (m-1)^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformBound {
    pub epsilon: f64,
    pub precondition_ok: bool,
    /// Largest admissible fill distance.
    pub h_max: f64,
}

pub fn uniform_bound(h: f64, seminorm: f64, trace_b: f64, consts: &KernelConstants, domain: &Domain) -> Result<UniformBound> {
    for (name, v) in [("h", h), ("seminorm", seminorm), ("trace", trace_b)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    let m = consts.m;
    let epsilon = consts.c0 * (seminorm + consts.big_m * consts.d_m * trace_b) * h.powi(m as i32);
    let h_max = domain.inner_radius() * admissible_fraction(m);
    Ok(UniformBound { epsilon, precondition_ok: h <= h_max, h_max })
}

/// `f(z) - c + eps + 2 tau`.
pub fn gap_bound(f_at_z: f64, c: f64, epsilon: f64, tau: f64) -> f64 {
    f_at_z - c + epsilon + 2.0 * tau
}

fn admissible_fraction(m: u32) -> f64 {
    if m <= 1 {
        1.0
    } else {
        let k = (m - 1) as f64;
        (1.0 / (18.0 * k * k)).min(1.0)
    }
}

/// Options shared by both certificates.
#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    pub m: u32,
    pub seminorm: Seminorm,
    pub fill: FillEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub epsilon: f64,
    pub tau: f64,
    pub h: f64,
    pub fill_kind: FillKind,
    pub m: u32,
    pub seminorm_bound: f64,
    pub seminorm_heuristic: bool,
    pub c_hat: f64,
    pub f_at_z: f64,
    pub trace_b: f64,
    /// Bound on `|f(z) - f_*|`. Negative only when `inconsistent` is set.
    pub gap_bound: f64,
    /// `f_* >= lower_bound` under the certificate's assumptions.
    pub lower_bound: f64,
    pub precondition_ok: bool,
    /// Precondition met, fill distance an upper bound and seminorm known.
    pub rigorous: bool,
    /// `f(z)` fell below the certified lower bound.
    pub inconsistent: bool,
    /// Parabola extension only: `Ĉ = nu/2 |R^{-T} (X - 1 z^T)|_F^2`.
    pub parabola_trace: Option<f64>,
    /// Parabola extension only: bound on `nu/2 |zeta - z|^2`.
    pub localization_bound: Option<f64>,
}

impl Certificate {
    /// Radius implied by the localization bound, `sqrt(2 bound / nu)`.
    pub fn localization_radius(&self, nu: f64) -> Option<f64> {
        self.localization_bound.map(|b| (2.0 * b.max(0.0) / nu).sqrt())
    }
}

fn constants_for(data: &SampleSet, m: u32) -> Result<KernelConstants> {
    trace_constants(data.kernel(), m)
}

fn domain_of(data: &SampleSet) -> Result<&Domain> {
    data.domain().ok_or_else(|| invalid("certificates need a domain attached to the samples"))
}

fn check_consistency(f_at_z: f64, lower: f64) -> bool {
    let bad = f_at_z < lower;
    if bad {
        log::warn!("certificate inconsistent: f(z) = {f_at_z:.6e} lies below the certified lower bound {lower:.6e}");
    }
    bad
}

/// Certificate for the plain (`nu = 0`) problem:
/// `|f(z) - f_*| <= f(z) - c_hat + eps + 2 tau`.
pub fn certify_minimum(out: &SolveOutput, data: &SampleSet, f_at_z: f64, opts: &CertifyOptions) -> Result<Certificate> {
    if out.nu != 0.0 {
        return Err(invalid("certify_minimum needs a nu = 0 solve; use certify_minimizer"));
    }
    if out.alpha.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: out.alpha.len() });
    }
    let domain = domain_of(data)?;
    let consts = constants_for(data, opts.m)?;
    let quad = out.b_hat.quad_forms(data.gram().factor());
    let bmax = out.b_hat.diag().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tau = residual_tau_from(data.values().view(), out.c_hat, quad.view(), bmax, data.gram().jitter());
    let trace_b = out.b_hat.trace();
    let ub = uniform_bound(opts.fill.value, opts.seminorm.value, trace_b, &consts, domain)?;
    let lower = out.c_hat - ub.epsilon - 2.0 * tau;
    let precondition_ok = ub.precondition_ok && opts.fill.valid;
    Ok(Certificate {
        epsilon: ub.epsilon,
        tau,
        h: opts.fill.value,
        fill_kind: opts.fill.kind,
        m: opts.m,
        seminorm_bound: opts.seminorm.value,
        seminorm_heuristic: opts.seminorm.heuristic,
        c_hat: out.c_hat,
        f_at_z,
        trace_b,
        gap_bound: gap_bound(f_at_z, out.c_hat, ub.epsilon, tau),
        lower_bound: lower,
        precondition_ok,
        rigorous: is_rigorous(precondition_ok, opts),
        inconsistent: check_consistency(f_at_z, lower),
        parabola_trace: None,
        localization_bound: None,
    })
}

fn is_rigorous(precondition_ok: bool, opts: &CertifyOptions) -> bool {
    precondition_ok && !opts.seminorm.heuristic && !matches!(opts.fill.kind, FillKind::Empirical)
}

/// `nu/2 |R^{-T} (X - 1 z^T)|_F^2`, the trace of the PSD matrix that
/// represents `nu/2 |x - z|^2` on the samples.
pub fn parabola_trace(data: &SampleSet, z: &[f64], nu: f64) -> Result<f64> {
    if z.len() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: z.len() });
    }
    let mut centered = data.points().points().clone();
    centered -= &ArrayView1::from(z);
    // R^T U = X - 1 z^T
    let rt = data.gram().factor().t().to_owned();
    let u = rt
        .solve_triangular(UPLO::Lower, Diag::NonUnit, &centered)
        .map_err(|e| Error::NonFinite(e.to_string()))?;
    Ok(0.5 * nu * u.iter().map(|v| v * v).sum::<f64>())
}

/// Certificates for the parabola problem: a value bound on `|f(z) - f_*|`
/// and a localization bound on `nu/2 |zeta - z|^2`, both at `z = z_hat`.
pub fn certify_minimizer(out: &LocalizeOutput, data: &SampleSet, f_at_z: f64, opts: &CertifyOptions) -> Result<Certificate> {
    let sol = &out.last;
    let nu = sol.nu;
    if nu <= 0.0 {
        return Err(Error::Precondition("certify_minimizer needs nu > 0; use certify_minimum".into()));
    }
    if sol.alpha.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: sol.alpha.len() });
    }
    let domain = domain_of(data)?;
    let consts = constants_for(data, opts.m)?;
    let z = &out.z_hat;
    let x = data.points().points();
    let zv = ArrayView1::from(z.as_slice());
    let sq = x.map_axis(Axis(1), |r| r.dot(&r));
    let targets: Array1<f64> = data.values() - &(sq * (0.5 * nu)) + &(x.dot(&zv) * nu);
    let quad = sol.b_hat.quad_forms(data.gram().factor());
    let bmax = sol.b_hat.diag().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tau = residual_tau_from(targets.view(), sol.c_hat, quad.view(), bmax, data.gram().jitter());
    let trace_b = sol.b_hat.trace();
    let c_extra = parabola_trace(data, z, nu)?;
    let f_hat = sol.c_hat - 0.5 * nu * zv.dot(&zv);
    let value = uniform_bound(opts.fill.value, opts.seminorm.value, trace_b + c_extra, &consts, domain)?;
    let local = uniform_bound(opts.fill.value, opts.seminorm.value + nu, trace_b, &consts, domain)?;
    let lower = f_hat - value.epsilon - 2.0 * tau;
    let precondition_ok = value.precondition_ok && opts.fill.valid && opts.m >= 2;
    Ok(Certificate {
        epsilon: value.epsilon,
        tau,
        h: opts.fill.value,
        fill_kind: opts.fill.kind,
        m: opts.m,
        seminorm_bound: opts.seminorm.value,
        seminorm_heuristic: opts.seminorm.heuristic,
        c_hat: sol.c_hat,
        f_at_z,
        trace_b,
        gap_bound: gap_bound(f_at_z, f_hat, value.epsilon, tau),
        lower_bound: lower,
        precondition_ok,
        rigorous: is_rigorous(precondition_ok, opts),
        inconsistent: check_consistency(f_at_z, lower),
        parabola_trace: Some(c_extra),
        localization_bound: Some(f_at_z - f_hat + 2.0 * tau + local.epsilon),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::c0_constant;

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(1, 3), vec![vec![3]]);
        assert_eq!(multi_indices(2, 2).len(), 3);
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert_eq!(multi_indices(8, 3).len(), 120);
        assert!(multi_indices(4, 3).iter().all(|a| a.iter().sum::<u32>() == 3));
    }

    #[test]
    fn fd_partials_of_polynomials() {
        let mut f = |x: &[f64]| x[0].powi(3) * x[1] + 2.0 * x[1] * x[1];
        let x = [0.4, -0.7];
        assert!((fd_partial(&mut f, &x, &[3, 0], 1e-3) - 6.0 * x[1]).abs() < 1e-5);
        assert!((fd_partial(&mut f, &x, &[2, 1], 1e-3) - 6.0 * x[0]).abs() < 1e-5);
        assert!((fd_partial(&mut f, &x, &[0, 2], 1e-3) - 4.0).abs() < 1e-5);
    }

    #[test]
    fn seminorm_of_a_quadratic() {
        let dom = Domain::cube(2, 1.0).unwrap();
        let s = estimate_seminorm(|x| x[0] * x[0] + 3.0 * x[0] * x[1], &dom, 2, 5, None, 0).unwrap();
        assert!((s.value - 3.0).abs() < 1e-4);
        assert!(s.heuristic);
    }

    #[test]
    fn uniform_bound_formula() {
        let k = KernelConstants { m: 1, big_m: 2.0, d_m: 1.5, d_m_formula: 1.5, c0: c0_constant(1, 1) };
        let dom = Domain::ball(vec![0.0], 1.0).unwrap();
        let b = uniform_bound(0.1, 1.0, 0.0, &k, &dom).unwrap();
        assert!((b.epsilon - 0.3).abs() < 1e-15);
        assert!(b.precondition_ok);
        assert_eq!(uniform_bound(0.0, 1.0, 4.0, &k, &dom).unwrap().epsilon, 0.0);
        let e1 = uniform_bound(0.1, 0.0, 1.0, &k, &dom).unwrap().epsilon;
        let e2 = uniform_bound(0.1, 0.0, 2.0, &k, &dom).unwrap().epsilon;
        assert!((e2 - 2.0 * e1).abs() < 1e-15);
        assert!(!uniform_bound(1.5, 1.0, 0.0, &k, &dom).unwrap().precondition_ok);
        assert!(uniform_bound(-0.1, 1.0, 0.0, &k, &dom).is_err());
    }

    #[test]
    fn admissible_fill_fraction() {
        assert_eq!(admissible_fraction(1), 1.0);
        assert_eq!(admissible_fraction(2), 1.0 / 18.0);
        assert_eq!(admissible_fraction(3), 1.0 / 72.0);
    }

    #[test]
    fn fill_labels() {
        assert_eq!(FillKind::Empirical.to_string(), "empirical-h (optimistic)");
        assert!(FillKind::Probabilistic { delta: 0.05 }.to_string().starts_with("probabilistic"));
    }
}
