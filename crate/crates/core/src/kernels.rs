//! The normalized Sobolev kernel
//! `k(x, y) = c_s rho^nu K_nu(rho)`, `rho = |x - y| / sigma`, `nu = s - d/2`,
//! and the constants that enter the a posteriori bounds.
//!
//! For half-integer `nu = p + 1/2` the modified Bessel function has a closed
//! form and the kernel reduces to the Matérn family
//! `exp(-rho) * sum_i a_i rho^i` with `k(x, x) = 1`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};

/// Highest `p` in `nu = p + 1/2` with a closed form.
pub const MAX_HALF_INTEGER_ORDER: usize = 20;

/// An immutable Sobolev kernel of smoothness `s > d/2` and length-scale `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    d: usize,
    s: f64,
    sigma: f64,
    /// Coefficients of the polynomial factor in increasing powers of `rho`,
    /// present when `nu` is a supported half-integer.
    poly: Option<Vec<f64>>,
}

impl KernelSpec {
    /// Kernel of smoothness `s` in dimension `d`.
    pub fn new(d: usize, s: f64, sigma: f64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(s.is_finite() && s > d as f64 / 2.0) {
            return Err(invalid(format!("smoothness s = {s} must exceed d/2 = {}", d as f64 / 2.0)));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(invalid(format!("length-scale must be positive, got {sigma}")));
        }
        let nu = s - d as f64 / 2.0;
        Ok(KernelSpec { d, s, sigma, poly: half_integer_poly(nu) })
    }

    /// Kernel with Matérn order `nu = s - d/2`.
    pub fn matern(d: usize, nu: f64, sigma: f64) -> Result<Self> {
        Self::new(d, nu + d as f64 / 2.0, sigma)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn smoothness(&self) -> f64 {
        self.s
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Matérn order `nu = s - d/2`.
    pub fn nu(&self) -> f64 {
        self.s - self.d as f64 / 2.0
    }

    /// Same kernel with another length-scale.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.d, self.s, sigma)
    }

    /// Normalization `c_s = 2^{1 + d/2 - s} / Gamma(s - d/2)`.
    pub fn normalization(&self) -> f64 {
        let nu = self.nu();
        ((1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu)).exp()
    }

    /// Whether [`eval`](Self::eval) is available for this order.
    pub fn has_closed_form(&self) -> bool {
        self.poly.is_some()
    }

    /// Kernel value as a function of the unscaled distance `r = |x - y|`.
    pub fn radial(&self, r: f64) -> Result<f64> {
        let poly = self.poly.as_ref().ok_or(Error::UnsupportedOrder(self.nu()))?;
        Ok(radial_profile(poly, r / self.sigma))
    }

    pub(crate) fn radial_unchecked(&self, r: f64) -> f64 {
        radial_profile(self.poly.as_ref().expect("validated closed form"), r / self.sigma)
    }

    pub(crate) fn require_closed_form(&self) -> Result<()> {
        if self.poly.is_some() {
            Ok(())
        } else {
            Err(Error::UnsupportedOrder(self.nu()))
        }
    }

    /// `k(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        if y.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: y.len() });
        }
        self.radial(distance(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.radial_unchecked(distance(x, y))
    }
}

pub(crate) fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn radial_profile(poly: &[f64], rho: f64) -> f64 {
    let p = poly.iter().rev().fold(0.0, |acc, c| acc * rho + c);
    (-rho).exp() * p
}

/// For `nu = p + 1/2`,
/// `rho^nu K_nu(rho) * c = exp(-rho) p!/(2p)! sum_{i=0}^p (p+i)!/(i!(p-i)!) (2 rho)^{p-i}`.
fn half_integer_poly(nu: f64) -> Option<Vec<f64>> {
    let p = nu - 0.5;
    if (p - p.round()).abs() > 1e-12 || p < -1e-12 {
        return None;
    }
    let p = p.round() as usize;
    if p > MAX_HALF_INTEGER_ORDER {
        return None;
    }
    // c_0 = 1, c_{j+1} / c_j = 2 (p - j) / ((2p - j)(j + 1))
    let mut coef = vec![1.0; p + 1];
    for j in 0..p {
        coef[j + 1] = coef[j] * (2 * (p - j)) as f64 / ((2 * p - j) * (j + 1)) as f64;
    }
    Some(coef)
}

/// Serialized kernel description, `{family = "sobolev", s, sigma}`.
///
/// `nu` may be given instead of `s`; the dimension comes from the domain.
/// `family = "matern"` is accepted as a synonym.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default = "sobolev")]
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    pub sigma: f64,
}

fn sobolev() -> String {
    "sobolev".into()
}

impl KernelConfig {
    pub fn build(&self, d: usize) -> Result<KernelSpec> {
        if !matches!(self.family.as_str(), "sobolev" | "matern") {
            return Err(Error::Config(format!("unknown kernel family '{}'", self.family)));
        }
        match (self.s, self.nu) {
            (Some(s), None) => KernelSpec::new(d, s, self.sigma),
            (None, Some(nu)) => KernelSpec::matern(d, nu, self.sigma),
            _ => Err(Error::Config("kernel needs exactly one of `s` or `nu`".into())),
        }
    }
}

impl From<&KernelSpec> for KernelConfig {
    fn from(k: &KernelSpec) -> Self {
        KernelConfig { family: sobolev(), s: Some(k.s), nu: None, sigma: k.sigma }
    }
}

/// Constants of the scattered-data bounds for a kernel and order `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// Differentiability order.
    pub m: u32,
    /// Multiplication-algebra constant, `(2 pi)^{d/2} 2^{s + 1/2}`; treated
    /// as independent of `sigma`.
    pub big_m: f64,
    /// Derivative constant, at least one, scaled by `sigma^{-m}`.
    pub d_m: f64,
    /// The formula value of the derivative constant before clamping to one.
    pub d_m_formula: f64,
    /// Scattered-constraint constant, see [`c0_constant`].
    pub c0: f64,
}

/// Computes `M`, `D_m` and `C_0` for order `m`; requires `1 <= m < s - d/2`.
pub fn trace_constants(spec: &KernelSpec, m: u32) -> Result<KernelConstants> {
    let d = spec.d as f64;
    let nu = spec.nu();
    if m == 0 || m as f64 >= nu {
        return Err(Error::Precondition(format!(
            "order m = {m} must satisfy 1 <= m < s - d/2 = {nu}"
        )));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let big_m = algebra_constant(spec);
    let mf = m as f64;
    let log_ratio = ln_gamma(mf + d / 2.0) + ln_gamma(nu - mf) - ln_gamma(nu) - ln_gamma(d / 2.0);
    let d_m_unit = (0.25 * d * two_pi.ln() + 0.5 * log_ratio).exp();
    let d_m_formula = d_m_unit / spec.sigma.powi(m as i32);
    Ok(KernelConstants { m, big_m, d_m: d_m_formula.max(1.0), d_m_formula, c0: c0_constant(m, spec.d) })
}

/// `M = (2 pi)^{d/2} 2^{s + 1/2}`, which does not depend on `m`.
pub fn algebra_constant(spec: &KernelSpec) -> f64 {
    let d = spec.d as f64;
    (0.5 * d * (2.0 * std::f64::consts::PI).ln() + (spec.s + 0.5) * std::f64::consts::LN_2).exp()
}

/// Largest admissible order: the greatest integer `m` with `m < s - d/2`.
pub fn max_order(spec: &KernelSpec) -> Option<u32> {
    let nu = spec.nu();
    let m = nu.ceil() - 1.0;
    (m >= 1.0).then_some(m as u32)
}

/// `C_0 = 3 max(sqrt(d), 3 sqrt(2d) (m - 1))^{2m} / m!`.
pub fn c0_constant(m: u32, d: usize) -> f64 {
    let d = d as f64;
    let mf = m as f64;
    let base = d.sqrt().max(3.0 * (2.0 * d).sqrt() * (mf - 1.0));
    (3.0f64.ln() + 2.0 * mf * base.ln() - ln_gamma(mf + 1.0)).exp()
}
