//! Search domains, point sets and fill distances.

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Geometric shape of a search region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// A search region `Omega`, either a ball or an axis-aligned box.
///
/// `inner_radius` is the radius `r` such that the region is (up to its
/// boundary) a union of balls of radius `r`. It defaults to the radius for
/// balls and to the smallest half-width for boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct Domain {
    shape: Shape,
    inner_radius: f64,
}

#[derive(Serialize, Deserialize)]
struct DomainRepr {
    #[serde(flatten)]
    shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inner_radius: Option<f64>,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;

    fn try_from(repr: DomainRepr) -> Result<Self> {
        let domain = Domain::new(repr.shape)?;
        match repr.inner_radius {
            Some(r) => domain.with_inner_radius(r),
            None => Ok(domain),
        }
    }
}

impl From<Domain> for DomainRepr {
    fn from(d: Domain) -> Self {
        DomainRepr { shape: d.shape, inner_radius: Some(d.inner_radius) }
    }
}

impl Domain {
    pub fn new(shape: Shape) -> Result<Self> {
        let inner_radius = match &shape {
            Shape::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(invalid("ball center must have at least one coordinate"));
                }
                if !(radius.is_finite() && *radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(invalid(format!("ball radius must be positive and finite, got {radius}")));
                }
                *radius
            }
            Shape::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(invalid("box bounds must be non-empty and of equal length"));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
                    return Err(invalid("degenerate box: need lo < hi componentwise"));
                }
                lo.iter().zip(hi).map(|(l, h)| 0.5 * (h - l)).fold(f64::INFINITY, f64::min)
            }
        };
        Ok(Domain { shape, inner_radius })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(Shape::Ball { center, radius })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::new(Shape::Box { lo, hi })
    }

    /// The cube `[-half, half]^d`.
    pub fn cube(d: usize, half: f64) -> Result<Self> {
        Self::boxed(vec![-half; d], vec![half; d])
    }

    /// Overrides the inner-ball radius; requires `0 < r <= R`.
    pub fn with_inner_radius(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= self.outer_radius() * (1.0 + 1e-12)) {
            return Err(invalid(format!(
                "inner radius {r} must satisfy 0 < r <= R = {}",
                self.outer_radius()
            )));
        }
        self.inner_radius = r;
        Ok(self)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Ball { center, .. } => center.len(),
            Shape::Box { lo, .. } => lo.len(),
        }
    }

    /// Inner-ball radius `r`.
    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    /// Half the diameter, `R`.
    pub fn outer_radius(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => *radius,
            Shape::Box { lo, hi } => {
                0.5 * lo.iter().zip(hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.outer_radius()
    }

    pub fn center(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Ball { center, .. } => center.clone(),
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
        }
    }

    /// Bounding box `(lo, hi)`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    /// Closed-set membership, with a relative slack of `1e-12` for round-off.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match &self.shape {
            Shape::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                d2.sqrt() <= radius * (1.0 + 1e-12)
            }
            Shape::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - 1e-12 * (h - l) && *v <= h + 1e-12 * (h - l)),
        }
    }

    /// Euclidean projection onto the domain: radial for balls, clamping for boxes.
    pub fn project(&self, x: &mut [f64]) {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let dist = d2.sqrt();
                if dist > *radius {
                    let scale = radius / dist;
                    for (v, c) in x.iter_mut().zip(center) {
                        *v = c + (*v - c) * scale;
                    }
                }
            }
            Shape::Box { lo, hi } => {
                for (v, (l, h)) in x.iter_mut().zip(lo.iter().zip(hi)) {
                    *v = v.clamp(*l, *h);
                }
            }
        }
    }

    /// Draws one uniform point.
    pub fn sample_point(&self, rng: &mut rng::Rng) -> Vec<f64> {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let d = center.len();
                loop {
                    let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 || !norm.is_finite() {
                        continue;
                    }
                    let u: f64 = rng.random();
                    let rad = radius * u.powf(1.0 / d as f64);
                    return center.iter().zip(&dir).map(|(c, v)| c + rad * v / norm).collect();
                }
            }
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
        }
    }
}

/// How a [`PointSet`] was generated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    Uniform { seed: u64 },
    Halton { skip: u64 },
    Given,
}

/// An ordered set of `n` points in `R^d`, stored row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    points: Array2<f64>,
    sampler: Sampler,
}

impl PointSet {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        Self::with_sampler(points, Sampler::Given)
    }

    pub fn with_sampler(points: Array2<f64>, sampler: Sampler) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(invalid("point set must be non-empty"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        Ok(PointSet { points: points.as_standard_layout().into_owned(), sampler })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(invalid("rows of unequal length"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| invalid(e.to_string()))?;
        Self::new(arr)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn sampler(&self) -> Sampler {
        self.sampler
    }

    /// Seed of a uniform draw, `None` for quasi-random or given points.
    pub fn seed(&self) -> Option<u64> {
        match self.sampler {
            Sampler::Uniform { seed } => Some(seed),
            _ => None,
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.axis_iter(Axis(0)).map(|r| r.to_slice().expect("standard layout"))
    }

    /// Appends the rows of `other`; the result is marked as given.
    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let joined = ndarray::concatenate(Axis(0), &[self.points.view(), other.points.view()])
            .map_err(|e| invalid(e.to_string()))?;
        PointSet::new(joined)
    }
}

/// Draws `n` i.i.d. uniform points from the domain.
pub fn sample_uniform(domain: &Domain, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let d = domain.dim();
    let mut rng = rng::from_seed(seed);
    let mut flat = Vec::with_capacity(n * d);
    for _ in 0..n {
        flat.extend(domain.sample_point(&mut rng));
    }
    let pts = Array2::from_shape_vec((n, d), flat).expect("shape");
    PointSet::with_sampler(pts, Sampler::Uniform { seed })
}

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131,
];

/// Largest dimension supported by [`sample_halton`].
pub const MAX_HALTON_DIM: usize = PRIMES.len();

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// First `n` Halton points after `skip` burn-in points, mapped into the
/// domain's bounding box. Ball domains keep the in-ball points in sequence
/// order.
///
/// The sequence starts at index 1, so with `skip = 0` the base-2 coordinate
/// runs `1/2, 1/4, 3/4, ...`.
pub fn sample_halton(domain: &Domain, n: usize, skip: u64) -> Result<PointSet> {
    let d = domain.dim();
    if d > MAX_HALTON_DIM {
        return Err(Error::UnsupportedDimension { d, max: MAX_HALTON_DIM });
    }
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let (lo, hi) = domain.bounds();
    let mut flat = Vec::with_capacity(n * d);
    let mut index = skip;
    let mut accepted = 0;
    let mut x = vec![0.0; d];
    // balls in high dimension fill a vanishing fraction of their box
    let cap = skip + 1000 * n as u64 + 1_000_000;
    while accepted < n {
        index += 1;
        if index > cap {
            return Err(invalid("Halton rejection sampling did not produce enough points"));
        }
        for (k, v) in x.iter_mut().enumerate() {
            *v = lo[k] + (hi[k] - lo[k]) * radical_inverse(index, PRIMES[k]);
        }
        if domain.contains(&x) {
            flat.extend_from_slice(&x);
            accepted += 1;
        }
    }
    let pts = Array2::from_shape_vec((n, d), flat).expect("shape");
    PointSet::with_sampler(pts, Sampler::Halton { skip })
}

/// Burn-in used for seed `seed`, so that different seeds read disjoint
/// stretches of the sequence for `n` below the stride.
pub fn halton_skip(seed: u64) -> u64 {
    seed.wrapping_mul(HALTON_SEED_STRIDE)
}

pub const HALTON_SEED_STRIDE: u64 = 10_007;

/// Monte-Carlo estimate of the fill distance
/// `h = sup_{y in Omega} min_i |y - x_i|`.
///
/// The maximum is taken over `probes` uniform points of the domain, so the
/// estimate is a lower bound of the true fill distance.
pub fn fill_distance_empirical(points: &PointSet, domain: &Domain, probes: usize, seed: u64) -> Result<f64> {
    if points.is_empty() {
        return Err(invalid("empty point set"));
    }
    if probes == 0 {
        return Err(invalid("probes must be at least 1"));
    }
    if points.dim() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: domain.dim(), got: points.dim() });
    }
    let mut rng = rng::from_seed(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let y = domain.sample_point(&mut rng);
        let mut best = f64::INFINITY;
        for x in points.rows() {
            let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best {
                best = d2;
                if best <= worst * worst {
                    break;
                }
            }
        }
        worst = worst.max(best.sqrt());
    }
    Ok(worst)
}

/// Default number of probes for [`fill_distance_empirical`]: `50 n`.
pub fn default_probes(n: usize) -> usize {
    50 * n.max(1)
}

/// High-probability fill-distance bound for `n` i.i.d. uniform points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillBound {
    pub value: f64,
    /// Whether `n` is large enough for the bound to hold with probability `1 - delta`.
    pub threshold_met: bool,
}

/// `h <= 11 R n^{-1/d} (log(n/delta) + d log(2R/r))^{1/d}`, valid with
/// probability `1 - delta` once
/// `n >= 2 (6R/r)^d (log(2/delta) + 2d log(4R/r))`.
pub fn fill_distance_bound(n: usize, domain: &Domain, delta: f64) -> Result<FillBound> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let d = domain.dim() as f64;
    let big_r = domain.outer_radius();
    let r = domain.inner_radius();
    let nf = n as f64;
    let value = 11.0 * big_r * nf.powf(-1.0 / d) * ((nf / delta).ln() + d * (2.0 * big_r / r).ln()).powf(1.0 / d);
    let threshold = 2.0 * (6.0 * big_r / r).powf(d) * ((2.0 / delta).ln() + 2.0 * d * (4.0 * big_r / r).ln());
    Ok(FillBound { value, threshold_met: nf >= threshold })
}
