//! Gram matrix assembly and the Cholesky features `Phi_j` (columns of `R`).

use ndarray::{Array1, Array2};
use ndarray_linalg::{Cholesky, UPLO};

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::kernels::KernelSpec;

/// Jitters tried in order by [`cholesky_jitter`] when none is given.
pub const DEFAULT_JITTER_SCHEDULE: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

/// `K` together with an upper-triangular `R` such that `R^T R = K + jitter I`.
#[derive(Clone, Debug)]
pub struct GramFactor {
    k: Array2<f64>,
    r: Array2<f64>,
    jitter: f64,
}

impl GramFactor {
    pub fn kernel_matrix(&self) -> &Array2<f64> {
        &self.k
    }

    /// Upper-triangular factor; its columns are the features `Phi_j`.
    pub fn factor(&self) -> &Array2<f64> {
        &self.r
    }

    /// Ridge `eta` added to the diagonal before factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.k.nrows() == 0
    }
}

/// `K_ij = k(x_i, x_j)` from a pairwise function, called once per pair `i < j`.
///
/// The diagonal is set to one, which is exact for normalized kernels.
pub fn gram_with<F>(points: &PointSet, mut kernel: F) -> Array2<f64>
where
    F: FnMut(&[f64], &[f64]) -> f64,
{
    let n = points.len();
    let rows: Vec<&[f64]> = points.rows().collect();
    let mut k = Array2::<f64>::eye(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = kernel(rows[i], rows[j]);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Gram matrix of the kernel on the point set.
pub fn gram(spec: &KernelSpec, points: &PointSet) -> Result<Array2<f64>> {
    spec.require_closed_form()?;
    if points.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: points.dim() });
    }
    Ok(gram_with(points, |a, b| spec.eval_unchecked(a, b)))
}

/// Upper Cholesky factor of `K + eta I` for the first `eta` in the schedule
/// that yields a numerically nonsingular factor.
///
/// A factor is rejected when a squared pivot falls below
/// `64 n machine-epsilon max_i K_ii`.
pub fn cholesky_jitter(k: &Array2<f64>, schedule: &[f64]) -> Result<GramFactor> {
    let n = k.nrows();
    if n == 0 || k.ncols() != n {
        return Err(Error::Validation("kernel matrix must be square and non-empty".into()));
    }
    let schedule = if schedule.is_empty() { &DEFAULT_JITTER_SCHEDULE[..] } else { schedule };
    let scale = k.diag().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let min_pivot_sq = 64.0 * n as f64 * f64::EPSILON * scale;
    for &eta in schedule {
        let mut shifted = k.clone();
        shifted.diag_mut().mapv_inplace(|v| v + eta);
        if let Ok(r) = shifted.cholesky(UPLO::Upper) {
            if r.diag().iter().all(|&p| p.is_finite() && p * p >= min_pivot_sq) {
                return Ok(GramFactor { k: k.clone(), r, jitter: eta });
            }
        }
    }
    Err(Error::NumericalRank { max_jitter: schedule.iter().copied().fold(0.0, f64::max) })
}

/// `q(x)_i = k(x, x_i)`.
pub fn cross_vector(spec: &KernelSpec, points: &PointSet, x: &[f64]) -> Result<Array1<f64>> {
    spec.require_closed_form()?;
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: x.len() });
    }
    if points.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: points.dim() });
    }
    Ok(points.rows().map(|p| spec.eval_unchecked(x, p)).collect())
}
