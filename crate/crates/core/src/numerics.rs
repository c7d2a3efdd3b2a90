//! Small dense linear-algebra kernel: SVD-backed pseudo-inverse, numerical
//! rank, element-wise soft-thresholding, and seeded Gaussian sampling.
//!
//! All randomness flows through explicitly seeded ChaCha streams; there is
//! no global RNG anywhere in the crate.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{CoreError, Result};

/// Rank decision for a matrix, together with the spectrum it was made from.
#[derive(Debug, Clone)]
pub struct RankResult {
    pub rank: usize,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
    /// Absolute cutoff actually applied (rel_tol * sigma_max).
    pub tolerance_used: f64,
}

/// Default relative tolerance for rank/pinv truncation:
/// machine epsilon times the larger matrix dimension.
pub fn default_rel_tol(rows: usize, cols: usize) -> f64 {
    f64::EPSILON * rows.max(cols) as f64
}

fn ensure_finite_matrix(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::invalid(format!("{what} contains non-finite entries")))
    }
}

fn ensure_nonempty(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        Err(CoreError::invalid(format!("{what} is empty")))
    } else {
        Ok(())
    }
}

/// Moore-Penrose pseudo-inverse via SVD. Singular values below
/// `rel_tol * sigma_max` are truncated to zero.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: Option<f64>) -> Result<DMatrix<f64>> {
    ensure_nonempty(a, "matrix")?;
    ensure_finite_matrix(a, "matrix")?;
    let rel_tol = rel_tol.unwrap_or_else(|| default_rel_tol(a.nrows(), a.ncols()));
    if rel_tol <= 0.0 {
        return Err(CoreError::invalid("rel_tol must be positive"));
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    svd.pseudo_inverse(rel_tol * sigma_max)
        .map_err(|e| CoreError::NumericalFailure(e.to_string()))
}

/// Numerical rank: the number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: Option<f64>) -> Result<RankResult> {
    ensure_nonempty(a, "matrix")?;
    ensure_finite_matrix(a, "matrix")?;
    let rel_tol = rel_tol.unwrap_or_else(|| default_rel_tol(a.nrows(), a.ncols()));
    let mut sv: Vec<f64> = a.clone().singular_values().iter().cloned().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let tolerance_used = rel_tol * sigma_max;
    let rank = if sigma_max == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > tolerance_used).count()
    };
    Ok(RankResult {
        rank,
        singular_values: sv,
        tolerance_used,
    })
}

/// Element-wise soft-thresholding `T_theta`, the proximal map of the l1 norm:
/// shrinks every coordinate toward zero by `theta`.
pub fn soft_threshold(x: &DVector<f64>, theta: f64) -> Result<DVector<f64>> {
    if !(theta >= 0.0) {
        return Err(CoreError::invalid("soft_threshold requires theta >= 0"));
    }
    Ok(x.map(|v| {
        if v > theta {
            v - theta
        } else if v < -theta {
            v + theta
        } else {
            0.0
        }
    }))
}

/// Seeded stream of standard-normal draws. Identical seed, identical stream.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent child seed from a base seed and a stream index
/// (splitmix64 finalizer). Used to give restarts, cells, and trials their
/// own deterministic RNG streams.
pub fn split_seed(base: u64, index: u64) -> u64 {
    let mut x = base ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Matrix with i.i.d. N(0,1) entries drawn from the given stream, filled in
/// row-major order.
pub fn gaussian_matrix_with(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_row_iterator(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)))
}

/// Seed-reproducible matrix with i.i.d. standard-Gaussian entries.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded_rng(seed);
    gaussian_matrix_with(rows, cols, &mut rng)
}

/// Vector with i.i.d. N(0,1) entries drawn from the given stream.
pub fn gaussian_vector_with(len: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample(StandardNormal)))
}

/// Seed-reproducible vector with i.i.d. standard-Gaussian entries.
pub fn gaussian_vector(len: usize, seed: u64) -> DVector<f64> {
    let mut rng = seeded_rng(seed);
    gaussian_vector_with(len, &mut rng)
}
