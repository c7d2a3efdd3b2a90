//! Desk-scale certification of the recovery guarantees: exhaustive or
//! sampled row-subset rank certificates for composite matrices, enumeration
//! checks of the l0 separation and l1 support-inequality conditions, the
//! leaky-ReLU difference-scaling bound, and a brute-force l0 oracle.
//!
//! Every check here is a finite, sampled certificate of a statement the
//! analysis makes over the reals; reports say "no violation found in N
//! samples" rather than claiming proof.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::generator::{Activation, GeneratorNet};
use crate::numerics::{gaussian_vector_with, numerical_rank, seeded_rng};
use crate::{CoreError, Result};

/// Relative zero-counting tolerance: entries below this fraction of the
/// reference infinity norm count as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// How row subsets are enumerated during rank certification.
#[derive(Debug, Clone, Copy)]
pub enum CertifyMode {
    /// Check every subset of the required size.
    Exhaustive,
    /// Check `count` uniformly sampled subsets from the given seed.
    Sampled { count: usize, seed: u64 },
}

/// Outcome of a row-subset rank certification run.
#[derive(Debug, Clone)]
pub struct RankCertificate {
    pub rows_total: usize,
    pub k: usize,
    pub l: usize,
    pub subset_size: usize,
    pub submatrices_checked: usize,
    pub mode: CertifyMode,
    pub all_full_rank: bool,
    /// Smallest singular value seen across all checked submatrices.
    pub min_singular_value_seen: f64,
    /// First rank-deficient row subset found, if any.
    pub first_violation: Option<Vec<usize>>,
}

fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exhaustive enumeration is required at or below this subset count.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;
/// Subset sample size used when exhaustive enumeration is infeasible.
pub const SAMPLED_SUBSETS: usize = 10_000;

/// Certify that every (or a sampled family of) `rows_total - (2l+1)` row
/// subsets of `a` has full column rank `k`.
pub fn certify_rank(a: &DMatrix<f64>, k: usize, l: usize, mode: CertifyMode) -> Result<RankCertificate> {
    let m = a.nrows();
    if a.ncols() != k {
        return Err(CoreError::shape(format!(
            "matrix has {} columns, expected k = {k}",
            a.ncols()
        )));
    }
    if 2 * l + 1 >= m || m - (2 * l + 1) < k {
        return Err(CoreError::NoBudget { m_effective: m, k: k + 2 * l });
    }
    let r = m - (2 * l + 1);

    let mut checked = 0usize;
    let mut min_sv = f64::INFINITY;
    let mut all_full_rank = true;
    let mut first_violation = None;

    let mut check_subset = |rows: &[usize]| -> Result<()> {
        let sub = a.select_rows(rows.iter());
        let rank = numerical_rank(&sub, None)?;
        let smallest = rank.singular_values.last().copied().unwrap_or(0.0);
        if smallest < min_sv {
            min_sv = smallest;
        }
        if rank.rank < k && first_violation.is_none() {
            all_full_rank = false;
            first_violation = Some(rows.to_vec());
        }
        checked += 1;
        Ok(())
    };

    match mode {
        CertifyMode::Exhaustive => {
            for rows in (0..m).combinations(r) {
                check_subset(&rows)?;
            }
        }
        CertifyMode::Sampled { count, seed } => {
            let mut rng = seeded_rng(seed);
            for _ in 0..count {
                let mut rows = rand::seq::index::sample(&mut rng, m, r).into_vec();
                rows.sort_unstable();
                check_subset(&rows)?;
            }
        }
    }

    Ok(RankCertificate {
        rows_total: m,
        k,
        l,
        subset_size: r,
        submatrices_checked: checked,
        mode,
        all_full_rank,
        min_singular_value_seen: min_sv,
        first_violation,
    })
}

/// Certify rank with the mode chosen by subset count: exhaustive when the
/// number of subsets is at most [`EXHAUSTIVE_LIMIT`], else
/// [`SAMPLED_SUBSETS`] uniform samples.
pub fn certify_rank_auto(a: &DMatrix<f64>, k: usize, l: usize, seed: u64) -> Result<RankCertificate> {
    let m = a.nrows();
    if 2 * l + 1 >= m {
        return Err(CoreError::NoBudget { m_effective: m, k: k + 2 * l });
    }
    let r = m - (2 * l + 1);
    let mode = if binomial(m, r) <= EXHAUSTIVE_LIMIT {
        CertifyMode::Exhaustive
    } else {
        CertifyMode::Sampled { count: SAMPLED_SUBSETS, seed }
    };
    certify_rank(a, k, l, mode)
}

/// Which condition a [`ConditionReport`] covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    L0Separation,
    L1SupportInequality,
    BetaBounds,
}

impl ConditionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConditionKind::L0Separation => "l0_separation",
            ConditionKind::L1SupportInequality => "l1_support_inequality",
            ConditionKind::BetaBounds => "beta_bounds",
        }
    }
}

/// A witnessed violation of a checked condition.
#[derive(Debug, Clone)]
pub struct Violation {
    pub witness: String,
    pub observed: String,
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub condition: ConditionKind,
    pub instances_tested: usize,
    pub violations: Vec<Violation>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn count_nonzeros(v: &DVector<f64>, tol: f64) -> usize {
    v.iter().filter(|x| x.abs() > tol).count()
}

/// Check the l0 separation condition: `||M G(z) - M G(z0)||_0 >= 2l + 1`
/// for every candidate z. Candidates exactly equal to z0 are skipped.
pub fn check_l0_condition(
    net: &GeneratorNet,
    matrix: &DMatrix<f64>,
    z0: &DVector<f64>,
    l: usize,
    candidates: &[DVector<f64>],
) -> Result<ConditionReport> {
    check_l0_condition_with_tol(net, matrix, z0, l, candidates, DEFAULT_ZERO_TOL)
}

/// [`check_l0_condition`] with an explicit relative zero tolerance, for
/// sensitivity reporting.
pub fn check_l0_condition_with_tol(
    net: &GeneratorNet,
    matrix: &DMatrix<f64>,
    z0: &DVector<f64>,
    l: usize,
    candidates: &[DVector<f64>],
    rel_zero_tol: f64,
) -> Result<ConditionReport> {
    let mgz0 = matrix * net.forward(z0)?;
    let tol = rel_zero_tol * mgz0.amax();
    let mut tested = 0;
    let mut violations = Vec::new();
    for (i, z) in candidates.iter().enumerate() {
        if z == z0 {
            continue;
        }
        let diff = matrix * net.forward(z)? - &mgz0;
        let nnz = count_nonzeros(&diff, tol);
        tested += 1;
        if nnz <= 2 * l {
            violations.push(Violation {
                witness: format!("candidate #{i}"),
                observed: format!("nonzero count {nnz} <= 2l = {}", 2 * l),
            });
        }
    }
    Ok(ConditionReport {
        condition: ConditionKind::L0Separation,
        instances_tested: tested,
        violations,
    })
}

/// Check the l1 support inequality: on the outlier support K the difference
/// `M G(z0) - M G(z)` must carry strictly less l1 mass than off-support.
pub fn check_l1_condition(
    net: &GeneratorNet,
    matrix: &DMatrix<f64>,
    z0: &DVector<f64>,
    support: &[usize],
    candidates: &[DVector<f64>],
) -> Result<ConditionReport> {
    let m = matrix.nrows();
    if support.iter().any(|&i| i >= m) {
        return Err(CoreError::invalid("support index out of range"));
    }
    let on_support = {
        let mut mask = vec![false; m];
        for &i in support {
            mask[i] = true;
        }
        mask
    };
    let mgz0 = matrix * net.forward(z0)?;
    let mut tested = 0;
    let mut violations = Vec::new();
    for (i, z) in candidates.iter().enumerate() {
        if z == z0 {
            continue;
        }
        let diff = &mgz0 - matrix * net.forward(z)?;
        let (mut norm_k, mut norm_kbar) = (0.0, 0.0);
        for (j, v) in diff.iter().enumerate() {
            if on_support[j] {
                norm_k += v.abs();
            } else {
                norm_kbar += v.abs();
            }
        }
        tested += 1;
        if !(norm_k < norm_kbar) {
            violations.push(Violation {
                witness: format!("candidate #{i}"),
                observed: format!("||diff_K||_1 = {norm_k} >= ||diff_Kbar||_1 = {norm_kbar}"),
            });
        }
    }
    Ok(ConditionReport {
        condition: ConditionKind::L1SupportInequality,
        instances_tested: tested,
        violations,
    })
}

/// Scaling factor beta with `a(x) - a(y) = beta (x - y)` for the leaky ReLU
/// with leak `h`. Same-sign pairs hit the endpoints exactly; x = y is
/// defined as beta = 1.
pub fn leaky_beta(h: f64, x: f64, y: f64) -> f64 {
    if x == y {
        1.0
    } else if x >= 0.0 && y >= 0.0 {
        1.0
    } else if x < 0.0 && y < 0.0 {
        h
    } else {
        let a = |v: f64| if v >= 0.0 { v } else { h * v };
        (a(x) - a(y)) / (x - y)
    }
}

/// Check the difference-scaling bound: beta in [h, 1] for every pair.
pub fn check_beta_lemma(h: f64, samples: &[(f64, f64)]) -> Result<ConditionReport> {
    if !(h > 0.0 && h < 1.0) {
        return Err(CoreError::invalid(format!("leak h must lie in (0,1), got {h}")));
    }
    let mut tested = 0;
    let mut violations = Vec::new();
    for &(x, y) in samples {
        if x == y {
            continue;
        }
        let beta = leaky_beta(h, x, y);
        tested += 1;
        if !(h..=1.0).contains(&beta) {
            violations.push(Violation {
                witness: format!("(x, y) = ({x}, {y})"),
                observed: format!("beta = {beta} outside [{h}, 1]"),
            });
        }
    }
    Ok(ConditionReport {
        condition: ConditionKind::BetaBounds,
        instances_tested: tested,
        violations,
    })
}

/// The sign-pattern-scaled matrix P with `G(z) - G(z0) = P (z - z0)`:
/// the product of per-layer `Gamma W` factors, where Gamma is the diagonal
/// of difference-scaling factors between the two forward passes.
pub fn scaled_difference_matrix(
    net: &GeneratorNet,
    z: &DVector<f64>,
    z0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if z.len() != net.input_dim() || z0.len() != net.input_dim() {
        return Err(CoreError::shape("latent vectors must match input dim"));
    }
    let mut v = z.clone();
    let mut v0 = z0.clone();
    let mut p = DMatrix::<f64>::identity(net.input_dim(), net.input_dim());
    for layer in net.layers() {
        let pre = &layer.weight * &v + &layer.bias;
        let pre0 = &layer.weight * &v0 + &layer.bias;
        p = &layer.weight * p;
        for i in 0..pre.len() {
            let beta = match layer.activation {
                Activation::Identity => 1.0,
                Activation::Relu => leaky_beta_relu(pre[i], pre0[i]),
                Activation::LeakyRelu { h } => leaky_beta(h, pre[i], pre0[i]),
            };
            p.row_mut(i).scale_mut(beta);
        }
        v = pre.map(|x| layer.activation.apply(x));
        v0 = pre0.map(|x| layer.activation.apply(x));
    }
    Ok(p)
}

// ReLU is the h = 0 limit; both-negative pairs scale to zero, which is what
// lets the scaled matrix go rank deficient.
fn leaky_beta_relu(x: f64, y: f64) -> f64 {
    if x == y {
        1.0
    } else if x >= 0.0 && y >= 0.0 {
        1.0
    } else if x < 0.0 && y < 0.0 {
        0.0
    } else {
        let a = |v: f64| if v >= 0.0 { v } else { 0.0 };
        (a(x) - a(y)) / (x - y)
    }
}

/// Outcome of the brute-force grid search over the l0 objective.
#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub best: DVector<f64>,
    pub best_index: usize,
    pub best_count: usize,
    /// Smallest objective among all other grid points.
    pub runner_up_count: Option<usize>,
}

impl BruteForceResult {
    /// True when the winner beats every other grid point by at least one
    /// nonzero count.
    pub fn unique(&self) -> bool {
        match self.runner_up_count {
            Some(r) => r > self.best_count,
            None => true,
        }
    }
}

/// Grid minimization of `||M G(z) - y||_0` with tolerance-thresholded zero
/// counting. Ties break toward the smallest l2 norm, then the lowest index.
pub fn brute_force_l0_recovery(
    net: &GeneratorNet,
    matrix: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &[DVector<f64>],
) -> Result<BruteForceResult> {
    if grid.is_empty() {
        return Err(CoreError::invalid("grid must be nonempty"));
    }
    let tol = DEFAULT_ZERO_TOL * y.amax().max(1.0);
    let mut scored: Vec<(usize, f64, usize)> = Vec::with_capacity(grid.len());
    for (i, z) in grid.iter().enumerate() {
        let diff = matrix * net.forward(z)? - y;
        scored.push((count_nonzeros(&diff, tol), z.norm(), i));
    }
    let (best_count, _, best_index) = scored
        .iter()
        .cloned()
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))
        .unwrap();
    let runner_up_count = scored
        .iter()
        .filter(|&&(_, _, i)| i != best_index)
        .map(|&(c, _, _)| c)
        .min();
    Ok(BruteForceResult {
        best: grid[best_index].clone(),
        best_index,
        best_count,
        runner_up_count,
    })
}

/// Gaussian candidates at radii {0.1, 1, 10} x ||z0||_2 plus single-
/// coordinate perturbations of z0, to probe both near and far regimes.
pub fn generate_candidates(z0: &DVector<f64>, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let k = z0.len();
    let base = z0.norm().max(1.0);
    let mut rng: ChaCha8Rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(count);
    let radii = [0.1 * base, base, 10.0 * base];
    while out.len() < count {
        for &r in &radii {
            if out.len() >= count {
                break;
            }
            let g = gaussian_vector_with(k, &mut rng);
            let norm = g.norm();
            if norm > 0.0 {
                out.push(z0 + g * (r / norm));
            }
        }
        for i in 0..k {
            if out.len() >= count {
                break;
            }
            let mut z = z0.clone();
            z[i] += 1e-4 * base;
            out.push(z);
        }
    }
    out.truncate(count);
    out
}

/// Evidence that the sign-pattern-scaled matrix of a ReLU net can lose rank:
/// the certificate that fails and the inputs that produced it.
#[derive(Debug, Clone)]
pub struct ReluRankDeficiency {
    pub seed: u64,
    pub z: DVector<f64>,
    pub z0: DVector<f64>,
    pub certificate: RankCertificate,
}

/// Search seeded ReLU instances for a scaled matrix with a rank-deficient
/// row subset. The leaky-ReLU guarantee excludes ReLU exactly because this
/// search succeeds.
pub fn find_relu_rank_deficiency(
    dims: &[usize],
    l: usize,
    max_seeds: u64,
) -> Result<Option<ReluRankDeficiency>> {
    let k = dims[0];
    for seed in 0..max_seeds {
        let net = GeneratorNet::init_gaussian(dims, Activation::Relu, seed)?;
        let mut rng = seeded_rng(seed ^ 0xdead_beef);
        let z = gaussian_vector_with(k, &mut rng);
        let z0 = gaussian_vector_with(k, &mut rng);
        let p = scaled_difference_matrix(&net, &z, &z0)?;
        let cert = match certify_rank_auto(&p, k, l, seed) {
            Ok(c) => c,
            Err(CoreError::NoBudget { .. }) => continue,
            Err(e) => return Err(e),
        };
        if !cert.all_full_rank {
            return Ok(Some(ReluRankDeficiency { seed, z, z0, certificate: cert }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_matrix, gaussian_vector};
    use approx::assert_relative_eq;

    #[test]
    fn exhaustive_certificate_on_gaussian_composite() {
        // m = 8, k = 2, l = 2: all C(8,3) = 56 subsets of a seeded Gaussian
        // composite should have full rank 2.
        let net = GeneratorNet::init_gaussian(&[2, 4, 8], Activation::Identity, 3).unwrap();
        let w = net.composite_weight().unwrap();
        let cert = certify_rank(&w, 2, 2, CertifyMode::Exhaustive).unwrap();
        assert_eq!(cert.submatrices_checked, 56);
        assert!(cert.all_full_rank);
        assert!(cert.min_singular_value_seen > 0.0);
    }

    #[test]
    fn duplicated_rows_are_witnessed() {
        // Two identical rows; with subset size 2 a duplicated pair arises
        // and has rank 1 < k = 2.
        let mut a = gaussian_matrix(7, 2, 5);
        let row = a.row(0).into_owned();
        a.set_row(1, &row);
        // m = 7, l = 2 gives subset size 7 - 5 = 2.
        let cert = certify_rank(&a, 2, 2, CertifyMode::Exhaustive).unwrap();
        assert!(!cert.all_full_rank);
        assert_eq!(cert.first_violation, Some(vec![0, 1]));
    }

    #[test]
    fn budget_boundary_rejected() {
        // m = k + 2l leaves subset size k - 1 < k.
        let a = gaussian_matrix(6, 2, 1);
        assert!(matches!(
            certify_rank(&a, 2, 2, CertifyMode::Exhaustive),
            Err(CoreError::NoBudget { .. })
        ));
    }

    #[test]
    fn sampled_mode_counts_subsets() {
        let a = gaussian_matrix(12, 2, 2);
        let cert = certify_rank(&a, 2, 2, CertifyMode::Sampled { count: 50, seed: 9 }).unwrap();
        assert_eq!(cert.submatrices_checked, 50);
        assert!(cert.all_full_rank);
    }

    #[test]
    fn l0_condition_passes_on_certified_instance() {
        let net = GeneratorNet::init_gaussian(&[2, 4, 8], Activation::Identity, 3).unwrap();
        let matrix = DMatrix::identity(8, 8);
        let z0 = gaussian_vector(2, 4);
        let candidates = generate_candidates(&z0, 1000, 5);
        let report = check_l0_condition(&net, &matrix, &z0, 2, &candidates).unwrap();
        assert!(report.passed(), "{:?}", report.violations.first());
        assert_eq!(report.instances_tested, 1000);
    }

    #[test]
    fn l0_condition_survives_tiny_coordinate_probes() {
        let net = GeneratorNet::init_gaussian(&[2, 4, 8], Activation::Identity, 3).unwrap();
        let matrix = DMatrix::identity(8, 8);
        let z0 = gaussian_vector(2, 4);
        let mut probes = Vec::new();
        for i in 0..2 {
            let mut z = z0.clone();
            z[i] += 1e-3;
            probes.push(z);
        }
        let report = check_l0_condition(&net, &matrix, &z0, 2, &probes).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn zero_matrix_violates_everywhere() {
        let net = GeneratorNet::init_gaussian(&[2, 4, 8], Activation::Identity, 3).unwrap();
        let matrix = DMatrix::zeros(8, 8);
        let z0 = gaussian_vector(2, 4);
        let candidates = generate_candidates(&z0, 10, 5);
        let report = check_l0_condition(&net, &matrix, &z0, 2, &candidates).unwrap();
        assert_eq!(report.violations.len(), report.instances_tested);
    }

    #[test]
    fn l1_condition_boundary_supports() {
        let net = GeneratorNet::init_gaussian(&[2, 4, 8], Activation::Identity, 3).unwrap();
        let matrix = gaussian_matrix(6, 8, 6);
        let z0 = gaussian_vector(2, 4);
        let candidates = generate_candidates(&z0, 20, 5);
        // Empty K: passes whenever the difference is nonzero.
        let empty = check_l1_condition(&net, &matrix, &z0, &[], &candidates).unwrap();
        assert!(empty.passed());
        // Full K: right side is zero, unsatisfiable.
        let full: Vec<usize> = (0..6).collect();
        let all = check_l1_condition(&net, &matrix, &z0, &full, &candidates).unwrap();
        assert_eq!(all.violations.len(), all.instances_tested);
    }

    #[test]
    fn beta_lemma_examples() {
        assert_relative_eq!(leaky_beta(0.5, 2.0, -1.0), 5.0 / 6.0, epsilon = 1e-15);
        assert_eq!(leaky_beta(0.5, 3.0, 1.0), 1.0);
        assert_eq!(leaky_beta(0.5, -3.0, -1.0), 0.5);
        assert_eq!(leaky_beta(0.3, 2.0, 2.0), 1.0);
    }

    #[test]
    fn beta_lemma_report() {
        let samples = vec![(2.0, -1.0), (3.0, 1.0), (-3.0, -1.0), (2.0, 2.0)];
        let report = check_beta_lemma(0.5, &samples).unwrap();
        assert!(report.passed());
        assert_eq!(report.instances_tested, 3); // x = y pair skipped
        assert!(check_beta_lemma(0.0, &samples).is_err());
        assert!(check_beta_lemma(1.0, &samples).is_err());
    }

    #[test]
    fn scaled_difference_matrix_reproduces_differences() {
        let net =
            GeneratorNet::init_gaussian_biased(&[3, 6, 5], Activation::leaky(0.2).unwrap(), 7).unwrap();
        for seed in 0..10 {
            let z = gaussian_vector(3, 2 * seed);
            let z0 = gaussian_vector(3, 2 * seed + 1);
            let p = scaled_difference_matrix(&net, &z, &z0).unwrap();
            let lhs = net.forward(&z).unwrap() - net.forward(&z0).unwrap();
            let rhs = &p * (&z - &z0);
            let scale = lhs.amax().max(1.0);
            assert!((lhs - rhs).amax() / scale <= 1e-10);
        }
    }

    #[test]
    fn brute_force_singleton_grid() {
        let net = GeneratorNet::init_gaussian(&[2, 4, 8], Activation::Identity, 3).unwrap();
        let matrix = gaussian_matrix(6, 8, 6);
        let z0 = gaussian_vector(2, 4);
        let y = &matrix * net.forward(&z0).unwrap();
        let res = brute_force_l0_recovery(&net, &matrix, &y, &[z0.clone()]).unwrap();
        assert_eq!(res.best.as_slice(), z0.as_slice());
        assert!(res.unique());
        assert!(brute_force_l0_recovery(&net, &matrix, &y, &[]).is_err());
    }

    #[test]
    fn relu_rank_deficiency_exists() {
        let found = find_relu_rank_deficiency(&[2, 8], 2, 64).unwrap();
        assert!(found.is_some(), "no ReLU rank-deficient instance in 64 seeds");
    }
}
