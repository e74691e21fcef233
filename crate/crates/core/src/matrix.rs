//! Dense row-stochastic matrices at desk scale, node subsets, and directed
//! cut sums, together with the product-vs-sum cut inequalities that relate a
//! product of stochastic matrices to their sum.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Row sums must stay within this tolerance of 1 after construction.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Constructors renormalize rows whose sum deviates by at most this much and
/// reject anything worse.
pub const ROW_SUM_REPAIR_LIMIT: f64 = 1e-9;

/// Slack used when checking inequalities that are exact in real arithmetic.
pub const INEQ_SLACK: f64 = 1e-9;

/// A square nonnegative matrix whose rows each sum to 1.
///
/// Entries are stored row-major; `get(i, j)` is the weight with which node
/// `j` influences node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl StochasticMatrix {
    /// Builds a matrix from rows, validating nonnegativity and renormalizing
    /// row sums that are within [`ROW_SUM_REPAIR_LIMIT`] of 1.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyMatrixList);
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if v < 0.0 {
                    return Err(Error::NegativeEntry {
                        row: i + 1,
                        col: j + 1,
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_REPAIR_LIMIT {
                return Err(Error::RowSumOutOfTolerance { row: i + 1, sum });
            }
            entries.extend(row.iter().map(|&v| v / sum));
        }
        Ok(Self { n, entries })
    }

    /// Internal constructor for values already known to be row-stochastic
    /// (products, permuted rows). Skips renormalization so derived matrices
    /// stay exactly what arithmetic produced.
    pub(crate) fn from_flat_unchecked(n: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), n * n);
        Self { n, entries }
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    /// Matrix with every entry 1/n.
    pub fn uniform(n: usize) -> Self {
        Self {
            n,
            entries: vec![1.0 / n as f64; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.n)
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.n)
            .map(|i| self.get(i, i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation of any row sum from 1.
    pub fn row_sum_deviation(&self) -> f64 {
        self.rows()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `self * other`, exercising closure of row-stochastic matrices.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.get(k, j);
                }
            }
        }
        Ok(Self::from_flat_unchecked(n, out))
    }

    /// Entrywise sum; rows of the result sum to the number of summands.
    pub fn entrywise_sum(matrices: &[Self]) -> Result<Vec<f64>> {
        let first = matrices.first().ok_or(Error::EmptyMatrixList)?;
        let n = first.n;
        let mut out = vec![0.0; n * n];
        for m in matrices {
            if m.n != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.n,
                });
            }
            for (o, &v) in out.iter_mut().zip(&m.entries) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Applies the matrix to a state vector: `y_i = sum_j a_ij x_j`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(self
            .rows()
            .map(|row| row.iter().zip(x).map(|(a, v)| a * v).sum())
            .collect())
    }
}

/// A subset of the node set `{0, .., n-1}`, stored as a bitmask.
///
/// All in-crate indices are 0-based; CLI and file layers present 1-based
/// node numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeSubset {
    n: usize,
    bits: u32,
}

impl NodeSubset {
    pub const MAX_NODES: usize = 32;

    pub fn from_bits(n: usize, bits: u32) -> Result<Self> {
        if n == 0 || n > Self::MAX_NODES {
            return Err(Error::EnumerationGuard {
                what: "node subsets",
                limit: Self::MAX_NODES,
                n,
            });
        }
        let mask = Self::full_mask(n);
        if bits & !mask != 0 {
            return Err(Error::IndexOutOfRange {
                index: (32 - bits.leading_zeros()) as usize,
                max: n,
            });
        }
        Ok(Self { n, bits })
    }

    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        let mut bits = 0u32;
        for &m in members {
            if m >= n {
                return Err(Error::IndexOutOfRange {
                    index: m + 1,
                    max: n,
                });
            }
            bits |= 1 << m;
        }
        Self::from_bits(n, bits)
    }

    fn full_mask(n: usize) -> u32 {
        if n == 32 {
            u32::MAX
        } else {
            (1u32 << n) - 1
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn cardinality(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn contains(&self, node: usize) -> bool {
        node < self.n && self.bits & (1 << node) != 0
    }

    pub fn complement(&self) -> Self {
        Self {
            n: self.n,
            bits: !self.bits & Self::full_mask(self.n),
        }
    }

    pub fn is_proper_nonempty(&self) -> bool {
        self.bits != 0 && self.bits != Self::full_mask(self.n)
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.contains(i))
    }

    /// 1-based member list for reports.
    pub fn members_one_based(&self) -> Vec<usize> {
        self.members().map(|i| i + 1).collect()
    }

    /// All nonempty proper subsets of `{0, .., n-1}` in ascending bit order.
    pub fn proper_subsets(n: usize) -> impl Iterator<Item = NodeSubset> {
        let mask = Self::full_mask(n);
        (1..mask).map(move |bits| NodeSubset { n, bits })
    }

    /// All subsets with the given cardinality, ascending bit order.
    pub fn with_cardinality(n: usize, c: usize) -> Vec<NodeSubset> {
        (1..=Self::full_mask(n))
            .filter(|b| b.count_ones() as usize == c)
            .map(|bits| NodeSubset { n, bits })
            .collect()
    }

    fn require_proper(&self) -> Result<()> {
        if self.is_proper_nonempty() {
            Ok(())
        } else {
            Err(Error::SubsetNotProper { n: self.n })
        }
    }
}

/// Sum of the entries `a_ij` with `i` in `into` and `j` in `from`.
///
/// The caller supplies the index groups; disjointness is not required, so the
/// usual cut patterns (`into` = complement of S, `from` = S) and their
/// variants are all expressible.
pub fn cut_sum(a: &StochasticMatrix, into: &NodeSubset, from: &NodeSubset) -> Result<f64> {
    if into.n() != a.n() || from.n() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: into.n().max(from.n()),
        });
    }
    let mut sum = 0.0;
    for i in into.members() {
        for j in from.members() {
            sum += a.get(i, j);
        }
    }
    Ok(sum)
}

/// Same cut over a raw row-major accumulation (used for window sums).
pub(crate) fn cut_sum_flat(n: usize, entries: &[f64], into: u32, from: u32) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        if into & (1 << i) == 0 {
            continue;
        }
        for j in 0..n {
            if from & (1 << j) != 0 {
                sum += entries[i * n + j];
            }
        }
    }
    sum
}

/// Product of the matrices in the given order: `product_chain([A, B, C]) = A B C`.
pub fn product_chain(matrices: &[StochasticMatrix]) -> Result<StochasticMatrix> {
    let mut iter = matrices.iter();
    let first = iter.next().ok_or(Error::EmptyMatrixList)?.clone();
    iter.try_fold(first, |acc, m| acc.multiply(m))
}

/// Outcome of a two-sided inequality check: both sides plus the verdict.
#[derive(Debug, Clone, Serialize)]
pub struct CutInequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks that the cut of a product of stochastic matrices with diagonals at
/// least `diag_floor` dominates the cut of their sum scaled by
/// `diag_floor^(m-1)`:
///
/// ```text
/// sum_{i in S, j notin S} (A_1 .. A_m)_ij  >=  floor^(m-1) * sum_{i in S, j notin S} (A_1 + .. + A_m)_ij
/// ```
///
/// This holds for every admissible input; the function exists to machine-check
/// it and to expose both sides.
pub fn product_cut_lower_bound(
    matrices: &[StochasticMatrix],
    diag_floor: f64,
    subset: &NodeSubset,
) -> Result<CutInequality> {
    if !(0.0 < diag_floor && diag_floor < 1.0) {
        return Err(Error::InvalidSelfWeightFloor(diag_floor));
    }
    subset.require_proper()?;
    for m in matrices {
        for i in 0..m.n() {
            let d = m.get(i, i);
            if d < diag_floor {
                return Err(Error::DiagonalBelowFloor {
                    node: i + 1,
                    value: d,
                    floor: diag_floor,
                });
            }
        }
    }
    let product = product_chain(matrices)?;
    let sum = StochasticMatrix::entrywise_sum(matrices)?;
    let comp = subset.complement();
    let lhs = cut_sum(&product, subset, &comp)?;
    let rhs = diag_floor.powi(matrices.len() as i32 - 1)
        * cut_sum_flat(product.n(), &sum, subset.bits(), comp.bits());
    Ok(CutInequality {
        lhs,
        rhs,
        holds: lhs >= rhs - INEQ_SLACK,
    })
}

/// Checks the matching upper bound, which needs no diagonal assumption:
///
/// ```text
/// sum_{i in S, j notin S} (A_1 .. A_m)_ij  <=  (N-1) * sum_{i in S, j notin S} (A_1 + .. + A_m)_ij
/// ```
pub fn product_cut_upper_bound(
    matrices: &[StochasticMatrix],
    subset: &NodeSubset,
) -> Result<CutInequality> {
    subset.require_proper()?;
    let product = product_chain(matrices)?;
    let sum = StochasticMatrix::entrywise_sum(matrices)?;
    let comp = subset.complement();
    let lhs = cut_sum(&product, subset, &comp)?;
    let rhs = (product.n() as f64 - 1.0)
        * cut_sum_flat(product.n(), &sum, subset.bits(), comp.bits());
    Ok(CutInequality {
        lhs,
        rhs,
        holds: lhs <= rhs + INEQ_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sec5_first_matrix(k: u64) -> StochasticMatrix {
        let t = (3 * k + 1) as f64;
        StochasticMatrix::from_rows(vec![
            vec![1.0 / t, 1.0 - 1.0 / t, 0.0],
            vec![1.0 - 1.0 / (t * t), 1.0 / (t * t), 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn identity_has_no_cross_terms() {
        let a = StochasticMatrix::identity(3);
        let into = NodeSubset::from_members(3, &[0]).unwrap();
        let from = NodeSubset::from_members(3, &[1, 2]).unwrap();
        assert_eq!(cut_sum(&a, &into, &from).unwrap(), 0.0);
    }

    #[test]
    fn cut_sum_on_three_agent_example_matrix() {
        // k = 0 zeros the (2,1) weight entirely; k = 1 gives 1 - 1/16.
        let into = NodeSubset::from_members(3, &[1, 2]).unwrap();
        let from = NodeSubset::from_members(3, &[0]).unwrap();
        assert_eq!(cut_sum(&sec5_first_matrix(0), &into, &from).unwrap(), 0.0);
        assert_abs_diff_eq!(
            cut_sum(&sec5_first_matrix(1), &into, &from).unwrap(),
            0.9375,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cut_sum_uniform() {
        let a = StochasticMatrix::uniform(3);
        let into = NodeSubset::from_members(3, &[0]).unwrap();
        let from = NodeSubset::from_members(3, &[1, 2]).unwrap();
        assert_abs_diff_eq!(
            cut_sum(&a, &into, &from).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cut_sum_empty_subset_is_zero() {
        let a = StochasticMatrix::uniform(4);
        let empty = NodeSubset::from_members(4, &[]).unwrap();
        let all = NodeSubset::from_members(4, &[0, 1, 2, 3]).unwrap();
        assert_eq!(cut_sum(&a, &empty, &all).unwrap(), 0.0);
        assert_eq!(cut_sum(&a, &all, &empty).unwrap(), 0.0);
    }

    #[test]
    fn product_of_identities_is_identity() {
        let id = StochasticMatrix::identity(4);
        let p = product_chain(&[id.clone(), id.clone(), id.clone()]).unwrap();
        assert_eq!(p, id);
    }

    #[test]
    fn single_matrix_chain_is_the_matrix() {
        let a = sec5_first_matrix(2);
        assert_eq!(product_chain(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn empty_chain_rejected() {
        assert!(matches!(
            product_chain(&[]),
            Err(Error::EmptyMatrixList)
        ));
    }

    #[test]
    fn two_step_window_product_stays_stochastic() {
        // Product over the first two steps of the three-agent example,
        // composed latest-first.
        let t2 = StochasticMatrix::from_rows(vec![
            vec![0.25, 0.0, 0.75],
            vec![0.0, 1.0, 0.0],
            vec![0.5, 0.0, 0.5],
        ])
        .unwrap();
        let t1 = StochasticMatrix::identity(3);
        let b = product_chain(&[t2, t1]).unwrap();
        assert!(b.row_sum_deviation() <= 2.0 * ROW_SUM_TOLERANCE);
    }

    #[test]
    fn row_sum_repair_and_rejection() {
        // A row off by 1e-10 gets renormalized; one summing to 0.5 is rejected.
        let near = StochasticMatrix::from_rows(vec![
            vec![0.5 + 1e-10, 0.5],
            vec![0.25, 0.75],
        ])
        .unwrap();
        assert!(near.row_sum_deviation() <= ROW_SUM_TOLERANCE);

        let err = StochasticMatrix::from_rows(vec![vec![0.25, 0.25], vec![0.5, 0.5]]);
        assert!(matches!(
            err,
            Err(Error::RowSumOutOfTolerance { row: 1, .. })
        ));
    }

    #[test]
    fn negative_entry_rejected() {
        let err = StochasticMatrix::from_rows(vec![vec![1.1, -0.1], vec![0.5, 0.5]]);
        assert!(matches!(err, Err(Error::NegativeEntry { row: 1, col: 2, .. })));
    }

    #[test]
    fn product_lower_bound_single_matrix_is_equality() {
        let a = sec5_first_matrix(3);
        let s = NodeSubset::from_members(3, &[0, 2]).unwrap();
        // With m = 1 both sides coincide: floor^0 = 1.
        // Diagonals of A(10) are 0.1, 0.01, 1.0 so pick a floor below them.
        let rep = product_cut_lower_bound(std::slice::from_ref(&a), 0.009, &s).unwrap();
        assert_abs_diff_eq!(rep.lhs, rep.rhs, epsilon = 1e-15);
        assert!(rep.holds);
    }

    #[test]
    fn product_lower_bound_identities_hold_with_equality() {
        let id = StochasticMatrix::identity(4);
        let s = NodeSubset::from_members(4, &[1, 3]).unwrap();
        let rep =
            product_cut_lower_bound(&[id.clone(), id.clone(), id], 0.5, &s).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.rhs, 0.0);
        assert!(rep.holds);
    }

    #[test]
    fn product_lower_bound_rejects_low_diagonal() {
        let a = sec5_first_matrix(1); // diagonal 1/16 on row 2
        let s = NodeSubset::from_members(3, &[0]).unwrap();
        let err = product_cut_lower_bound(std::slice::from_ref(&a), 0.2, &s);
        assert!(matches!(err, Err(Error::DiagonalBelowFloor { node: 2, .. })));
    }

    #[test]
    fn product_upper_bound_swap_matrices_by_hand() {
        // A1 = A2 = [[0,1],[1,0]]: the two-step product is I, the sum cut is 2.
        let swap =
            StochasticMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let s = NodeSubset::from_members(2, &[0]).unwrap();
        let rep = product_cut_upper_bound(&[swap.clone(), swap], &s).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_abs_diff_eq!(rep.rhs, 2.0, epsilon = 1e-15);
        assert!(rep.holds);
    }

    #[test]
    fn improper_subsets_rejected() {
        let a = StochasticMatrix::uniform(3);
        let empty = NodeSubset::from_members(3, &[]).unwrap();
        let full = NodeSubset::from_members(3, &[0, 1, 2]).unwrap();
        assert!(product_cut_upper_bound(std::slice::from_ref(&a), &empty).is_err());
        assert!(product_cut_upper_bound(std::slice::from_ref(&a), &full).is_err());
    }

    #[test]
    fn cut_sum_additive_over_matrix_addition() {
        let a = sec5_first_matrix(1);
        let b = sec5_first_matrix(2);
        let into = NodeSubset::from_members(3, &[1, 2]).unwrap();
        let from = NodeSubset::from_members(3, &[0]).unwrap();
        let summed = StochasticMatrix::entrywise_sum(&[a.clone(), b.clone()]).unwrap();
        let lhs = cut_sum_flat(3, &summed, into.bits(), from.bits());
        let rhs = cut_sum(&a, &into, &from).unwrap() + cut_sum(&b, &into, &from).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }
}
