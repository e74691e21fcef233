//! The averaging iteration `x(t+1) = A(t) x(t)`, its spread metric, and the
//! sorted-state transform: the rank permutation, the sorted vector, and the
//! reindexed weight matrix that propagates sorted states exactly one step.

use crate::balance::asymmetry_pair_ratio;
use crate::error::{Error, Result};
use crate::matrix::{NodeSubset, StochasticMatrix, INEQ_SLACK};
use crate::schedule::WeightSchedule;
use serde::Serialize;

/// Default cap on retained state scalars; beyond it only the extrema and
/// spread are kept. Rate studies need the spread far past where full states
/// matter.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub record_sorted: bool,
    pub state_cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            record_sorted: false,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

/// Sorted-state record for one time step.
#[derive(Debug, Clone, Serialize)]
pub struct SortedStep {
    /// `rank[i]` is the original index of the i-th smallest state.
    pub rank: Vec<usize>,
    /// The sorted state vector.
    pub sorted: Vec<f64>,
}

/// Time-indexed simulation output. `spread(t) = max_i x_i(t) - min_i x_i(t)`
/// is nonincreasing; the extrema sequences are monotone in their own
/// directions.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: u64,
    /// Retained state vectors from `t0` on; may be shorter than the run when
    /// the state cap was hit.
    pub states: Vec<Vec<f64>>,
    pub max_state: Vec<f64>,
    pub min_state: Vec<f64>,
    pub spread: Vec<f64>,
    pub sorted: Option<Vec<SortedStep>>,
    pub state_cap_hit: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.spread.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spread.is_empty()
    }

    pub fn last_t(&self) -> u64 {
        self.t0 + self.spread.len() as u64 - 1
    }

    pub fn spread_at(&self, t: u64) -> Option<f64> {
        t.checked_sub(self.t0)
            .and_then(|idx| self.spread.get(idx as usize).copied())
    }

    pub fn state_at(&self, t: u64) -> Option<&[f64]> {
        t.checked_sub(self.t0)
            .and_then(|idx| self.states.get(idx as usize))
            .map(Vec::as_slice)
    }

    /// First time with `spread(t) <= threshold`, if reached.
    pub fn first_spread_below(&self, threshold: f64) -> Option<u64> {
        self.spread
            .iter()
            .position(|&p| p <= threshold)
            .map(|idx| self.t0 + idx as u64)
    }
}

/// Stable rank permutation: `result[i]` is the index of the i-th smallest
/// entry, ties broken by original index.
pub fn sort_permutation(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite states").then(a.cmp(&b)));
    idx
}

fn validate_permutation(sigma: &[usize], n: usize) -> Result<()> {
    if sigma.len() != n {
        return Err(Error::InvalidPermutation { n });
    }
    let mut seen = vec![false; n];
    for &s in sigma {
        if s >= n || seen[s] {
            return Err(Error::InvalidPermutation { n });
        }
        seen[s] = true;
    }
    Ok(())
}

/// Reindexes a weight matrix by the rank permutations of two consecutive
/// steps: entry `(i, j)` becomes `B[next[i]][now[j]]`. The result is again
/// row-stochastic and propagates the sorted state exactly:
/// `sorted(t+1) = C * sorted(t)`.
pub fn reindex_sorted(
    b: &StochasticMatrix,
    rank_next: &[usize],
    rank_now: &[usize],
) -> Result<StochasticMatrix> {
    let n = b.n();
    validate_permutation(rank_next, n)?;
    validate_permutation(rank_now, n)?;
    let mut entries = Vec::with_capacity(n * n);
    for &src_row in rank_next {
        for &src_col in rank_now {
            entries.push(b.get(src_row, src_col));
        }
    }
    Ok(StochasticMatrix::from_flat_unchecked(n, entries))
}

/// Same-step reindexing `B[now[i]][now[j]]`; the natural analogue from
/// continuous time, which does not propagate discrete sorted states.
pub fn reindex_sorted_same_step(
    b: &StochasticMatrix,
    rank_now: &[usize],
) -> Result<StochasticMatrix> {
    reindex_sorted(b, rank_now, rank_now)
}

/// Runs the iteration for `steps` steps, tracking extrema and spread, and
/// (optionally) the sorted-state records. Checks on the fly that the spread
/// never increases, that states stay inside the initial envelope, and that
/// the reindexed matrix reproduces the sorted state.
pub fn simulate(
    schedule: &WeightSchedule,
    x0: &[f64],
    steps: u64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let n = schedule.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    let t0 = schedule.t0();
    let mut x = x0.to_vec();
    let mut max0 = f64::NEG_INFINITY;
    let mut min0 = f64::INFINITY;
    for &v in &x {
        max0 = max0.max(v);
        min0 = min0.min(v);
    }
    let scale = 1.0f64.max(max0.abs()).max(min0.abs());
    let tol = 1e-12 * scale;

    let mut states = Vec::new();
    let mut max_state = Vec::with_capacity(steps as usize + 1);
    let mut min_state = Vec::with_capacity(steps as usize + 1);
    let mut spread = Vec::with_capacity(steps as usize + 1);
    let mut sorted = opts.record_sorted.then(Vec::new);
    let mut state_cap_hit = false;

    let mut retained = 0usize;
    let mut push_state = |x: &[f64], states: &mut Vec<Vec<f64>>| {
        if retained + x.len() <= opts.state_cap {
            states.push(x.to_vec());
            retained += x.len();
            false
        } else {
            true
        }
    };

    state_cap_hit |= push_state(&x, &mut states);
    max_state.push(max0);
    min_state.push(min0);
    spread.push(max0 - min0);
    let mut rank_now = sort_permutation(&x);
    if let Some(recs) = sorted.as_mut() {
        recs.push(SortedStep {
            rank: rank_now.clone(),
            sorted: rank_now.iter().map(|&i| x[i]).collect(),
        });
    }

    for step in 0..steps {
        let t = t0 + step;
        let a = schedule.matrix_at(t)?;
        let next = a.apply(&x)?;

        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for &v in &next {
            hi = hi.max(v);
            lo = lo.min(v);
        }
        if hi > max0 + tol || lo < min0 - tol {
            return Err(Error::SpreadIncreased {
                t: t + 1,
                before: max0 - min0,
                after: hi - lo,
            });
        }
        let prev = *spread.last().expect("nonempty");
        if hi - lo > prev + tol {
            return Err(Error::SpreadIncreased {
                t: t + 1,
                before: prev,
                after: hi - lo,
            });
        }

        if opts.record_sorted {
            let rank_next = sort_permutation(&next);
            let z_now: Vec<f64> = rank_now.iter().map(|&i| x[i]).collect();
            let z_next: Vec<f64> = rank_next.iter().map(|&i| next[i]).collect();
            let c = reindex_sorted(&a, &rank_next, &rank_now)?;
            let propagated = c.apply(&z_now)?;
            let deviation = z_next
                .iter()
                .zip(&propagated)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if deviation > tol {
                return Err(Error::SortedStateMismatch { t: t + 1, deviation });
            }
            if let Some(recs) = sorted.as_mut() {
                recs.push(SortedStep {
                    rank: rank_next.clone(),
                    sorted: z_next,
                });
            }
            rank_now = rank_next;
        }

        x = next;
        state_cap_hit |= push_state(&x, &mut states);
        max_state.push(hi);
        min_state.push(lo);
        spread.push(hi - lo);
    }

    Ok(Trajectory {
        t0,
        states,
        max_state,
        min_state,
        spread,
        sorted,
        state_cap_hit,
    })
}

/// Outcome of checking that reindexing preserves the balanced-asymmetry
/// inequality for one subset pair.
#[derive(Debug, Clone, Serialize)]
pub struct ReindexAsymmetryCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// If `B` satisfies balanced asymmetry with constant `m`, so does its
/// reindexing by any two rank permutations; this verifies one subset pair.
pub fn reindex_preserves_asymmetry(
    b: &StochasticMatrix,
    rank_next: &[usize],
    rank_now: &[usize],
    m: f64,
    s1: &NodeSubset,
    s2: &NodeSubset,
) -> Result<ReindexAsymmetryCheck> {
    let c = reindex_sorted(b, rank_next, rank_now)?;
    let ratio = asymmetry_pair_ratio(&c, s1, s2)?;
    // ratio <= m  <=>  inflow <= m * outflow with the 0/0 convention.
    let holds = ratio <= m + INEQ_SLACK || ratio.is_infinite() && m.is_infinite();
    // Recover both sides for the report.
    let n = b.n();
    let flat: Vec<f64> = c.rows().flatten().copied().collect();
    let lhs = crate::matrix::cut_sum_flat(n, &flat, s1.complement().bits(), s2.bits());
    let rhs = m * crate::matrix::cut_sum_flat(n, &flat, s1.bits(), s2.complement().bits());
    Ok(ReindexAsymmetryCheck { lhs, rhs, holds })
}

/// Both sides of the sorted-drift inequality chain.
#[derive(Debug, Clone, Serialize)]
pub struct SortedDriftCheck {
    pub weighted_drift: f64,
    pub gap_term: f64,
    pub holds: bool,
}

/// For a matrix `B` with balanced-asymmetry constant `m`, permutations
/// `mu`, `sigma`, a nondecreasing vector `z`, and a split index
/// `1 <= split <= n-1`, checks the chain
///
/// ```text
/// sum_{i<=split} m^{-i} sum_j c_ij (z_j - z_i)
///     >= (z_{split+1} - z_split) m^{-split} sum_{i>split} sum_{j<=split} c_ji
///     >= 0
/// ```
///
/// where `c_ij = B[mu[i]][sigma[j]]` (indices here 1-based as written,
/// 0-based in code).
pub fn sorted_drift_lower_bound(
    b: &StochasticMatrix,
    mu: &[usize],
    sigma: &[usize],
    z: &[f64],
    m: f64,
    split: usize,
) -> Result<SortedDriftCheck> {
    let n = b.n();
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: z.len(),
        });
    }
    if let Some(pos) = z.windows(2).position(|w| w[0] > w[1]) {
        return Err(Error::NotSorted { pos: pos + 2 });
    }
    if split == 0 || split >= n {
        return Err(Error::IndexOutOfRange {
            index: split,
            max: n - 1,
        });
    }
    let c = reindex_sorted(b, mu, sigma)?;
    let mut weighted_drift = 0.0;
    for i in 0..split {
        let mut drift = 0.0;
        for j in 0..n {
            drift += c.get(i, j) * (z[j] - z[i]);
        }
        weighted_drift += m.powi(-(i as i32 + 1)) * drift;
    }
    let mut cross = 0.0;
    for i in split..n {
        for j in 0..split {
            cross += c.get(j, i);
        }
    }
    let gap_term = (z[split] - z[split - 1]) * m.powi(-(split as i32)) * cross;
    let holds = weighted_drift >= gap_term - INEQ_SLACK && gap_term >= -INEQ_SLACK;
    Ok(SortedDriftCheck {
        weighted_drift,
        gap_term,
        holds,
    })
}
