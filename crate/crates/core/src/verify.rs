//! Seeded randomized property suites: each inequality the library encodes is
//! hammered with admissible random instances. A single violation is a bug in
//! the implementation (the inequalities are theorems), so suites report the
//! first failing instance verbatim.

use crate::balance::balanced_asymmetry_m_min;
use crate::bounds::{product_floor_check, self_weight_envelope_check};
use crate::dynamics::{
    reindex_preserves_asymmetry, simulate, sorted_drift_lower_bound, SimOptions,
};
use crate::matrix::{product_cut_lower_bound, product_cut_upper_bound, NodeSubset, StochasticMatrix};
use crate::parallel;
use crate::schedule::WeightSchedule;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub trials: u64,
    pub violations: u64,
    pub first_failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_add(1));
    rng
}

fn run_suite<F>(name: &'static str, trials: u64, seed: u64, trial: F) -> SuiteReport
where
    F: Fn(&mut ChaCha8Rng) -> Option<String> + Sync + Send,
{
    let failures = parallel::map_collect((0..trials).collect::<Vec<_>>(), |t| {
        let mut rng = trial_rng(seed, t);
        trial(&mut rng).map(|msg| format!("trial {t}: {msg}"))
    });
    let violations = failures.iter().flatten().count() as u64;
    let first_failure = failures.into_iter().flatten().next();
    SuiteReport {
        name,
        trials,
        violations,
        first_failure,
    }
}

/// Random row-stochastic matrix; roughly a third of the off-diagonal entries
/// are zeroed to exercise sparse interaction patterns.
fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> StochasticMatrix {
    let rows = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random_range(0.05..1.0)
                    }
                })
                .collect();
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                row[rng.random_range(0..n)] = 1.0;
            } else {
                row.iter_mut().for_each(|v| *v /= sum);
            }
            row
        })
        .collect();
    StochasticMatrix::from_rows(rows).expect("normalized rows")
}

/// Random row-stochastic matrix with diagonals at least `floor`.
fn random_stochastic_with_floor(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> StochasticMatrix {
    let rows = (0..n)
        .map(|i| {
            let mut off: Vec<f64> = (0..n)
                .map(|j| {
                    if j == i || rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random_range(0.0..1.0)
                    }
                })
                .collect();
            let sum: f64 = off.iter().sum();
            let budget = (1.0 - floor) * rng.random_range(0.0..1.0);
            if sum > 0.0 {
                off.iter_mut().for_each(|v| *v *= budget / sum);
            }
            let off_total: f64 = off.iter().sum();
            off[i] = 1.0 - off_total;
            off
        })
        .collect();
    StochasticMatrix::from_rows(rows).expect("normalized rows")
}

/// Random matrix with every entry positive, so the balanced-asymmetry
/// constant is finite.
fn random_positive_stochastic(rng: &mut ChaCha8Rng, n: usize) -> StochasticMatrix {
    let rows = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
            row
        })
        .collect();
    StochasticMatrix::from_rows(rows).expect("normalized rows")
}

fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Product floor: any sequence of factors in `[floor, 1]` with bounded total
/// deficit stays above the closed-form bound.
pub fn product_floor_suite(trials: u64, seed: u64) -> SuiteReport {
    run_suite("product-floor", trials, seed, |rng| {
        let floor = rng.random_range(0.05..0.95);
        let budget = rng.random_range(0.0..3.0);
        let len = rng.random_range(0..=50usize);
        let mut remaining = budget;
        let factors: Vec<f64> = (0..len)
            .map(|_| {
                let deficit =
                    f64::min(rng.random_range(0.0..=(1.0 - floor)), remaining);
                remaining -= deficit;
                1.0 - deficit
            })
            .collect();
        match product_floor_check(floor, budget, &factors) {
            Ok(rep) if rep.holds => None,
            Ok(rep) => Some(format!(
                "product {} fell below bound {} (floor {floor}, budget {budget})",
                rep.product, rep.floor_bound
            )),
            Err(e) => Some(format!("rejected admissible instance: {e}")),
        }
    })
}

/// Envelope recursion on random schedules with a self-weight floor.
pub fn envelope_suite(trials: u64, seed: u64) -> SuiteReport {
    run_suite("self-weight-envelope", trials, seed, |rng| {
        let n = rng.random_range(2..=5usize);
        let floor = rng.random_range(0.2..0.8);
        let total = 12u64;
        let matrices: Vec<StochasticMatrix> = (0..total)
            .map(|_| random_stochastic_with_floor(rng, n, floor))
            .collect();
        let schedule = WeightSchedule::explicit(matrices, 0, None).expect("valid");
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let traj = simulate(&schedule, &x0, total, &SimOptions::default()).expect("runs");
        let start = rng.random_range(0..3u64);
        let span = rng.random_range(0..=8u64);
        let agent = rng.random_range(0..n);
        let idx = start as usize;
        let hi = traj.max_state[idx];
        let lo = traj.min_state[idx];
        let state = traj.state_at(start).expect("retained")[agent];
        let mix = if hi > lo {
            ((hi - state) / (hi - lo)).min(1.0 - 1e-9) * rng.random_range(0.0..1.0)
        } else {
            0.0
        };
        match self_weight_envelope_check(&schedule, &traj, agent, start, mix, span) {
            Ok(rep) if rep.holds => None,
            Ok(rep) => Some(format!(
                "agent {agent} exceeded envelope by {} (mix {mix}, span {span})",
                rep.worst_excess
            )),
            Err(e) => Some(format!("rejected admissible instance: {e}")),
        }
    })
}

/// Product-vs-sum cut lower bound over all proper subsets of random
/// diagonal-floored chains.
pub fn product_cut_lower_suite(trials: u64, seed: u64) -> SuiteReport {
    run_suite("product-cut-lower", trials, seed, |rng| {
        let n = rng.random_range(2..=6usize);
        let m = rng.random_range(1..=5usize);
        let floor = 0.2;
        let matrices: Vec<StochasticMatrix> = (0..m)
            .map(|_| random_stochastic_with_floor(rng, n, floor))
            .collect();
        for subset in NodeSubset::proper_subsets(n) {
            match product_cut_lower_bound(&matrices, floor, &subset) {
                Ok(rep) if rep.holds => {}
                Ok(rep) => {
                    return Some(format!(
                        "subset {:?}: product cut {} below {}",
                        subset.members_one_based(),
                        rep.lhs,
                        rep.rhs
                    ));
                }
                Err(e) => return Some(format!("rejected admissible instance: {e}")),
            }
        }
        None
    })
}

/// Product-vs-sum cut upper bound over all proper subsets of arbitrary
/// stochastic chains.
pub fn product_cut_upper_suite(trials: u64, seed: u64) -> SuiteReport {
    run_suite("product-cut-upper", trials, seed, |rng| {
        let n = rng.random_range(2..=6usize);
        let m = rng.random_range(1..=5usize);
        let matrices: Vec<StochasticMatrix> =
            (0..m).map(|_| random_stochastic(rng, n)).collect();
        for subset in NodeSubset::proper_subsets(n) {
            match product_cut_upper_bound(&matrices, &subset) {
                Ok(rep) if rep.holds => {}
                Ok(rep) => {
                    return Some(format!(
                        "subset {:?}: product cut {} above {}",
                        subset.members_one_based(),
                        rep.lhs,
                        rep.rhs
                    ));
                }
                Err(e) => return Some(format!("rejected admissible instance: {e}")),
            }
        }
        None
    })
}

/// Rank reindexing preserves the balanced-asymmetry constant, over all
/// equal-cardinality subset pairs.
pub fn reindex_asymmetry_suite(trials: u64, seed: u64) -> SuiteReport {
    run_suite("reindex-asymmetry", trials, seed, |rng| {
        let n = rng.random_range(2..=5usize);
        let b = random_positive_stochastic(rng, n);
        let m = match balanced_asymmetry_m_min(&b) {
            Ok(rep) => rep.m_min,
            Err(e) => return Some(format!("asymmetry scan failed: {e}")),
        };
        let rank_next = random_permutation(rng, n);
        let rank_now = random_permutation(rng, n);
        for c in 1..n {
            for s1 in NodeSubset::with_cardinality(n, c) {
                for s2 in NodeSubset::with_cardinality(n, c) {
                    match reindex_preserves_asymmetry(&b, &rank_next, &rank_now, m, &s1, &s2)
                    {
                        Ok(rep) if rep.holds => {}
                        Ok(rep) => {
                            return Some(format!(
                                "pair {:?} vs {:?}: {} > {}",
                                s1.members_one_based(),
                                s2.members_one_based(),
                                rep.lhs,
                                rep.rhs
                            ));
                        }
                        Err(e) => return Some(format!("rejected instance: {e}")),
                    }
                }
            }
        }
        None
    })
}

/// Sorted-drift inequality chain for all split indices on random
/// balanced-asymmetric matrices and sorted vectors.
pub fn sorted_drift_suite(trials: u64, seed: u64) -> SuiteReport {
    run_suite("sorted-drift", trials, seed, |rng| {
        let n = rng.random_range(2..=5usize);
        let b = random_positive_stochastic(rng, n);
        let m = match balanced_asymmetry_m_min(&b) {
            Ok(rep) => rep.m_min,
            Err(e) => return Some(format!("asymmetry scan failed: {e}")),
        };
        let mu = random_permutation(rng, n);
        let sigma = random_permutation(rng, n);
        let mut z: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        z.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        for split in 1..n {
            match sorted_drift_lower_bound(&b, &mu, &sigma, &z, m, split) {
                Ok(rep) if rep.holds => {}
                Ok(rep) => {
                    return Some(format!(
                        "split {split}: drift {} < gap term {}",
                        rep.weighted_drift, rep.gap_term
                    ));
                }
                Err(e) => return Some(format!("rejected instance: {e}")),
            }
        }
        None
    })
}

/// Runs every suite with the same per-suite trial count.
pub fn all_suites(trials: u64, seed: u64) -> Vec<SuiteReport> {
    vec![
        product_floor_suite(trials, seed),
        envelope_suite(trials, seed ^ 0x9e37_79b9_7f4a_7c15),
        product_cut_lower_suite(trials, seed ^ 0x517c_c1b7_2722_0a95),
        product_cut_upper_suite(trials, seed ^ 0x2545_f491_4f6c_dd1d),
        reindex_asymmetry_suite(trials, seed ^ 0x27d4_eb2f_1656_67c5),
        sorted_drift_suite(trials, seed ^ 0x1656_67c5_27d4_eb2f),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        for rep in all_suites(60, 42) {
            assert!(
                rep.passed(),
                "{} violated {} times: {:?}",
                rep.name,
                rep.violations,
                rep.first_failure
            );
        }
    }

    #[test]
    fn suites_are_deterministic() {
        let a = product_cut_lower_suite(25, 7);
        let b = product_cut_lower_suite(25, 7);
        assert_eq!(a.violations, b.violations);
        assert_eq!(a.first_failure, b.first_failure);
    }
}
