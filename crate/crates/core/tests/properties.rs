//! Randomized structural invariants.

use consensus_core::dynamics::sort_permutation;
use consensus_core::matrix::{cut_sum, product_chain, NodeSubset, StochasticMatrix};
use consensus_core::schedule::{CutBalancedConfig, WeightSchedule};
use proptest::prelude::*;

fn stochastic_matrix(n: usize) -> impl Strategy<Value = StochasticMatrix> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n).prop_map(|rows| {
        let rows = rows
            .into_iter()
            .map(|row| {
                let sum: f64 = row.iter().sum();
                row.into_iter().map(|v| v / sum).collect()
            })
            .collect();
        StochasticMatrix::from_rows(rows).expect("normalized")
    })
}

fn matrix_chain() -> impl Strategy<Value = Vec<StochasticMatrix>> {
    (2usize..6).prop_flat_map(|n| prop::collection::vec(stochastic_matrix(n), 1..6))
}

proptest! {
    #[test]
    fn products_stay_row_stochastic(matrices in matrix_chain()) {
        let product = product_chain(&matrices).unwrap();
        prop_assert!(product.row_sum_deviation() <= matrices.len() as f64 * 1e-12);
    }

    #[test]
    fn cut_sum_additive_over_sum(
        a in stochastic_matrix(4),
        b in stochastic_matrix(4),
        into_bits in 1u32..15,
        from_bits in 1u32..15,
    ) {
        let into = NodeSubset::from_bits(4, into_bits).unwrap();
        let from = NodeSubset::from_bits(4, from_bits).unwrap();
        let separate = cut_sum(&a, &into, &from).unwrap() + cut_sum(&b, &into, &from).unwrap();
        let mut joint = 0.0;
        for i in into.members() {
            for j in from.members() {
                joint += a.get(i, j) + b.get(i, j);
            }
        }
        prop_assert!((separate - joint).abs() <= 1e-12);
    }

    #[test]
    fn rank_permutation_is_stable_sorted_permutation(
        x in prop::collection::vec(-10.0f64..10.0, 1..12),
    ) {
        let rank = sort_permutation(&x);
        let mut seen = vec![false; x.len()];
        for &i in &rank {
            prop_assert!(!seen[i]);
            seen[i] = true;
        }
        for w in rank.windows(2) {
            let (a, b) = (w[0], w[1]);
            prop_assert!(x[a] < x[b] || (x[a] == x[b] && a < b));
        }
    }

    #[test]
    fn generator_matrices_are_deterministic_and_lift_composes(
        seed in any::<u64>(),
        t in 0u64..30,
    ) {
        let s = WeightSchedule::cut_balanced(CutBalancedConfig::path(3, seed)).unwrap();
        prop_assert_eq!(s.matrix_at(t).unwrap(), s.matrix_at(t).unwrap());
        let once = s.lift(4).unwrap().matrix_at(t).unwrap();
        let twice = s.lift(2).unwrap().lift(2).unwrap().matrix_at(t).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((once.get(i, j) - twice.get(i, j)).abs() <= 1e-13);
            }
        }
    }
}
