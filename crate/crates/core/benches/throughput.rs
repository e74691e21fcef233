//! Benchmarks for the embarrassingly parallel kernels. Bench IDs carry the
//! compile mode, so running
//!
//! ```text
//! cargo bench -p consensus-core
//! cargo bench -p consensus-core --no-default-features
//! ```
//!
//! leaves side-by-side `parallel` / `sequential` entries in
//! `target/criterion` for comparison.

use consensus_core::balance::{aif_partial, balanced_asymmetry_m_min, cut_balance_k_min};
use consensus_core::parallel;
use consensus_core::schedule::{CutBalancedConfig, WeightSchedule};
use consensus_core::verify::product_cut_lower_suite;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn bench_cut_balance(c: &mut Criterion) {
    let schedule = WeightSchedule::cut_balanced(CutBalancedConfig::path(6, 3)).unwrap();
    c.bench_function(&format!("cut_balance_k_min/{}", parallel::mode()), |b| {
        b.iter(|| {
            let rep = cut_balance_k_min(black_box(&schedule), 3, (0, 400)).unwrap();
            black_box(rep.k_min)
        })
    });
}

fn bench_inequality_suite(c: &mut Criterion) {
    c.bench_function(&format!("product_cut_lower_suite/{}", parallel::mode()), |b| {
        b.iter(|| black_box(product_cut_lower_suite(black_box(300), 5)).violations)
    });
}

fn bench_flow_dp(c: &mut Criterion) {
    let schedule = WeightSchedule::three_agent_counterexample();
    c.bench_function(&format!("subset_flow_dp/{}", parallel::mode()), |b| {
        b.iter(|| {
            let rep = aif_partial(black_box(&schedule), (1, 240), 1).unwrap();
            black_box(rep.min_flow)
        })
    });
}

fn bench_asymmetry_scan(c: &mut Criterion) {
    let schedule = WeightSchedule::cut_balanced(CutBalancedConfig::path(8, 3)).unwrap();
    let matrix = schedule.matrix_at(5).unwrap();
    c.bench_function(&format!("balanced_asymmetry_m_min/{}", parallel::mode()), |b| {
        b.iter(|| {
            let rep = balanced_asymmetry_m_min(black_box(&matrix)).unwrap();
            black_box(rep.m_min)
        })
    });
}

criterion_group!(
    benches,
    bench_cut_balance,
    bench_inequality_suite,
    bench_flow_dp,
    bench_asymmetry_scan
);
criterion_main!(benches);
