//! Sequential vs parallel throughput on the three hot paths: verifier
//! preparation (trees, DP, per-realization ledgers), the DP solve alone, and
//! a Monte Carlo cost sweep. One run reports both modes side by side.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sscover::optimal::optimal_value_with_mode;
use sscover::policy::expected_cost_mc_with_mode;
use sscover::{
    gen_instance, Budget, ExecMode, GeneratorConfig, GeneratorKind, GreedyPolicy, Instance,
    Selector, Verifier,
};

fn modes() -> Vec<(&'static str, ExecMode)> {
    let mut m = vec![("sequential", ExecMode::Sequential)];
    #[cfg(feature = "parallel")]
    m.push(("parallel", ExecMode::Parallel));
    m
}

fn fixture() -> Instance {
    gen_instance(&GeneratorConfig {
        kind: GeneratorKind::Coverage,
        n: 6,
        k: 3,
        m: 10,
        seed: 42,
        ..GeneratorConfig::default()
    })
    .expect("bench fixture generates")
}

fn bench_verifier_prepare(c: &mut Criterion) {
    let inst = fixture();
    let budget = Budget::default();
    let mut group = c.benchmark_group("verifier_prepare");
    for (label, mode) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(label), &mode, |b, &mode| {
            b.iter(|| {
                Verifier::with_mode(inst.clone(), Selector::Exact, &budget, mode)
                    .expect("fixture verifies")
            })
        });
    }
    group.finish();
}

fn bench_dp_solve(c: &mut Criterion) {
    let inst = fixture();
    let budget = Budget::default();
    let mut group = c.benchmark_group("dp_solve");
    for (label, mode) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(label), &mode, |b, &mode| {
            b.iter(|| optimal_value_with_mode(&inst, &budget, mode).expect("fixture solves"))
        });
    }
    group.finish();
}

fn bench_monte_carlo(c: &mut Criterion) {
    let inst = fixture();
    let policy = GreedyPolicy::exact();
    let mut group = c.benchmark_group("monte_carlo_20k");
    for (label, mode) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(label), &mode, |b, &mode| {
            b.iter(|| {
                expected_cost_mc_with_mode(&inst, &policy, 20_000, 7, mode)
                    .expect("fixture samples")
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_verifier_prepare,
    bench_dp_solve,
    bench_monte_carlo
);
criterion_main!(benches);
