use bpa_bench::cost;
use bpa_core::{exact_plan, ExactMethod};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_plan");
    for n in [5, 7, 9] {
        let d = cost(n, 8);
        group.bench_with_input(BenchmarkId::new("enumeration", n), &d, |b, d| {
            b.iter(|| exact_plan(d, ExactMethod::DerangementEnum).unwrap())
        });
    }
    for n in [9, 50, 200] {
        let d = cost(n, 8);
        group.bench_with_input(BenchmarkId::new("min_cost_flow", n), &d, |b, d| {
            b.iter(|| exact_plan(d, ExactMethod::MinCostFlow).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_exact);
criterion_main!(benches);
