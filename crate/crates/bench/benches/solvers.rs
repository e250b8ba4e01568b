use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use curtail_bench::{aggregator_bus, line, meshed};
use curtail_core::{market, singlebus, treedp, CurtailmentVector};

fn clearing(c: &mut Criterion) {
    let mut group = c.benchmark_group("clear_market");
    for n in [6, 12, 24] {
        let net = meshed(n, 7);
        let alpha = CurtailmentVector::zeros(net.n());
        group.bench_with_input(BenchmarkId::from_parameter(n), &net, |b, net| {
            b.iter(|| market::clear_market(net, &alpha).unwrap())
        });
    }
    group.finish();
}

fn staircase(c: &mut Criterion) {
    let mut group = c.benchmark_group("trace_staircase");
    group.sample_size(20);
    for n in [6, 12] {
        let net = meshed(n, 11);
        let bus = aggregator_bus(&net);
        group.bench_with_input(BenchmarkId::from_parameter(n), &net, |b, net| {
            b.iter(|| singlebus::trace_staircase(net, bus, None).unwrap())
        });
    }
    group.finish();
}

fn tree_dp(c: &mut Criterion) {
    let mut group = c.benchmark_group("dp_solve");
    group.sample_size(10);
    for n in [8, 16, 32] {
        let tree = treedp::to_binary_tree(&line(n)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &tree, |b, tree| {
            b.iter(|| treedp::dp_solve(tree, 0.5).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, clearing, staircase, tree_dp);
criterion_main!(benches);
