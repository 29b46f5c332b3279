use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use noon_core::analytics::{exact_naive_p, exact_p_tn, leak_spectrum};
use noon_core::catfactory::{apply_tn, make_cat, CatSpec};
use noon_core::protocol::{run_protocol, ProtocolConfig};

fn doubling_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply_tn");
    for n in [2u32, 8, 16, 32] {
        let cat = make_cat(CatSpec::new(n).unwrap());
        group.bench_with_input(BenchmarkId::from_parameter(n), &cat, |b, cat| {
            b.iter(|| apply_tn(black_box(cat), black_box(cat), n).unwrap())
        });
    }
    group.finish();
}

fn closed_forms(c: &mut Criterion) {
    c.bench_function("exact_p_tn(256)", |b| b.iter(|| exact_p_tn(black_box(256)).unwrap()));
    c.bench_function("exact_naive_p(256)", |b| b.iter(|| exact_naive_p(black_box(256)).unwrap()));
    c.bench_function("leak_spectrum(64)", |b| b.iter(|| leak_spectrum(black_box(64)).unwrap()));
}

fn pooled_protocol(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_protocol");
    for target in [4u64, 16] {
        let cfg = ProtocolConfig::new(target, 10, 0.9, 7);
        group.bench_with_input(BenchmarkId::from_parameter(target), &cfg, |b, cfg| {
            b.iter(|| run_protocol(black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, doubling_step, closed_forms, pooled_protocol);
criterion_main!(benches);
