use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ising_bench::critical_grid;
use ising_core::ising_enum::Oracle;
use ising_core::kacward;
use ising_core::pfaffian::pfaffian_of;
use std::hint::black_box;

fn enumeration(c: &mut Criterion) {
    let mut g = c.benchmark_group("enumeration");
    for n in [3, 4] {
        let (map, w) = critical_grid(n);
        g.bench_with_input(BenchmarkId::new("partition_function", n), &n, |b, _| {
            b.iter(|| Oracle::new(&map, &w).unwrap().partition_function())
        });
    }
    g.finish();
}

fn kac_ward(c: &mut Criterion) {
    let mut g = c.benchmark_group("kac_ward");
    for n in [4, 8, 12] {
        let (map, w) = critical_grid(n);
        g.bench_with_input(BenchmarkId::new("determinant_and_pfaffian", n), &n, |b, _| {
            b.iter(|| kacward::verify(&map, &w, None).unwrap())
        });
    }
    g.finish();
}

fn pfaffian(c: &mut Criterion) {
    let mut g = c.benchmark_group("pfaffian");
    for n in [16usize, 64, 128] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            let entry = |i: usize, j: usize| ((i * 31 + j * 17) % 13) as f64 - 6.0;
            b.iter(|| pfaffian_of(black_box(n), entry).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, enumeration, kac_ward, pfaffian);
criterion_main!(benches);
