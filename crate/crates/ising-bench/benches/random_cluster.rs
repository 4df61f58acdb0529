use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ising_bench::crossing_quad;
use ising_core::fk::{self, FkChain, FkGraph};

fn chain(c: &mut Criterion) {
    let mut g = c.benchmark_group("fk_chain_step");
    for k in [8, 16] {
        let (map, w) = crossing_quad(k);
        let fg = FkGraph::new(&map, &w).unwrap();
        let mut ch = FkChain::new(&fg, 1);
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| b.iter(|| ch.step()));
    }
    g.finish();
}

fn exact_crossing(c: &mut Criterion) {
    let (map, w) = crossing_quad(3);
    let fg = FkGraph::new(&map, &w).unwrap();
    c.bench_function("crossing_exact_k3", |b| b.iter(|| fk::crossing_exact(&fg).unwrap()));
}

criterion_group!(benches, chain, exact_crossing);
criterion_main!(benches);
