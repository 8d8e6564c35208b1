use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use nlmagic::circuits::StateId;
use nlmagic::erasure::{degree_grid, optimize_erasure, sweep_landscape, OptConfig};
use nlmagic::magic::sre_exact;
use nlmagic::mitigation::{mitigate_least_squares, DEFAULT_TOL};
use nlmagic::rcm::{estimate_rdm_purity, estimate_sre};
use nlmagic_bench::{dataset, noisy_state, readout};

fn exact(c: &mut Criterion) {
    let rho = noisy_state(&StateId::M, 0.96);
    c.bench_function("sre_exact/2q", |b| b.iter(|| sre_exact(black_box(&rho))));
}

fn rcm(c: &mut Criterion) {
    let rho = noisy_state(&StateId::M, 0.96);
    let mut g = c.benchmark_group("rcm");
    for n_rand in [100usize, 400] {
        let ds = dataset(&rho, n_rand, 5000, 7);
        g.bench_with_input(BenchmarkId::new("collect", n_rand), &n_rand, |b, &n| {
            b.iter(|| dataset(black_box(&rho), n, 5000, 7))
        });
        g.bench_with_input(BenchmarkId::new("estimate_sre", n_rand), &ds, |b, ds| {
            b.iter(|| estimate_sre(black_box(ds)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("estimate_rdm_purity", n_rand), &ds, |b, ds| {
            b.iter(|| estimate_rdm_purity(black_box(ds), &[0]).unwrap())
        });
    }
    g.finish();
}

fn mitigation(c: &mut Criterion) {
    let rho = noisy_state(&StateId::M, 0.96);
    let ds = dataset(&rho, 1, 5000, 3);
    let lam = readout(2, 0.04);
    c.bench_function("mitigate/2q", |b| {
        b.iter(|| mitigate_least_squares(black_box(&ds.prob_vectors[0]), &lam, DEFAULT_TOL).unwrap())
    });
}

fn erasure(c: &mut Criterion) {
    let rho = noisy_state(&StateId::M, 1.0);
    let grid = degree_grid(7.5);
    let mut g = c.benchmark_group("erasure");
    g.sample_size(10);
    g.bench_function("sweep_7.5deg", |b| b.iter(|| sweep_landscape(black_box(&rho), &grid, &grid).unwrap()));
    g.bench_function("optimize", |b| {
        b.iter(|| optimize_erasure(black_box(&rho), &OptConfig::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, exact, rcm, mitigation, erasure);
criterion_main!(benches);
