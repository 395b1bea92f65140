use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dynsparse::rng::substream;
use dynsparse::{fit, run_gibbs, FitOptions, Hyperparams};
use dynsparse_bench::{dataset, SEED};
use std::hint::black_box;

fn vb(c: &mut Criterion) {
    let hyper = Hyperparams::default();
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    for p in [10, 50] {
        let data = dataset(200, p);
        for (label, prune) in [("pruned", true), ("full", false)] {
            let opts = FitOptions { prune, ..FitOptions::default() };
            g.bench_with_input(BenchmarkId::new(label, p), &p, |b, _| {
                b.iter(|| black_box(fit(&data, &hyper, &opts).unwrap().iterations))
            });
        }
    }
    let data = dataset(100, 3);
    let homo = FitOptions { heteroskedastic: false, prune: false, ..FitOptions::default() };
    g.bench_function("homoskedastic_p3", |b| b.iter(|| black_box(fit(&data, &hyper, &homo).unwrap().iterations)));
    g.finish();
}

fn gibbs(c: &mut Criterion) {
    let hyper = Hyperparams::default();
    let data = dataset(100, 3);
    let mut g = c.benchmark_group("gibbs");
    g.sample_size(10);
    g.bench_function("1000_sweeps_p3", |b| {
        b.iter(|| {
            let mut rng = substream(SEED, "mcmc", 0);
            black_box(run_gibbs(&data, &hyper, 1000, 0, &mut rng).unwrap().draws)
        })
    });
    g.finish();
}

criterion_group!(benches, vb, gibbs);
criterion_main!(benches);
