use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use garch_tail::spectral::{rho_estimate, step, RhoMethod, SpectralConfig};
use garch_tail::stationarity::{gamma_naive, gamma_stable};
use garch_tail::tailchain::batch_chains;
use garch_tail::{simulate, ChainConfig, Domain, SeedStream, StableConfig};
use garch_tail_bench::{ensemble, garch11, garch22};

fn recursion(c: &mut Criterion) {
    let spec = garch22();
    let y = spec.initial_state();
    let mut out = vec![0.0; spec.dim()];
    c.bench_function("apply/garch22", |b| {
        b.iter(|| spec.apply(black_box(1.3), black_box(&y), &mut out))
    });
    let seeds = SeedStream::new(3);
    c.bench_function("simulate/garch22/1e5", |b| {
        b.iter(|| simulate(&spec, 100_000, 1_000, seeds.rng(Domain::Simulate, 0)).unwrap())
    });
}

fn lyapunov(c: &mut Criterion) {
    let spec = garch22();
    let seeds = SeedStream::new(3);
    let cfg = StableConfig {
        t: 10_000,
        replicates: 1,
        ..StableConfig::default()
    };
    c.bench_function("gamma_stable/garch22/1e4", |b| {
        b.iter(|| gamma_stable(&spec, &cfg, &seeds).unwrap())
    });
    c.bench_function("gamma_naive/garch22/1e4", |b| {
        b.iter(|| gamma_naive(&spec, 10_000, 1, &seeds))
    });
}

fn particles(c: &mut Criterion) {
    let spec = garch22();
    let ens = ensemble(&spec, 500_000);
    let seeds = SeedStream::new(3);
    let cfg = SpectralConfig::default();
    c.bench_function("spectral_step/garch22", |b| {
        b.iter(|| step(&ens, &spec, 1.27, &cfg, &seeds, 1).unwrap())
    });
    c.bench_function("rho_estimate/garch22", |b| {
        b.iter(|| rho_estimate(&ens, &spec, 1.27, RhoMethod::TwoStep, &seeds))
    });
}

fn chains(c: &mut Criterion) {
    let spec = garch11();
    let ens = ensemble(&spec, 500_000);
    let seeds = SeedStream::new(3);
    let cfg = ChainConfig {
        t_max: 200,
        ..ChainConfig::default()
    };
    let mut group = c.benchmark_group("tail_chains");
    group.sample_size(10);
    group.bench_function("garch11/1000", |b| {
        b.iter(|| batch_chains(&spec, 1.0, &ens, &cfg, 1_000, 0, &seeds).unwrap())
    });
    group.finish();
}

criterion_group!(benches, recursion, lyapunov, particles, chains);
criterion_main!(benches);
