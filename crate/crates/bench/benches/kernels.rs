use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};
use polylab_core::grassmann::{greedy_net, random_subspace};
use polylab_core::numerics::{eigh, singular_values};
use polylab_core::rng::SplitMix64;
use polylab_core::{sample_ensemble, EnsembleConfig, L1Solver};

fn lp_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("l1_solve");
    for &(n, big_n) in &[(20, 40), (64, 128)] {
        let e = sample_ensemble(&EnsembleConfig::new(n, big_n, 1)).unwrap();
        let solver = L1Solver::new(&e).unwrap();
        let mut rng = SplitMix64::new(2);
        let y = DVector::from_vec(rng.unit_vector(n));
        group.bench_with_input(BenchmarkId::from_parameter(format!("{n}x{big_n}")), &y, |b, y| {
            b.iter(|| solver.solve(black_box(y)).unwrap().value)
        });
    }
    group.finish();
}

fn jacobi(c: &mut Criterion) {
    let mut rng = SplitMix64::new(3);
    let m = DMatrix::from_fn(40, 40, |_, _| rng.gaussian());
    let s = &m * m.transpose();
    c.bench_function("svd_40", |b| b.iter(|| singular_values(black_box(&m))));
    c.bench_function("eigh_40", |b| b.iter(|| eigh(black_box(&s)).unwrap()));
}

fn net_lookup(c: &mut Criterion) {
    let net = greedy_net(6, 2, 0.5, 400, 4).unwrap();
    let mut rng = SplitMix64::new(5);
    let f = random_subspace(&mut rng, 6, 2);
    c.bench_function("net_nearest", |b| b.iter(|| net.nearest(black_box(&f))));
}

criterion_group!(benches, lp_solve, jacobi, net_lookup);
criterion_main!(benches);
