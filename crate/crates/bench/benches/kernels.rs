use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use detmeasure::operators::{discretize, fredholm_det, gap_probability};
use detmeasure::sampler::{sample_many, SeededRng};
use detmeasure::specfun::{bessel_j, BesselOrder};
use detmeasure::KernelSpec;
use detmeasure_bench::{bessel_rule, cd_projection};

fn bessel(c: &mut Criterion) {
    let mut group = c.benchmark_group("bessel_j");
    for nu in [0.5, 2.5, 10.0] {
        let order = BesselOrder::new(nu).unwrap();
        let xs: Vec<f64> = (1..=100).map(|k| 0.05 * k as f64).collect();
        group.bench_with_input(BenchmarkId::from_parameter(nu), &xs, |b, xs| {
            b.iter(|| xs.iter().map(|&x| bessel_j(order, black_box(x)).unwrap()).sum::<f64>())
        });
    }
    group.finish();
}

fn discretization(c: &mut Criterion) {
    let mut group = c.benchmark_group("discretize_bessel");
    for npp in [8, 16, 32] {
        let q = bessel_rule(npp);
        group.bench_with_input(BenchmarkId::from_parameter(q.len()), &q, |b, q| {
            b.iter(|| discretize(&KernelSpec::BesselJ { s: 0.5 }, black_box(q)).unwrap())
        });
    }
    group.finish();
}

fn determinants(c: &mut Criterion) {
    let mut group = c.benchmark_group("determinant");
    for npp in [8, 16, 32] {
        let q = bessel_rule(npp);
        let op = discretize(&KernelSpec::BesselJ { s: 0.5 }, &q).unwrap();
        let window = q.mask_between(0.0, 2.0);
        group.bench_with_input(BenchmarkId::new("fredholm", q.len()), &op, |b, op| b.iter(|| fredholm_det(black_box(op))));
        group.bench_with_input(BenchmarkId::new("gap", q.len()), &op, |b, op| {
            b.iter(|| gap_probability(black_box(op), &window).unwrap())
        });
    }
    group.finish();
}

fn sampler(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_projection");
    for n in [5, 20] {
        let p = cd_projection(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &p, |b, p| {
            b.iter(|| sample_many(black_box(p), 100, SeededRng::new(1)))
        });
    }
    group.finish();
}

criterion_group!(benches, bessel, discretization, determinants, sampler);
criterion_main!(benches);
