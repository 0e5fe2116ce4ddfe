use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lqropt_bench::{fixture, midpoint_gain};
use lqropt_core::matlin::solve_dlyap_transpose;
use lqropt_core::{classify_gain, evaluate_gain, run, solve_dare_from_zero, Mat, Method, StopRule};

const SIZES: [usize; 3] = [4, 8, 16];

fn lyapunov(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_dlyap");
    for n in SIZES {
        let (p, star) = fixture(n, 2, 7);
        let k = midpoint_gain(&star);
        let (ak, w) = (p.closed_loop(&k), p.stage_weight(&k));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_dlyap_transpose(black_box(&ak), black_box(&w)).unwrap())
        });
    }
    group.finish();
}

fn evaluate(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate_gain");
    for n in SIZES {
        let (p, star) = fixture(n, 2, 7);
        let k = midpoint_gain(&star);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| evaluate_gain(black_box(&p), black_box(&k)).unwrap())
        });
    }
    group.finish();
}

fn riccati(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_dare");
    group.sample_size(20);
    for n in SIZES {
        let (p, _) = fixture(n, 2, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_dare_from_zero(black_box(&p), 1e-13, 200).unwrap())
        });
    }
    group.finish();
}

fn methods(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_n8");
    group.sample_size(10);
    let (p, star) = fixture(8, 2, 7);
    let k0 = classify_gain(&p, &Mat::zeros(2, 8)).unwrap();
    for (kind, max_iter) in [(Method::Qn, 50), (Method::Ngd, 500), (Method::Gd, 200)] {
        let stop = StopRule { grad_tol: 1e-10, max_iter };
        group.bench_function(kind.name(), |b| b.iter(|| run(&p, &k0, kind, &star, stop).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, lyapunov, evaluate, riccati, methods);
criterion_main!(benches);
