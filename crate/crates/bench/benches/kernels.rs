use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kvn_bench::{gaussian, logistic_interval, rotation_disk};
use kvn_core::propagators::{CayleyStepper, Stepper};
use kvn_core::{
    apply, assemble_kvn_generator, assemble_pf_generator, characteristics_oracle_kvn, Complex64, Point,
};
use std::hint::black_box;

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    for n in [64, 128] {
        let (field, _, grid) = rotation_disk(n);
        g.bench_with_input(BenchmarkId::new("pf_disk", n), &n, |b, _| {
            b.iter(|| assemble_pf_generator(black_box(&field), &grid))
        });
        g.bench_with_input(BenchmarkId::new("kvn_disk", n), &n, |b, _| {
            b.iter(|| assemble_kvn_generator(black_box(&field), &grid))
        });
    }
    g.finish();
}

fn stepping(c: &mut Criterion) {
    let mut g = c.benchmark_group("stepping");
    for n in [64, 128] {
        let (field, _, grid) = rotation_disk(n);
        let a = assemble_kvn_generator(&field, &grid);
        let psi = gaussian(&grid, &[0.3, 0.0], 0.1);
        g.bench_with_input(BenchmarkId::new("apply_disk", n), &n, |b, _| b.iter(|| apply(&a, black_box(&psi))));
        let mut stepper = CayleyStepper::new(&a, 1e-3, 1e-12, 1000).expect("skew operator");
        g.bench_with_input(BenchmarkId::new("cayley_disk", n), &n, |b, _| {
            b.iter(|| stepper.step(black_box(&psi)).expect("converges"))
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    let (field, domain, grid) = logistic_interval(256);
    let psi0 = |x: &Point| Complex64::new((-(x[0] - 0.5).powi(2) / 0.005).exp(), 0.0);
    g.bench_function("kvn_logistic_256", |b| {
        b.iter(|| characteristics_oracle_kvn(&field, &domain, &grid, psi0, black_box(0.5), 1e-3).expect("oracle"))
    });
    g.finish();
}

criterion_group!(benches, assembly, stepping, oracle);
criterion_main!(benches);
