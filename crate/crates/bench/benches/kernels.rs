use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use lbno::neuralop::{init_model, SpectralTransform};
use lbno::scenario;
use lbno::solver::init;
use lbno::{LatticeModel, Solver, SolverConfig};
use num_complex::Complex64;

fn solver_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("solver_step");
    for n in [64usize, 128] {
        let mut f = init::random_vortices(&[n, n], 1, 0.05, 4).unwrap();
        let mut solver = Solver::new(LatticeModel::D2Q9, &[n, n], SolverConfig::periodic(2, 0.6)).unwrap();
        group.throughput(Throughput::Elements((n * n) as u64));
        group.bench_with_input(BenchmarkId::new("periodic_bgk", n), &n, |b, _| {
            b.iter(|| solver.step_in_place(black_box(&mut f)).unwrap())
        });
    }
    let mut solver = Solver::new(LatticeModel::D2Q9, &[64, 64], scenario::vonkarman_desk()).unwrap();
    let mut f = solver.initial_state(1.0, &[0.05, 0.0]).unwrap();
    group.throughput(Throughput::Elements(64 * 64));
    group.bench_function("von_karman_les/64", |b| b.iter(|| solver.step_in_place(black_box(&mut f)).unwrap()));
    group.finish();
}

fn operator(c: &mut Criterion) {
    let mut group = c.benchmark_group("operator");
    group.sample_size(20);
    let f = init::random_vortices(&[64, 64], 2, 0.05, 4).unwrap();
    let model = init_model(&scenario::desk_operator(&[64, 64]), 0).unwrap();
    let t = model.transform_for(&[64, 64]).unwrap();
    group.bench_function("forward/64", |b| b.iter(|| model.forward_tape(black_box(&f), &t).unwrap()));
    let (out, tape) = model.forward_tape(&f, &t).unwrap();
    let mut grad = vec![0.0; model.params.len()];
    group.bench_function("backward/64", |b| {
        b.iter(|| model.backward(&tape, &t, black_box(out.data()), &mut grad))
    });
    group.finish();
}

fn spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral");
    let t = SpectralTransform::new(&[64, 64], 8).unwrap();
    let h: Vec<f64> = (0..t.cells()).map(|x| (x as f64 * 0.37).sin()).collect();
    let mut x = vec![Complex64::default(); t.len()];
    let mut y = vec![0.0; t.cells()];
    group.bench_function("analysis/64_m8", |b| b.iter(|| t.analysis(black_box(&h), &mut x)));
    group.bench_function("synthesis/64_m8", |b| b.iter(|| t.synthesis(black_box(&x), &mut y)));
    group.finish();
}

criterion_group!(benches, solver_step, operator, spectral);
criterion_main!(benches);
