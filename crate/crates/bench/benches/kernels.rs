use std::hint::black_box;

use coilforce::currents::current_from_potential;
use coilforce::force::{laplace_force, mean_field};
use coilforce::magnetics::biot_savart;
use coilforce::optimize::standard_cases;
use coilforce::{CurrentPotential, Problem};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn potential(order: usize) -> CurrentPotential {
    let mut pot = CurrentPotential::zeros(order, 1.2e7, 0.0);
    let c: Vec<f64> = (0..pot.dof()).map(|i| 3e5 * (i as f64 * 0.61).cos() / (1.0 + i as f64)).collect();
    pot.set_coefficients(&c);
    pot
}

fn force_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("laplace_force");
    group.sample_size(10);
    for n in [16, 32, 48] {
        let grid = Problem::bundled().with_winding_grid(n, n).winding_grid().unwrap();
        let j = current_from_potential(&grid, &potential(4)).unwrap();
        group.bench_with_input(BenchmarkId::new("force", n), &n, |b, _| b.iter(|| laplace_force(&grid, &j, &j).unwrap()));
        group.bench_with_input(BenchmarkId::new("mean_field", n), &n, |b, _| b.iter(|| mean_field(&grid, black_box(&j))));
    }
    group.finish();
}

fn field_kernels(c: &mut Criterion) {
    let problem = Problem::bundled();
    let grid = problem.winding_grid().unwrap();
    let j = current_from_potential(&grid, &potential(4)).unwrap();
    let targets = problem.boundary().unwrap().grid.points.clone();
    let mut group = c.benchmark_group("biot_savart");
    group.sample_size(10);
    group.bench_function("winding_to_plasma_32", |b| b.iter(|| biot_savart(&grid, &j, black_box(&targets)).unwrap()));
    group.finish();
}

fn objective_kernels(c: &mut Criterion) {
    let base = Problem::bundled().objective(Default::default()).unwrap();
    let x = potential(4).coefficients();
    let mut group = c.benchmark_group("cost_and_gradient");
    group.sample_size(10);
    for case in standard_cases() {
        let obj = base.with_spec(case.spec).unwrap();
        group.bench_function(case.name.as_str(), |b| b.iter(|| obj.cost_and_gradient(black_box(&x)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, force_kernels, field_kernels, objective_kernels);
criterion_main!(benches);
