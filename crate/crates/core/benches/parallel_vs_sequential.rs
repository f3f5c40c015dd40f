//! Compares the rayon data-parallel path against the sequential fallback on
//! the two dominant workloads: interacting particle stepping and nested
//! Monte-Carlo dual evaluation. Outputs are bit-identical by construction;
//! only throughput differs.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mfsim_core::coeffs::families;
use mfsim_core::duality::feynman_kac_f;
use mfsim_core::exec;
use mfsim_core::measures::TestFunction;
use mfsim_core::mckv::LawTrajectory;
use mfsim_core::noise::{NoiseBundle, TimeGrid};
use mfsim_core::simulate::{run_particle_system, InitialLaw};

fn bench_particle_system(c: &mut Criterion) {
    let coeffs = families::mean_reversion(1, 1, 1.0, 0.5, 0.6, 1.0);
    let grid = TimeGrid::new(0.005, 200).unwrap();
    let noise = Arc::new(NoiseBundle::generate(grid, 4000, 1, 1, 42));
    let init = InitialLaw::Gaussian {
        mean: vec![0.0],
        std: vec![1.0],
    };
    let mut group = c.benchmark_group("particle_system");
    group.sample_size(10);
    for (label, parallel) in [("parallel", true), ("sequential", false)] {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            exec::set_parallel(parallel);
            b.iter(|| run_particle_system(&coeffs, &noise, &init, 1.0).unwrap());
            exec::set_parallel(true);
        });
    }
    group.finish();
}

fn bench_dual_evaluation(c: &mut Criterion) {
    let coeffs = families::mean_reversion(1, 1, 1.0, 0.5, 0.6, 1.0);
    let grid = TimeGrid::new(0.02, 50).unwrap();
    let noise = Arc::new(NoiseBundle::generate(grid, 256, 1, 1, 43));
    let init = InitialLaw::Gaussian {
        mean: vec![0.0],
        std: vec![1.0],
    };
    let ens = run_particle_system(&coeffs, &noise, &init, 1.0).unwrap();
    let laws = LawTrajectory::from_ensemble(&ens).unwrap();
    let phi = TestFunction::sine(1, 0);
    let mut group = c.benchmark_group("dual_evaluation");
    group.sample_size(10);
    for (label, parallel) in [("parallel", true), ("sequential", false)] {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            exec::set_parallel(parallel);
            b.iter(|| {
                feynman_kac_f(&coeffs, &laws, &noise, &[0.2], 0, 50, &phi, 4000, 7).unwrap()
            });
            exec::set_parallel(true);
        });
    }
    group.finish();
}

criterion_group!(benches, bench_particle_system, bench_dual_evaluation);
criterion_main!(benches);
