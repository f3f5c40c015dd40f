//! End-to-end determinism: the same seeds must produce bit-identical
//! results for any rayon pool size and for the sequential path.

use std::sync::Arc;

use mfsim_core::coeffs::families;
use mfsim_core::duality::{duality_gap, PathForward};
use mfsim_core::measures::TestFunction;
use mfsim_core::mckv::{picard_solve, LawTrajectory, PicardOptions};
use mfsim_core::noise::{NoiseBundle, TimeGrid};
use mfsim_core::simulate::{run_particle_system, InitialLaw};

fn full_pipeline() -> (Vec<f64>, Vec<f64>, f64) {
    let coeffs = families::mean_reversion(1, 1, 1.0, 0.5, 0.6, 1.0);
    let grid = TimeGrid::new(0.02, 50).unwrap();
    let noise = Arc::new(NoiseBundle::generate(grid, 300, 1, 1, 0xfeed));
    let init = InitialLaw::Gaussian {
        mean: vec![0.1],
        std: vec![0.9],
    };
    let (law, diag) = picard_solve(
        &coeffs,
        &noise,
        &init,
        1.0,
        &PicardOptions {
            tol: 1e-4,
            max_iter: 8,
            metric_resolution: 128,
        },
    )
    .unwrap();
    let ens = run_particle_system(&coeffs, &noise, &init, 1.0).unwrap();
    let paths = vec![PathForward {
        laws: LawTrajectory::from_ensemble(&ens).unwrap(),
        noise: Arc::clone(&noise),
    }];
    let phi = TestFunction::sine(1, 0);
    let gap = duality_gap(&paths, &coeffs, &phi, 50, 16, 0xabc).unwrap();
    let terminal: Vec<f64> = law.at(50).points().to_vec();
    (terminal, diag.metrics.clone(), gap.gap)
}

#[test]
fn bit_identical_across_pool_sizes_and_modes() {
    let baseline = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(full_pipeline);
    let wide = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(full_pipeline);
    assert_eq!(baseline.0, wide.0);
    assert_eq!(baseline.1, wide.1);
    assert_eq!(baseline.2, wide.2);

    mfsim_core::exec::set_parallel(false);
    let sequential = full_pipeline();
    mfsim_core::exec::set_parallel(true);
    assert_eq!(baseline.0, sequential.0);
    assert_eq!(baseline.1, sequential.1);
    assert_eq!(baseline.2, sequential.2);
}
