//! Conditional propagation-of-chaos gaps and the conditional-integral
//! martingale statistics.

use std::sync::Arc;

use anyhow::bail;
use mfsim_core::chaos::{
    conditional_chaos_gap, conditional_martingale_test, ChaosReference, MartingaleCase, YProcess,
};
use mfsim_core::exec;
use mfsim_core::measures::TestFunction;
use mfsim_core::noise::NoiseBundle;
use mfsim_core::rng::{derive_seed, derive_seed2};
use mfsim_core::simulate::{run_particle_system, ParticleEnsemble};

use crate::config::ExperimentConfig;
use crate::experiments::{closed_form_moments, gauss_expect, mean_se};
use crate::report::{cell, RunOutcome, Statistic, Table};

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<RunOutcome> {
    let sizes = if cfg.sample_sizes.is_empty() {
        vec![64, 256, 1024]
    } else {
        cfg.sample_sizes.clone()
    };
    if sizes.len() < 2 {
        bail!("chaos needs at least 2 sample_sizes");
    }
    let grid = cfg.grid()?;
    let coeffs = cfg.model.build(cfg.mass);
    let (d, d1) = cfg.model.dims();
    let init = cfg.initial_law.build();
    let t_index = *cfg.time_indices()?.last().unwrap();
    let phi1 = TestFunction::sine(d, 0);
    let phi2 = TestFunction::gaussian_bump(d);
    let mut out = RunOutcome::default();

    // factorization gap against the closed-form marginals, per N
    let mut gap_table = Table::new("factorization_gaps", &["n", "gap", "std_error"]);
    let mut gaps = Vec::new();
    for (q, &n) in sizes.iter().enumerate() {
        let seeds: Vec<u64> = (0..cfg.outer_paths)
            .map(|p| derive_seed2(cfg.seed, q as u64 + 1, p as u64))
            .collect();
        let ensembles: Vec<ParticleEnsemble> =
            exec::try_map_indexed(cfg.outer_paths, |p| -> mfsim_core::Result<ParticleEnsemble> {
                let noise = Arc::new(NoiseBundle::generate(grid, n, d, d1, seeds[p]));
                run_particle_system(&coeffs, &noise, &init, cfg.mass)
            })?;
        let w_terminals: Vec<f64> = ensembles
            .iter()
            .map(|e| e.noise().w_path()[t_index])
            .collect();
        let model = cfg.model.clone();
        let law_spec = cfg.initial_law.clone();
        let t = grid.t(t_index);
        let phi1_ref = TestFunction::sine(d, 0);
        let phi2_ref = TestFunction::gaussian_bump(d);
        let marginals = move |p: usize| -> (f64, f64) {
            let (m, v) = closed_form_moments(&model, &law_spec, w_terminals[p], t)
                .expect("closed-form model");
            (gauss_expect(&phi1_ref, m, v), gauss_expect(&phi2_ref, m, v))
        };
        let rep = conditional_chaos_gap(
            &ensembles,
            &phi1,
            &phi2,
            t_index,
            &ChaosReference::PerPath(&marginals),
        )?;
        gap_table.push(vec![cell(n), cell(rep.gap), cell(rep.std_error)]);
        out.statistics.push(Statistic::with_error(
            format!("factorization_gap@N={n}"),
            rep.gap,
            rep.std_error,
        ));
        gaps.push((rep.gap, rep.std_error));
        out.particle_steps += (cfg.outer_paths * n * grid.steps()) as u64;
    }
    out.tables.push(gap_table);
    for q in 1..gaps.len() {
        let (g0, s0) = gaps[q - 1];
        let (g1, s1) = gaps[q];
        out.check(
            g1 <= g0 + cfg.tolerances.sigma_level * (s0 + s1),
            format!(
                "factorization gap not decreasing: {g1:.3e} at N={} vs {g0:.3e} at N={}",
                sizes[q],
                sizes[q - 1]
            ),
        );
    }

    // idiosyncratic-case martingale level test over seeded repetitions
    let reps = if cfg.repetitions == 0 { 500 } else { cfg.repetitions };
    let y_one = YProcess::constant(1.0);
    let zs = exec::try_map_indexed(reps, |r| -> mfsim_core::Result<f64> {
        let rep = conditional_martingale_test(
            &y_one,
            MartingaleCase::IdiosyncraticB,
            grid,
            cfg.inner_samples.max(2),
            derive_seed2(cfg.seed, 0xb0, r as u64),
        )?;
        Ok(rep.z)
    })?;
    let mut z_table = Table::new("martingale_z", &["repetition", "z"]);
    for (r, z) in zs.iter().enumerate() {
        z_table.push(vec![cell(r), cell(*z)]);
    }
    out.tables.push(z_table);
    let s = cfg.tolerances.sigma_level;
    let violations = zs.iter().filter(|z| z.abs() > s).count();
    let fraction = violations as f64 / reps as f64;
    out.statistics
        .push(Statistic::exact("z_violation_fraction", fraction));
    let (z_mean, z_se) = mean_se(&zs);
    out.statistics
        .push(Statistic::with_error("z_mean", z_mean, z_se));
    out.check(
        fraction <= cfg.tolerances.z_violation_fraction,
        format!(
            "|z| > {s} in {violations}/{reps} repetitions ({:.2}%)",
            100.0 * fraction
        ),
    );

    // common-case discrepancy for a W-measurable integrand: exact
    let y_w = YProcess::of_common_path("sin(W)", 1.0, |_t, w| w.sin());
    let wrep = conditional_martingale_test(
        &y_w,
        MartingaleCase::CommonW,
        grid,
        cfg.inner_samples.max(2),
        derive_seed(cfg.seed, 0xcc),
    )?;
    out.statistics.push(Statistic::exact(
        "w_measurable_discrepancy",
        wrep.raw_discrepancy,
    ));
    out.check(
        wrep.raw_discrepancy.abs() <= cfg.tolerances.exact_discrepancy,
        format!(
            "W-measurable integrand discrepancy {:.3e} above {:.1e}",
            wrep.raw_discrepancy, cfg.tolerances.exact_discrepancy
        ),
    );

    Ok(out)
}
