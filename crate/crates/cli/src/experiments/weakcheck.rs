//! Weak-formulation residuals under step-size refinement.
//!
//! All refinement levels of one path share a single Brownian realization
//! (the fine bundle is aggregated to the coarser grids), and residual
//! suprema are compared on the common coarse time set so that levels see
//! the same times.

use std::sync::Arc;

use anyhow::bail;
use mfsim_core::exec;
use mfsim_core::fpe::weak_residual;
use mfsim_core::measures::TestFunction;
use mfsim_core::mckv::LawTrajectory;
use mfsim_core::noise::{NoiseBundle, TimeGrid};
use mfsim_core::simulate::run_particle_system;

use crate::config::ExperimentConfig;
use crate::experiments::{bank_subset, mean_se, path_seed};
use crate::report::{cell, RunOutcome, Statistic, Table};

fn resolve_levels(cfg: &ExperimentConfig) -> anyhow::Result<Vec<f64>> {
    if cfg.dt_levels.is_empty() {
        bail!("weakcheck needs dt_levels (coarse to fine)");
    }
    let mut levels = cfg.dt_levels.clone();
    levels.sort_by(|a, b| b.total_cmp(a));
    for w in levels.windows(2) {
        let ratio = w[0] / w[1];
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 2.0 {
            bail!("dt levels must refine by integer factors, got {levels:?}");
        }
    }
    Ok(levels)
}

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<RunOutcome> {
    let levels = resolve_levels(cfg)?;
    let coeffs = cfg.model.build(cfg.mass);
    let (d, d1) = cfg.model.dims();
    let init = cfg.initial_law.build();
    let phis = if cfg.test_functions.is_empty() {
        vec![TestFunction::sine(d, 0)]
    } else {
        bank_subset(d, &cfg.test_functions)?
    };
    let fine_dt = *levels.last().unwrap();
    let fine_grid = TimeGrid::from_horizon(cfg.t_end, fine_dt)?;
    let coarse_steps = (cfg.t_end / levels[0]).round() as usize;

    // per path, per level, per phi: sup over the common coarse times;
    // plus the exact mass residual of phi == 1 at the finest level
    let results = exec::try_map_indexed(cfg.outer_paths, |p| -> mfsim_core::Result<(Vec<Vec<f64>>, f64)> {
        let fine = NoiseBundle::generate(fine_grid, cfg.n_particles, d, d1, path_seed(cfg, p));
        let mut sups = vec![vec![0.0; phis.len()]; levels.len()];
        let mut const_sup = 0.0f64;
        let one = TestFunction::constant(d, 1.0);
        for (li, &dt) in levels.iter().enumerate() {
            let factor = (dt / fine_dt).round() as usize;
            let nb = Arc::new(fine.coarsen(factor)?);
            let ens = run_particle_system(&coeffs, &nb, &init, cfg.mass)?;
            let law = LawTrajectory::from_ensemble(&ens)?;
            let steps = nb.grid().steps();
            let stride = steps / coarse_steps;
            let common: Vec<usize> = (0..=coarse_steps).map(|k| k * stride).collect();
            for (fi, phi) in phis.iter().enumerate() {
                let r = weak_residual(&law, &coeffs, phi, &nb)?;
                sups[li][fi] = r.sup_over(&common);
            }
            let rc = weak_residual(&law, &coeffs, &one, &nb)?;
            const_sup = const_sup.max(rc.sup);
        }
        Ok((sups, const_sup))
    })?;

    let mut out = RunOutcome::default();
    let mut table = Table::new("residuals", &["phi", "dt", "mean_sup", "std_error"]);
    let mut ratio_table = Table::new("ratios", &["phi", "dt_coarse", "dt_fine", "ratio"]);
    for (fi, phi) in phis.iter().enumerate() {
        let mut means = Vec::with_capacity(levels.len());
        for (li, &dt) in levels.iter().enumerate() {
            let vals: Vec<f64> = results.iter().map(|(s, _)| s[li][fi]).collect();
            let (m, se) = mean_se(&vals);
            means.push(m);
            table.push(vec![
                phi.name().to_string(),
                cell(dt),
                cell(m),
                cell(se),
            ]);
            out.statistics.push(Statistic::with_error(
                format!("sup_residual[{}]@dt={dt}", phi.name()),
                m,
                se,
            ));
        }
        for li in 1..levels.len() {
            let ratio = means[li - 1] / means[li];
            ratio_table.push(vec![
                phi.name().to_string(),
                cell(levels[li - 1]),
                cell(levels[li]),
                cell(ratio),
            ]);
            out.statistics.push(Statistic::exact(
                format!("refinement_ratio[{}]@{}->{}", phi.name(), levels[li - 1], levels[li]),
                ratio,
            ));
            out.check(
                ratio > 1.0,
                format!(
                    "residual not decreasing for {} at {} -> {}: ratio {ratio:.3}",
                    phi.name(),
                    levels[li - 1],
                    levels[li]
                ),
            );
        }
        // the decay rate over the whole sweep: per-halving geometric mean
        let halvings = ((levels[0] / levels[levels.len() - 1]).log2()).round();
        let sweep_ratio = (means[0] / means[levels.len() - 1]).powf(1.0 / halvings);
        out.statistics.push(Statistic::exact(
            format!("per_halving_ratio[{}]", phi.name()),
            sweep_ratio,
        ));
        let [lo, hi] = cfg.tolerances.refinement_ratio_band;
        out.check(
            sweep_ratio >= lo && sweep_ratio <= hi,
            format!(
                "per-halving decay {sweep_ratio:.3} for {} outside [{lo}, {hi}]",
                phi.name()
            ),
        );
    }
    out.tables.push(table);
    out.tables.push(ratio_table);

    let const_sup = results.iter().map(|(_, c)| *c).fold(0.0, f64::max);
    out.statistics
        .push(Statistic::exact("constant_phi_residual_sup", const_sup));
    out.check(
        const_sup == 0.0,
        format!("mass residual for phi == 1 must vanish exactly, got {const_sup:.3e}"),
    );

    let per_path_steps: usize = levels
        .iter()
        .map(|&dt| (cfg.t_end / dt).round() as usize)
        .sum();
    out.particle_steps = (cfg.outer_paths * cfg.n_particles * per_path_steps) as u64;
    Ok(out)
}
