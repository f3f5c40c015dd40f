//! Duality-gap runs: forward conditional laws paired against the
//! Feynman--Kac evaluation of the dual backward solution.

use std::sync::Arc;

use mfsim_core::duality::{duality_gap, uniqueness_witness, PathForward};
use mfsim_core::exec;
use mfsim_core::measures::TestFunction;
use mfsim_core::mckv::LawTrajectory;
use mfsim_core::noise::NoiseBundle;
use mfsim_core::rng::{derive_seed, derive_seed2};
use mfsim_core::simulate::run_particle_system;

use crate::config::ExperimentConfig;
use crate::experiments::path_seed;
use crate::report::{cell, RunOutcome, Statistic, Table};

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<RunOutcome> {
    let grid = cfg.grid()?;
    let coeffs = cfg.model.build(cfg.mass);
    let (d, d1) = cfg.model.dims();
    let init = cfg.initial_law.build();
    let t_indices = cfg.time_indices()?;
    let phis = if cfg.test_functions.is_empty() {
        vec![TestFunction::sine(d, 0)]
    } else {
        super::bank_subset(d, &cfg.test_functions)?
    };

    let paths: Vec<PathForward> =
        exec::try_map_indexed(cfg.outer_paths, |p| -> mfsim_core::Result<PathForward> {
            let noise = Arc::new(NoiseBundle::generate(
                grid,
                cfg.n_particles,
                d,
                d1,
                path_seed(cfg, p),
            ));
            let ens = run_particle_system(&coeffs, &noise, &init, cfg.mass)?;
            Ok(PathForward {
                laws: LawTrajectory::from_ensemble(&ens)?,
                noise,
            })
        })?;

    // uniqueness witness: rerun every path with fresh idiosyncratic seeds
    // only (same common path, same initial states) and compare laws over
    // the full bank
    let second: Vec<LawTrajectory> =
        exec::try_map_indexed(cfg.outer_paths, |p| -> mfsim_core::Result<LawTrajectory> {
            let base = &paths[p].noise;
            let noise = Arc::new(NoiseBundle::with_seeds(
                grid,
                cfg.n_particles,
                d,
                d1,
                base.w_seed(),
                derive_seed2(cfg.seed, 0xb2, p as u64),
                base.init_seed(),
            ));
            let ens = run_particle_system(&coeffs, &noise, &init, cfg.mass)?;
            LawTrajectory::from_ensemble(&ens)
        })?;

    let mut out = RunOutcome::default();
    let mut table = Table::new(
        "gaps",
        &["phi", "t", "gap", "std_error", "inner_std_error", "forward", "dual"],
    );
    let mut per_path = Table::new("per_path_gaps", &["phi", "t", "path", "gap"]);
    let deterministic = cfg.model.is_deterministic();
    for phi in &phis {
        for &k in &t_indices {
            let rep = duality_gap(
                &paths,
                &coeffs,
                phi,
                k,
                cfg.inner_samples,
                derive_seed(cfg.seed, 0xd0a1),
            )?;
            let t = grid.t(k);
            table.push(vec![
                phi.name().to_string(),
                cell(t),
                cell(rep.gap),
                cell(rep.std_error),
                cell(rep.inner_std_error),
                cell(rep.forward_mean),
                cell(rep.dual_mean),
            ]);
            for (p, g) in rep.per_path_gaps.iter().enumerate() {
                per_path.push(vec![phi.name().to_string(), cell(t), cell(p), cell(*g)]);
            }
            out.statistics.push(Statistic::with_error(
                format!("duality_gap[{}]@{t}", phi.name()),
                rep.gap,
                rep.std_error,
            ));
            if deterministic {
                let ceiling = cfg.tolerances.deterministic_gap_dts * cfg.dt;
                out.check(
                    rep.gap.abs() <= ceiling,
                    format!(
                        "deterministic duality gap {:.3e} above {ceiling:.3e} for {} at t={t}",
                        rep.gap,
                        phi.name()
                    ),
                );
            } else {
                let s = cfg.tolerances.sigma_level;
                out.check(
                    rep.gap.abs() <= s * rep.std_error + 1e-12,
                    format!(
                        "duality gap {:.3e} exceeds {s} x se {:.3e} for {} at t={t}",
                        rep.gap,
                        rep.std_error,
                        phi.name()
                    ),
                );
            }
        }
    }
    out.tables.push(table);
    out.tables.push(per_path);

    let first: Vec<LawTrajectory> = paths.iter().map(|p| p.laws.clone()).collect();
    let bank = TestFunction::standard_bank(d);
    let witness = uniqueness_witness(&first, &second, &bank, &t_indices)?;
    let mut witness_table = Table::new(
        "witness",
        &["phi", "t", "mean_abs_gap", "gap_std", "pass"],
    );
    for c in &witness.cells {
        witness_table.push(vec![
            c.phi_name.clone(),
            cell(grid.t(c.t_index)),
            cell(c.mean_abs_gap),
            cell(c.gap_std),
            cell(c.pass as u8),
        ]);
        out.statistics.push(Statistic::with_error(
            format!("witness_abs_gap[{}]@{}", c.phi_name, grid.t(c.t_index)),
            c.mean_abs_gap,
            c.gap_std,
        ));
    }
    out.tables.push(witness_table);
    out.check(
        witness.all_pass,
        "uniqueness witness: some cells are not statistically zero".to_string(),
    );

    let forward_steps = 2 * cfg.outer_paths * cfg.n_particles * grid.steps();
    let t_max = *t_indices.iter().max().unwrap_or(&grid.steps());
    let dual_steps =
        cfg.outer_paths * cfg.n_particles * cfg.inner_samples * t_max * phis.len();
    out.particle_steps = (forward_steps + dual_steps) as u64;
    Ok(out)
}
