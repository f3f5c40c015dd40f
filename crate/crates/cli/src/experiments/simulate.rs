//! Plain particle-system runs with built-in conservation and translation
//! oracles.

use std::sync::Arc;

use mfsim_core::exec;
use mfsim_core::measures::TestFunction;
use mfsim_core::noise::NoiseBundle;
use mfsim_core::simulate::run_particle_system;

use crate::config::{ExperimentConfig, ModelSpec};
use crate::experiments::path_seed;
use crate::report::{cell, RunOutcome, Statistic, Table};

struct PathResult {
    mass_dev: f64,
    oracle_state: Option<f64>,
    oracle_phi: Option<f64>,
    rows: Vec<Vec<String>>,
    terminal_mean: f64,
    terminal_var: f64,
}

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<RunOutcome> {
    let grid = cfg.grid()?;
    let coeffs = cfg.model.build(cfg.mass);
    let (d, d1) = cfg.model.dims();
    let init = cfg.initial_law.build();
    let phi = TestFunction::sine(1, 0);
    // pathwise translation oracle applies to the pure common-noise shift
    let shift_sigma = match &cfg.model {
        ModelSpec::Shift { sigma0, d: 1, d1: 1 } => Some(*sigma0),
        _ => None,
    };

    let paths = exec::try_map_indexed(cfg.outer_paths, |p| -> mfsim_core::Result<PathResult> {
        let noise = Arc::new(NoiseBundle::generate(
            grid,
            cfg.n_particles,
            d,
            d1,
            path_seed(cfg, p),
        ));
        let ens = run_particle_system(&coeffs, &noise, &init, cfg.mass)?;
        let w = noise.w_path();
        let mut mass_dev = 0.0f64;
        let mut oracle_state: Option<f64> = shift_sigma.map(|_| 0.0);
        let mut oracle_phi: Option<f64> = shift_sigma.map(|_| 0.0);
        let mut rows = Vec::with_capacity(grid.steps() + 1);
        let law0 = ens.empirical_law(0)?;
        for k in 0..=grid.steps() {
            let law = ens.empirical_law(k)?;
            let total: f64 = law.weights().iter().sum();
            mass_dev = mass_dev.max((total - cfg.mass).abs());
            let mean = law.mean()[0];
            let var = law.variance()[0];
            let mut row = vec![
                cell(p),
                cell(grid.t(k)),
                cell(total - cfg.mass),
                cell(mean),
                cell(var),
            ];
            if let Some(s0) = shift_sigma {
                let shift = s0 * w[k];
                // state oracle: every particle is its start plus the shared shift
                let mut worst = 0.0f64;
                for i in 0..cfg.n_particles {
                    let expect = ens.position(0, i)[0] + shift;
                    worst = worst.max((ens.position(k, i)[0] - expect).abs());
                }
                let os = oracle_state.get_or_insert(0.0);
                *os = os.max(worst);
                // observable oracle: <L_t, phi> vs <mu_0, phi(. + shift)>
                let lhs = law.integrate(&phi)?;
                let rhs = law0.integrate_with(|x| (x[0] + shift).sin());
                let op = oracle_phi.get_or_insert(0.0);
                *op = op.max((lhs - rhs).abs());
                row.push(cell((lhs - rhs).abs()));
            }
            rows.push(row);
        }
        let terminal = ens.empirical_law(grid.steps())?;
        Ok(PathResult {
            mass_dev,
            oracle_state,
            oracle_phi,
            rows,
            terminal_mean: terminal.mean()[0],
            terminal_var: terminal.variance()[0],
        })
    })?;

    let mut out = RunOutcome::default();
    let mut columns = vec!["path", "t", "mass_deviation", "mean", "variance"];
    if shift_sigma.is_some() {
        columns.push("phi_oracle_residual");
    }
    let mut table = Table::new("trajectory", &columns);
    for p in &paths {
        for r in &p.rows {
            table.push(r.clone());
        }
    }
    out.tables.push(table);

    let mass_dev = paths.iter().map(|p| p.mass_dev).fold(0.0, f64::max);
    out.statistics
        .push(Statistic::exact("max_mass_deviation", mass_dev));
    out.check(
        mass_dev <= 1e-12 * cfg.mass.max(1.0),
        format!("mass conservation violated: {mass_dev:.3e}"),
    );
    if shift_sigma.is_some() {
        let worst_state = paths
            .iter()
            .filter_map(|p| p.oracle_state)
            .fold(0.0, f64::max);
        let worst_phi = paths
            .iter()
            .filter_map(|p| p.oracle_phi)
            .fold(0.0, f64::max);
        out.statistics
            .push(Statistic::exact("translation_oracle_state_sup", worst_state));
        out.statistics
            .push(Statistic::exact("translation_oracle_phi_sup", worst_phi));
        out.check(
            worst_state <= cfg.tolerances.translation_oracle,
            format!("state translation oracle residual {worst_state:.3e}"),
        );
    }
    let terminal_means: Vec<f64> = paths.iter().map(|p| p.terminal_mean).collect();
    let terminal_vars: Vec<f64> = paths.iter().map(|p| p.terminal_var).collect();
    let (m, m_se) = super::mean_se(&terminal_means);
    let (v, v_se) = super::mean_se(&terminal_vars);
    out.statistics
        .push(Statistic::with_error("terminal_mean", m, m_se));
    out.statistics
        .push(Statistic::with_error("terminal_variance", v, v_se));
    out.particle_steps = (cfg.outer_paths * cfg.n_particles * grid.steps()) as u64;
    Ok(out)
}
