//! Empirical-law convergence rate in the particle count.

use anyhow::bail;
use mfsim_core::chaos::{convergence_rate, RateExperiment, RateReference};
use mfsim_core::noise::NoiseBundle;

use crate::config::ExperimentConfig;
use crate::experiments::{closed_form_moments, gauss_expect, single_phi};
use crate::report::{cell, RunOutcome, Statistic, Table};

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<RunOutcome> {
    if cfg.sample_sizes.len() < 3 {
        bail!("rate needs at least 3 sample_sizes");
    }
    let grid = cfg.grid()?;
    let coeffs = cfg.model.build(cfg.mass);
    let init = cfg.initial_law.build();
    let phi = single_phi(coeffs.dim_x(), &cfg.test_functions)?;
    let t_index = *cfg.time_indices()?.last().unwrap();
    let model = cfg.model.clone();
    let law_spec = cfg.initial_law.clone();
    let mass = cfg.mass;
    // limit law reference: Gaussian conditional moments in closed form
    closed_form_moments(&model, &law_spec, 0.0, 0.0)?;
    let phi_ref = single_phi(coeffs.dim_x(), &cfg.test_functions)?;
    let closed = move |nb: &NoiseBundle, k: usize| -> f64 {
        let w = nb.w_path();
        let (m, v) =
            closed_form_moments(&model, &law_spec, w[k], nb.grid().t(k)).expect("checked above");
        mass * gauss_expect(&phi_ref, m, v)
    };
    let exp = RateExperiment {
        coeffs: &coeffs,
        initial_law: &init,
        mass: cfg.mass,
        grid,
        phi: &phi,
        t_index,
    };
    let fit = convergence_rate(
        &exp,
        &cfg.sample_sizes,
        cfg.outer_paths,
        &RateReference::ClosedForm(&closed),
        cfg.seed,
    )?;

    let mut out = RunOutcome::default();
    let mut table = Table::new("errors", &["n", "error"]);
    for (n, e) in fit.sample_sizes.iter().zip(&fit.errors) {
        table.push(vec![cell(*n), cell(*e)]);
    }
    out.tables.push(table);
    let mut fit_table = Table::new("fit", &["slope", "intercept", "slope_std_error"]);
    fit_table.push(vec![cell(fit.slope), cell(fit.intercept), cell(fit.slope_std_error)]);
    out.tables.push(fit_table);

    out.statistics.push(Statistic::with_error(
        "log_log_slope",
        fit.slope,
        fit.slope_std_error,
    ));
    let [lo, hi] = cfg.tolerances.slope_band;
    out.check(
        fit.slope >= lo && fit.slope <= hi,
        format!("slope {:.3} outside [{lo}, {hi}]", fit.slope),
    );

    let total_n: usize = cfg.sample_sizes.iter().sum();
    out.particle_steps = (cfg.outer_paths * total_n * grid.steps()) as u64;
    Ok(out)
}
