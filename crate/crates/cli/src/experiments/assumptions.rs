//! Randomized coefficient-assumption audits.

use crate::config::ExperimentConfig;
use crate::report::{cell, RunOutcome, Statistic, Table};

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<RunOutcome> {
    let coeffs = cfg.model.build(cfg.mass);
    let probes = if cfg.probes == 0 { 128 } else { cfg.probes };
    let rep = coeffs.check_assumptions(probes, cfg.seed);

    let mut out = RunOutcome::default();
    out.statistics.extend([
        Statistic::exact("probes", rep.probes as f64),
        Statistic::exact("max_a_norm", rep.max_a_norm),
        Statistic::exact("max_b_norm", rep.max_b_norm),
        Statistic::exact("max_sigma_norm", rep.max_sigma_norm),
        Statistic::exact("max_symmetry_defect", rep.max_symmetry_defect),
        Statistic::exact("min_parabolic_eigenvalue", rep.min_parabolic_eigenvalue),
        Statistic::exact("max_lipschitz_quotient_x", rep.max_lipschitz_quotient_x),
        Statistic::exact("max_lipschitz_quotient_mu", rep.max_lipschitz_quotient_mu),
    ]);
    let mut table = Table::new(
        "audit",
        &[
            "probes",
            "max_a_norm",
            "max_b_norm",
            "max_sigma_norm",
            "max_symmetry_defect",
            "min_parabolic_eigenvalue",
            "max_lipschitz_quotient_x",
            "max_lipschitz_quotient_mu",
            "violations",
        ],
    );
    table.push(vec![
        cell(rep.probes),
        cell(rep.max_a_norm),
        cell(rep.max_b_norm),
        cell(rep.max_sigma_norm),
        cell(rep.max_symmetry_defect),
        cell(rep.min_parabolic_eigenvalue),
        cell(rep.max_lipschitz_quotient_x),
        cell(rep.max_lipschitz_quotient_mu),
        cell(rep.violations.len()),
    ]);
    out.tables.push(table);
    for v in rep.violations {
        out.failures.push(v);
    }
    out.particle_steps = probes as u64;
    Ok(out)
}
