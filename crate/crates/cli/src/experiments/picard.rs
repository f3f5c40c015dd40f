//! Picard fixed-point runs: contraction diagnostics plus conditional-moment
//! oracles against the closed-form mean/variance dynamics.

use std::sync::Arc;

use anyhow::bail;
use mfsim_core::exec;
use mfsim_core::mckv::{picard_solve, PicardOptions};
use mfsim_core::noise::NoiseBundle;

use crate::config::{ExperimentConfig, ModelSpec};
use crate::experiments::path_seed;
use crate::report::{cell, RunOutcome, Statistic, Table};

struct PathResult {
    metrics: Vec<f64>,
    converged: bool,
    iterations: usize,
    /// (time index, mean deviation, variance deviation)
    moment_devs: Vec<(usize, f64, f64)>,
}

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<RunOutcome> {
    let grid = cfg.grid()?;
    let coeffs = cfg.model.build(cfg.mass);
    let (d, d1) = cfg.model.dims();
    if d != 1 {
        bail!("picard moment oracles are scalar; got d={d}");
    }
    let init = cfg.initial_law.build();
    let t_indices = cfg.time_indices()?;
    let opts = PicardOptions {
        tol: cfg.tolerances.picard_tol,
        max_iter: cfg.tolerances.picard_max_iter,
        metric_resolution: cfg.tolerances.metric_resolution,
    };
    let ou = matches!(
        cfg.model,
        ModelSpec::MeanReversionToConditionalMean { .. } | ModelSpec::Shift { .. }
    );

    let paths = exec::try_map_indexed(cfg.outer_paths, |p| -> mfsim_core::Result<PathResult> {
        let noise = Arc::new(NoiseBundle::generate(
            grid,
            cfg.n_particles,
            d,
            d1,
            path_seed(cfg, p),
        ));
        let (law, diag) = picard_solve(&coeffs, &noise, &init, cfg.mass, &opts)?;
        let w = noise.w_path();
        let mut moment_devs = Vec::new();
        if ou {
            // anchor the closed forms at the sampled cloud's own moments:
            // dm = sigma0 dW and dv = (-2 beta v + alpha0^2) dt
            let m0 = law.at(0).mean()[0];
            let v0 = law.at(0).variance()[0];
            let (sigma0, beta, alpha0) = match &cfg.model {
                ModelSpec::Shift { sigma0, .. } => (*sigma0, 0.0, 0.0),
                ModelSpec::MeanReversionToConditionalMean {
                    beta,
                    sigma0,
                    alpha0,
                } => (*sigma0, *beta, *alpha0),
                _ => unreachable!(),
            };
            for &k in &t_indices {
                let t = grid.t(k);
                let m_closed = m0 + sigma0 * w[k];
                let v_closed = if beta > 0.0 {
                    let vinf = alpha0 * alpha0 / (2.0 * beta);
                    vinf + (v0 - vinf) * (-2.0 * beta * t).exp()
                } else {
                    v0
                };
                let m_hat = law.at(k).mean()[0];
                let v_hat = law.at(k).variance()[0];
                moment_devs.push((k, m_hat - m_closed, v_hat - v_closed));
            }
        }
        Ok(PathResult {
            metrics: diag.metrics,
            converged: diag.converged,
            iterations: diag.iterations,
            moment_devs,
        })
    })?;

    let mut out = RunOutcome::default();
    let mut metric_table = Table::new("metrics", &["path", "iteration", "metric"]);
    for (p, r) in paths.iter().enumerate() {
        for (j, m) in r.metrics.iter().enumerate() {
            metric_table.push(vec![cell(p), cell(j + 1), cell(*m)]);
        }
    }
    out.tables.push(metric_table);

    let all_converged = paths.iter().all(|r| r.converged);
    let max_iter = paths.iter().map(|r| r.iterations).max().unwrap_or(0);
    out.statistics
        .push(Statistic::exact("all_converged", all_converged as u8 as f64));
    out.statistics
        .push(Statistic::exact("max_iterations", max_iter as f64));
    out.check(
        all_converged,
        format!(
            "picard did not reach tol={} within {} iterations on every path",
            opts.tol, opts.max_iter
        ),
    );

    // contraction: successive metric ratios from iteration 2 on
    let mut worst_ratio = 0.0f64;
    for r in &paths {
        for j in 2..r.metrics.len() {
            if r.metrics[j - 1] > 0.0 {
                worst_ratio = worst_ratio.max(r.metrics[j] / r.metrics[j - 1]);
            }
        }
    }
    out.statistics
        .push(Statistic::exact("worst_contraction_ratio", worst_ratio));
    out.check(
        worst_ratio <= cfg.tolerances.contraction_ratio,
        format!(
            "contraction ratio {worst_ratio:.4} exceeds {}",
            cfg.tolerances.contraction_ratio
        ),
    );

    if ou {
        let mut moment_table = Table::new(
            "moments",
            &["path", "t", "mean_deviation", "variance_deviation"],
        );
        for (p, r) in paths.iter().enumerate() {
            for &(k, dm, dv) in &r.moment_devs {
                moment_table.push(vec![cell(p), cell(grid.t(k)), cell(dm), cell(dv)]);
            }
        }
        out.tables.push(moment_table);
        for (slot, &k) in t_indices.iter().enumerate() {
            let dms: Vec<f64> = paths.iter().map(|r| r.moment_devs[slot].1).collect();
            let dvs: Vec<f64> = paths.iter().map(|r| r.moment_devs[slot].2).collect();
            let (dm, dm_se) = super::mean_se(&dms);
            let (dv, dv_se) = super::mean_se(&dvs);
            let t = grid.t(k);
            out.statistics
                .push(Statistic::with_error(format!("mean_deviation@{t}"), dm, dm_se));
            out.statistics.push(Statistic::with_error(
                format!("variance_deviation@{t}"),
                dv,
                dv_se,
            ));
            let s = cfg.tolerances.sigma_level;
            out.check(
                dm.abs() <= s * dm_se + 1e-12,
                format!("conditional mean off at t={t}: {dm:.3e} vs se {dm_se:.3e}"),
            );
            out.check(
                dv.abs() <= s * dv_se + 1e-12,
                format!("conditional variance off at t={t}: {dv:.3e} vs se {dv_se:.3e}"),
            );
        }
    }

    let total_iters: usize = paths.iter().map(|r| r.iterations).sum();
    out.particle_steps = (total_iters * cfg.n_particles * grid.steps()) as u64;
    Ok(out)
}
