//! The experiment pipelines, one per CLI kind.

pub mod assumptions;
pub mod chaos;
pub mod duality;
pub mod picard;
pub mod rate;
pub mod simulate;
pub mod stratcheck;
pub mod weakcheck;

use anyhow::{anyhow, bail};
use mfsim_core::measures::TestFunction;

use crate::config::{ExperimentConfig, InitialLawSpec, ModelSpec};

/// Resolves configured test-function names against the standard bank;
/// an empty selection means the whole bank.
pub fn bank_subset(dim: usize, names: &[String]) -> anyhow::Result<Vec<TestFunction>> {
    if names.is_empty() {
        return Ok(TestFunction::standard_bank(dim));
    }
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let mut bank = TestFunction::standard_bank(dim);
        let hit = bank
            .iter()
            .position(|f| f.name() == name)
            .ok_or_else(|| anyhow!("unknown test function '{name}'"))?;
        out.push(bank.swap_remove(hit));
    }
    Ok(out)
}

/// Single observable; defaults to `sin(x0)`.
pub fn single_phi(dim: usize, names: &[String]) -> anyhow::Result<TestFunction> {
    if names.is_empty() {
        return Ok(TestFunction::sine(dim, 0));
    }
    Ok(bank_subset(dim, &names[..1])?.remove(0))
}

/// `E[phi(Z)]` for `Z ~ N(mean, var)` by composite Simpson quadrature over
/// ten standard deviations; the closed-form reference for Gaussian
/// conditional laws.
pub fn gauss_expect(phi: &TestFunction, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return phi.eval(&[mean]);
    }
    let sd = var.sqrt();
    let lo = mean - 10.0 * sd;
    let hi = mean + 10.0 * sd;
    let n = 4096usize; // even
    let h = (hi - lo) / n as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    let density = |x: f64| norm * (-0.5 * (x - mean) * (x - mean) / var).exp();
    let f = |x: f64| phi.eval(&[x]) * density(x);
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + k as f64 * h);
    }
    acc * h / 3.0
}

/// Conditional Gaussian moments of the limiting law at time `t` for the
/// closed-form models, given the common-path value `w_t`.
///
/// Both supported models translate the mean by `sigma0 W_t`; the variance
/// is constant for the shift model and follows
/// `dv = (-2 beta v + alpha0^2) dt` for the mean-reversion model.
pub fn closed_form_moments(
    model: &ModelSpec,
    initial: &InitialLawSpec,
    w_t: f64,
    t: f64,
) -> anyhow::Result<(f64, f64)> {
    let (m0, v0) = initial
        .gaussian_moments()
        .ok_or_else(|| anyhow!("closed-form reference needs a scalar Gaussian initial law"))?;
    match model {
        ModelSpec::Shift { sigma0, .. } => Ok((m0 + sigma0 * w_t, v0)),
        ModelSpec::MeanReversionToConditionalMean {
            beta,
            sigma0,
            alpha0,
        } => {
            let vinf = alpha0 * alpha0 / (2.0 * beta);
            let v = vinf + (v0 - vinf) * (-2.0 * beta * t).exp();
            Ok((m0 + sigma0 * w_t, v))
        }
        other => bail!("no closed-form conditional law for model {other:?}"),
    }
}

/// Mean and standard error of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-path master seed for path `p` of a run.
pub fn path_seed(cfg: &ExperimentConfig, p: usize) -> u64 {
    mfsim_core::rng::derive_seed(cfg.seed, p as u64)
}
