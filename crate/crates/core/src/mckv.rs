//! Picard iteration on the conditional-law map.
//!
//! One iteration freezes the coefficients along an input law trajectory,
//! simulates the resulting linear system with the SAME idiosyncratic
//! increments (common random numbers), and returns the empirical
//! conditional-law trajectory of the output. The fixed point is the
//! finite-N conditional McKean--Vlasov law given the bundled common path.
//!
//! The stopping diagnostic is the per-path discretized metric
//! `dt * sum_k rho(mu_{t_k}, nu_{t_k})` with `rho` the bounded-Lipschitz
//! distance; averaging over independent common paths is left to callers
//! since the fixed point itself is per-path.

use std::sync::Arc;

use crate::coeffs::CoefficientSet;
use crate::error::{Result, SimError};
use crate::exec;
use crate::measures::{bl_distance, bl_distance_sliced, EmpiricalMeasure};
use crate::noise::{NoiseBundle, TimeGrid};
use crate::simulate::{run_frozen_system, InitialLaw, ParticleEnsemble};

/// A conditional-law trajectory: one empirical measure per grid point, all
/// of the same mass, tagged with the common path it is conditioned on.
#[derive(Clone, Debug)]
pub struct LawTrajectory {
    grid: TimeGrid,
    laws: Vec<EmpiricalMeasure>,
    mass: f64,
    w_seed: u64,
}

impl LawTrajectory {
    pub fn new(grid: TimeGrid, laws: Vec<EmpiricalMeasure>, w_seed: u64) -> Result<Self> {
        if laws.len() != grid.steps() + 1 {
            return Err(SimError::GridMismatch(format!(
                "{} laws for {} grid points",
                laws.len(),
                grid.steps() + 1
            )));
        }
        let mass = laws[0].mass();
        if laws.iter().any(|l| (l.mass() - mass).abs() > 1e-12 * mass) {
            return Err(SimError::MassMismatch {
                total: mass,
                declared: mass,
            });
        }
        Ok(LawTrajectory {
            grid,
            laws,
            mass,
            w_seed,
        })
    }

    /// The trajectory constant in time at `law` (the Picard starting point).
    pub fn constant(law: EmpiricalMeasure, grid: TimeGrid, w_seed: u64) -> Self {
        let laws = vec![law; grid.steps() + 1];
        let mass = laws[0].mass();
        LawTrajectory {
            grid,
            laws,
            mass,
            w_seed,
        }
    }

    /// Per-grid-point empirical laws of a finished run.
    pub fn from_ensemble(ens: &ParticleEnsemble) -> Result<Self> {
        let laws = exec::try_map_indexed(ens.grid().steps() + 1, |k| ens.empirical_law(k))?;
        Ok(LawTrajectory {
            grid: ens.grid(),
            laws,
            mass: ens.mass(),
            w_seed: ens.noise().w_seed(),
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn w_seed(&self) -> u64 {
        self.w_seed
    }

    pub fn at(&self, k: usize) -> &EmpiricalMeasure {
        &self.laws[k]
    }

    pub fn laws(&self) -> &[EmpiricalMeasure] {
        &self.laws
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }

    /// Same grid and same common path as the bundle.
    pub fn check_compatible(&self, noise: &NoiseBundle) -> Result<()> {
        if self.grid != noise.grid() {
            return Err(SimError::GridMismatch(format!(
                "law grid (dt={}, steps={}) vs noise grid (dt={}, steps={})",
                self.grid.dt(),
                self.grid.steps(),
                noise.grid().dt(),
                noise.grid().steps()
            )));
        }
        if self.w_seed != noise.w_seed() {
            return Err(SimError::ConditioningMismatch);
        }
        Ok(())
    }
}

/// Time-integrated metric `dt * sum_{k < M} rho(a_k, b_k)` between two
/// trajectories on the same grid (left quadrature rule).
pub fn trajectory_metric(
    a: &LawTrajectory,
    b: &LawTrajectory,
    grid_resolution: usize,
) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(SimError::GridMismatch(
            "trajectory metric needs a shared grid".into(),
        ));
    }
    let rhos = exec::try_map_indexed(a.grid().steps(), |k| {
        let (mu, nu) = (a.at(k), b.at(k));
        if mu.dim() == 1 {
            bl_distance(mu, nu, grid_resolution)
        } else {
            bl_distance_sliced(mu, nu, grid_resolution, 16, a.w_seed() ^ 0x511ced)
        }
    })?;
    Ok(a.grid().dt() * rhos.iter().sum::<f64>())
}

/// One application of the conditional-law map: simulate the frozen system
/// under `input`'s laws, reusing the bundle's idiosyncratic increments and
/// the given initial states, and return the output law trajectory.
pub fn phi_map(
    coeffs: &CoefficientSet,
    input: &LawTrajectory,
    noise: &Arc<NoiseBundle>,
    initial: &[f64],
    mass: f64,
) -> Result<LawTrajectory> {
    input.check_compatible(noise)?;
    let ens = run_frozen_system(coeffs, input.laws(), noise, initial, mass)?;
    LawTrajectory::from_ensemble(&ens)
}

#[derive(Clone, Debug)]
pub struct PicardOptions {
    /// Stop when the discretized metric between successive iterates falls
    /// below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Grid resolution of the bounded-Lipschitz metric.
    pub metric_resolution: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-3,
            max_iter: 10,
            metric_resolution: 256,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PicardDiagnostics {
    /// Metric between successive iterates, one entry per iteration.
    pub metrics: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates the conditional-law map from the constant-in-time initial law
/// until the discretized metric drops below `tol` or `max_iter` is reached.
/// Non-convergence is reported in the diagnostics, not as an error.
pub fn picard_solve(
    coeffs: &CoefficientSet,
    noise: &Arc<NoiseBundle>,
    initial_law: &InitialLaw,
    mass: f64,
    opts: &PicardOptions,
) -> Result<(LawTrajectory, PicardDiagnostics)> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(SimError::InvalidConfig(format!(
            "need tol > 0 and max_iter >= 1, got tol={}, max_iter={}",
            opts.tol, opts.max_iter
        )));
    }
    let initial = initial_law.sample_cloud(&noise.init_stream(), noise.n_particles());
    let mu0 = EmpiricalMeasure::uniform(coeffs.dim_x(), initial.clone(), mass)?;
    let mut current = LawTrajectory::constant(mu0, noise.grid(), noise.w_seed());
    let mut diag = PicardDiagnostics {
        metrics: Vec::new(),
        iterations: 0,
        converged: false,
    };
    for _ in 0..opts.max_iter {
        let next = phi_map(coeffs, &current, noise, &initial, mass)?;
        let gap = trajectory_metric(&current, &next, opts.metric_resolution)?;
        diag.metrics.push(gap);
        diag.iterations += 1;
        current = next;
        if gap < opts.tol {
            diag.converged = true;
            break;
        }
    }
    Ok((current, diag))
}
