//! Pathwise residuals of the weak (integral) formulation.
//!
//! For a law trajectory `mu` on a grid and a C^2 test function `phi`, the
//! residual at `t_k` is
//!
//! ```text
//! R(t_k) = <mu_k, phi> - <mu_0, phi>
//!          - sum_{j<k} [ <mu_j, a : hess phi> + <mu_j, b . grad phi> ] dt
//!          - sum_{j<k} <mu_j, sigma^T grad phi> . dW_j
//! ```
//!
//! computed on the stored common path with left-point quadrature for both
//! the time and the stochastic sums (the forward-increment convention of
//! the Ito integral). The residual is pathwise, per test function; it is
//! exactly zero for `phi == 1` whenever mass is conserved.

use crate::coeffs::CoefficientSet;
use crate::error::{Result, SimError};
use crate::measures::{EmpiricalMeasure, TestFunction};
use crate::mckv::LawTrajectory;
use crate::noise::NoiseBundle;

/// Residual trace of one `(trajectory, test function)` pair.
#[derive(Clone, Debug)]
pub struct WeakResidual {
    pub phi_name: String,
    /// `R(t_k)` for every grid point; `values[0] == 0` exactly.
    pub values: Vec<f64>,
    /// `sup_k |R(t_k)|` over the whole grid.
    pub sup: f64,
}

impl WeakResidual {
    /// Supremum restricted to a subset of grid indices (refinement studies
    /// compare levels on the common coarse times).
    pub fn sup_over(&self, indices: &[usize]) -> f64 {
        indices
            .iter()
            .map(|&k| self.values[k].abs())
            .fold(0.0, f64::max)
    }
}

/// Integrands of one step: `<mu, a : hess phi + b . grad phi>` and the
/// common-noise loading `<mu, sigma^T grad phi>` per noise coordinate.
fn step_brackets(
    coeffs: &CoefficientSet,
    t: f64,
    mu: &EmpiricalMeasure,
    phi: &TestFunction,
    sigma_bracket: &mut [f64],
) -> f64 {
    let d = coeffs.dim_x();
    let dw = coeffs.dim_w();
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    let mut sig = vec![0.0; d * dw];
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut drift = 0.0;
    sigma_bracket.fill(0.0);
    for at in 0..mu.len() {
        let x = mu.point(at);
        let w = mu.weight(at);
        coeffs.a_into(t, x, mu, &mut a);
        coeffs.b_into(t, x, mu, &mut b);
        coeffs.sigma_into(t, x, mu, &mut sig);
        phi.grad_into(x, &mut grad);
        phi.hess_into(x, &mut hess);
        let mut acc = 0.0;
        for i in 0..d {
            acc += b[i] * grad[i];
            for j in 0..d {
                acc += a[i * d + j] * hess[i * d + j];
            }
        }
        drift += w * acc;
        for k in 0..dw {
            let mut load = 0.0;
            for i in 0..d {
                load += sig[i * dw + k] * grad[i];
            }
            sigma_bracket[k] += w * load;
        }
    }
    drift
}

/// Residual of the weak formulation along one trajectory and common path.
pub fn weak_residual(
    law: &LawTrajectory,
    coeffs: &CoefficientSet,
    phi: &TestFunction,
    noise: &NoiseBundle,
) -> Result<WeakResidual> {
    law.check_compatible(noise)?;
    if coeffs.dim_x() != law.at(0).dim() {
        return Err(SimError::DimensionMismatch {
            expected: coeffs.dim_x(),
            got: law.at(0).dim(),
        });
    }
    let grid = law.grid();
    let steps = grid.steps();
    let dt = grid.dt();
    let dw_dim = coeffs.dim_w();
    let base = law.at(0).integrate(phi)?;
    let mut values = Vec::with_capacity(steps + 1);
    let mut drift_sum = 0.0;
    let mut stoch_sum = 0.0;
    let mut sigma_bracket = vec![0.0; dw_dim];
    for k in 0..=steps {
        let here = law.at(k).integrate(phi)?;
        values.push(here - base - drift_sum - stoch_sum);
        if k < steps {
            let t = grid.t(k);
            let drift = step_brackets(coeffs, t, law.at(k), phi, &mut sigma_bracket);
            drift_sum += drift * dt;
            let dw = noise.dw(k);
            for (load, inc) in sigma_bracket.iter().zip(dw) {
                stoch_sum += load * inc;
            }
        }
    }
    let sup = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(WeakResidual {
        phi_name: phi.name().to_string(),
        values,
        sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::families;
    use crate::mckv::LawTrajectory;
    use crate::noise::TimeGrid;
    use crate::simulate::{run_particle_system, InitialLaw};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn shift_run(n: usize, steps: usize, dt: f64, seed: u64) -> (LawTrajectory, Arc<NoiseBundle>) {
        let coeffs = families::shift(1, 1, 1.0);
        let grid = TimeGrid::new(dt, steps).unwrap();
        let noise = Arc::new(NoiseBundle::generate(grid, n, 1, 1, seed));
        let init = InitialLaw::Gaussian {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let ens = run_particle_system(&coeffs, &noise, &init, 1.0).unwrap();
        (LawTrajectory::from_ensemble(&ens).unwrap(), noise)
    }

    #[test]
    fn constant_test_function_gives_exact_zero() {
        let (law, noise) = shift_run(64, 80, 0.0125, 61);
        let coeffs = families::shift(1, 1, 1.0);
        let phi = TestFunction::constant(1, 1.0);
        let r = weak_residual(&law, &coeffs, &phi, &noise).unwrap();
        assert_eq!(r.sup, 0.0);
        assert!(r.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_drift_telescopes_for_linear_phi() {
        // b constant, sigma = a = 0, phi(x) = x: the Euler recursion makes
        // the drift bracket telescope exactly.
        let coeffs = families::constant(1, 1, &[0.0], &[0.7], &[0.0]);
        let grid = TimeGrid::new(0.05, 40).unwrap();
        let noise = Arc::new(NoiseBundle::generate(grid, 16, 1, 1, 67));
        let init = InitialLaw::Gaussian {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let ens = run_particle_system(&coeffs, &noise, &init, 1.0).unwrap();
        let law = LawTrajectory::from_ensemble(&ens).unwrap();
        let phi = TestFunction::coordinate(1, 0);
        let r = weak_residual(&law, &coeffs, &phi, &noise).unwrap();
        assert!(r.sup < 1e-12, "sup {}", r.sup);
    }

    #[test]
    fn first_value_is_exactly_zero() {
        let (law, noise) = shift_run(32, 20, 0.05, 71);
        let coeffs = families::shift(1, 1, 1.0);
        for phi in TestFunction::standard_bank(1) {
            let r = weak_residual(&law, &coeffs, &phi, &noise).unwrap();
            assert_eq!(r.values[0], 0.0, "{}", phi.name());
        }
    }

    #[test]
    fn residual_linear_in_phi() {
        let (law, noise) = shift_run(32, 25, 0.04, 73);
        let coeffs = families::shift(1, 1, 1.0);
        let f = TestFunction::sine(1, 0);
        let g = TestFunction::quadratic(1, 0, 0);
        let combo = TestFunction::new(
            "3 sin - 2 x^2",
            f64::INFINITY,
            f64::INFINITY,
            Box::new(|x: &[f64]| 3.0 * x[0].sin() - 2.0 * x[0] * x[0]),
            Box::new(|x, out| out[0] = 3.0 * x[0].cos() - 4.0 * x[0]),
            Box::new(|x, out| out[0] = -3.0 * x[0].sin() - 4.0),
        );
        let rf = weak_residual(&law, &coeffs, &f, &noise).unwrap();
        let rg = weak_residual(&law, &coeffs, &g, &noise).unwrap();
        let rc = weak_residual(&law, &coeffs, &combo, &noise).unwrap();
        for k in 0..rc.values.len() {
            assert_abs_diff_eq!(
                rc.values[k],
                3.0 * rf.values[k] - 2.0 * rg.values[k],
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn residual_invariant_under_atom_merge() {
        let coeffs = families::shift(1, 1, 1.0);
        let grid = TimeGrid::new(0.05, 10).unwrap();
        let noise = Arc::new(NoiseBundle::generate(grid, 4, 1, 1, 79));
        // duplicate atoms: two particles pinned at the same start
        let initial = vec![0.5, 0.5, -1.0, 2.0];
        let ens =
            crate::simulate::run_particle_system_from(&coeffs, &noise, &initial, 1.0).unwrap();
        let law = LawTrajectory::from_ensemble(&ens).unwrap();
        let merged = LawTrajectory::new(
            law.grid(),
            law.laws().iter().map(|m| m.merged()).collect(),
            law.w_seed(),
        )
        .unwrap();
        let phi = TestFunction::sine(1, 0);
        let r1 = weak_residual(&law, &coeffs, &phi, &noise).unwrap();
        let r2 = weak_residual(&merged, &coeffs, &phi, &noise).unwrap();
        for k in 0..r1.values.len() {
            assert_abs_diff_eq!(r1.values[k], r2.values[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn quadratic_phi_residual_halves_at_sqrt_rate() {
        // For the shift model and phi = x^2 the residual is exactly the
        // quadratic-variation error sum (dW_j^2 - dt), which scales like
        // sqrt(dt) on a fixed path. Check the refinement ratio on the
        // common coarse grid against brute recomputation.
        let coeffs = families::shift(1, 1, 1.0);
        let grid = TimeGrid::new(1.0 / 512.0, 512).unwrap();
        let fine = NoiseBundle::generate(grid, 8, 1, 1, 83);
        let phi = TestFunction::quadratic(1, 0, 0);
        let init = InitialLaw::Gaussian {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let mut sups = Vec::new();
        for factor in [8usize, 4, 2, 1] {
            let nb = Arc::new(fine.coarsen(factor).unwrap());
            let ens = run_particle_system(&coeffs, &nb, &init, 1.0).unwrap();
            let law = LawTrajectory::from_ensemble(&ens).unwrap();
            let r = weak_residual(&law, &coeffs, &phi, &nb).unwrap();
            // brute replication of the QV sum: R(t_k) = sum_{j<k} (dW^2 - dt)
            let steps = nb.grid().steps();
            let mut acc = 0.0;
            for k in 0..steps {
                let expect = acc;
                assert_abs_diff_eq!(r.values[k], expect, epsilon = 1e-9);
                let dw = nb.dw(k)[0];
                acc += dw * dw - nb.grid().dt();
            }
            sups.push(r.sup);
        }
        // coarser grids have larger residuals
        assert!(sups[0] > sups[3]);
    }
}
