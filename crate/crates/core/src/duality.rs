//! Forward/backward duality checks.
//!
//! The dual of the frozen (linear) dynamics is a backward equation whose
//! solution `f` admits the conditional representation
//! `f_s(x) = E[ phi(X_t^{s,x}) | W ]`: simulate the frozen system from
//! `(s, x)` holding the common path fixed and average over fresh
//! idiosyncratic paths. Pairing `f_0` against the initial measure must
//! reproduce the forward expectation: `E<mu_t, phi> = E<mu_0, f_0>`.
//!
//! The dual solution is evaluated exactly at the atoms of `mu_0`, so the
//! pairing `<mu_0, f_0>` is a weighted sum of estimated values with no
//! interpolation. The second (martingale-representation) component of the
//! backward solution is not computed.

use std::sync::Arc;

use crate::coeffs::{alpha_from_parts, CoefficientSet, DEFAULT_PSD_TOL};
use crate::error::{Result, SimError};
use crate::exec;
use crate::linalg::{mat_vec_add, EigenWork};
use crate::measures::TestFunction;
use crate::mckv::LawTrajectory;
use crate::noise::NoiseBundle;
use crate::rng::{derive_seed2, role, NormalStream};

/// A Monte-Carlo evaluation of the dual solution at one query point.
#[derive(Clone, Copy, Debug)]
pub struct DualEvaluation {
    pub value: f64,
    pub std_error: f64,
    pub n_inner: usize,
}

/// `f_s(x) = E[ phi(X_t^{s,x}) | W ]` by nested Monte Carlo: `n_inner`
/// fresh idiosyncratic paths, common increments read from `noise`,
/// coefficients frozen along `frozen`.
pub fn feynman_kac_f(
    coeffs: &CoefficientSet,
    frozen: &LawTrajectory,
    noise: &NoiseBundle,
    x: &[f64],
    s_index: usize,
    t_index: usize,
    phi: &TestFunction,
    n_inner: usize,
    inner_seed: u64,
) -> Result<DualEvaluation> {
    if n_inner < 2 {
        return Err(SimError::InsufficientSamples(n_inner));
    }
    frozen.check_compatible(noise)?;
    let steps = noise.grid().steps();
    if s_index > t_index || t_index > steps {
        return Err(SimError::GridMismatch(format!(
            "need s <= t <= {steps} on the grid, got s={s_index}, t={t_index}"
        )));
    }
    let d = coeffs.dim_x();
    if x.len() != d {
        return Err(SimError::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let dwd = coeffs.dim_w();
    let grid = noise.grid();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let stream = NormalStream::new(inner_seed, role::IDIOSYNCRATIC);
    let values = exec::try_map_indexed(n_inner, |m| -> Result<f64> {
        let mut state = x.to_vec();
        let mut a = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        let mut sig = vec![0.0; d * dwd];
        let mut alpha = vec![0.0; d * d];
        let mut db = vec![0.0; d];
        let mut mwork = Vec::new();
        let mut work = EigenWork::default();
        for k in s_index..t_index {
            let t = grid.t(k);
            let mu = frozen.at(k);
            coeffs.b_into(t, &state, mu, &mut b);
            coeffs.sigma_into(t, &state, mu, &mut sig);
            coeffs.a_into(t, &state, mu, &mut a);
            alpha_from_parts(
                d,
                dwd,
                &a,
                &sig,
                DEFAULT_PSD_TOL,
                &mut mwork,
                &mut work,
                &mut alpha,
            )
            .map_err(|eig| SimError::ParabolicityViolation {
                t,
                x: state.clone(),
                eigenvalue: eig,
                tolerance: DEFAULT_PSD_TOL,
            })?;
            stream.fill_normals(m as u32, k as u32, &mut db);
            for v in db.iter_mut() {
                *v *= sqrt_dt;
            }
            for (s, bi) in state.iter_mut().zip(&b) {
                *s += bi * dt;
            }
            mat_vec_add(d, dwd, &sig, noise.dw(k), &mut state);
            mat_vec_add(d, d, &alpha, &db, &mut state);
        }
        let v = phi.eval(&state);
        if !v.is_finite() {
            return Err(SimError::NonFiniteValue {
                name: phi.name().to_string(),
                point: state,
            });
        }
        Ok(v)
    })?;
    let n = n_inner as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(DualEvaluation {
        value: mean,
        std_error: (var / n).sqrt(),
        n_inner,
    })
}

/// One conditioned forward run: its law trajectory and the bundle carrying
/// the common path it was conditioned on.
#[derive(Clone, Debug)]
pub struct PathForward {
    pub laws: LawTrajectory,
    pub noise: Arc<NoiseBundle>,
}

#[derive(Clone, Debug)]
pub struct DualityGapReport {
    /// Outer average of `<mu_t, phi> - <mu_0, f_0>`.
    pub gap: f64,
    /// Standard error of the outer average; per-path gaps carry the inner
    /// Monte-Carlo noise, so this combines both variance sources.
    pub std_error: f64,
    /// Aggregated inner (dual-side) component, for diagnostics.
    pub inner_std_error: f64,
    pub per_path_gaps: Vec<f64>,
    pub forward_mean: f64,
    pub dual_mean: f64,
}

/// The duality gap `E<mu_t, phi> - E<mu_0, f_0>` over a family of
/// conditioned forward runs. Coefficients are frozen along each path's own
/// law trajectory; dual query points are the atoms of that path's `mu_0`.
pub fn duality_gap(
    paths: &[PathForward],
    coeffs: &CoefficientSet,
    phi: &TestFunction,
    t_index: usize,
    n_inner: usize,
    master_seed: u64,
) -> Result<DualityGapReport> {
    if paths.is_empty() {
        return Err(SimError::InvalidConfig("no forward paths given".into()));
    }
    let grid = paths[0].noise.grid();
    for p in paths {
        if p.noise.grid() != grid {
            return Err(SimError::GridMismatch(
                "duality paths must share one grid".into(),
            ));
        }
        p.laws.check_compatible(&p.noise)?;
    }
    let cells = exec::try_map_indexed(paths.len(), |p| -> Result<(f64, f64, f64)> {
        let path = &paths[p];
        let forward = path.laws.at(t_index).integrate(phi)?;
        let mu0 = path.laws.at(0);
        let mut dual = 0.0;
        let mut inner_var = 0.0;
        for j in 0..mu0.len() {
            let eval = feynman_kac_f(
                coeffs,
                &path.laws,
                &path.noise,
                mu0.point(j),
                0,
                t_index,
                phi,
                n_inner,
                derive_seed2(master_seed, p as u64, j as u64),
            )?;
            let w = mu0.weight(j);
            dual += w * eval.value;
            inner_var += w * w * eval.std_error * eval.std_error;
        }
        Ok((forward, dual, inner_var))
    })?;
    let m = cells.len() as f64;
    let gaps: Vec<f64> = cells.iter().map(|(f, d, _)| f - d).collect();
    let gap = gaps.iter().sum::<f64>() / m;
    let std_error = if cells.len() >= 2 {
        let var = gaps.iter().map(|g| (g - gap) * (g - gap)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    let inner_std_error = (cells.iter().map(|(_, _, v)| v).sum::<f64>()).sqrt() / m;
    Ok(DualityGapReport {
        gap,
        std_error,
        inner_std_error,
        per_path_gaps: gaps,
        forward_mean: cells.iter().map(|(f, _, _)| f).sum::<f64>() / m,
        dual_mean: cells.iter().map(|(_, d, _)| d).sum::<f64>() / m,
    })
}

#[derive(Clone, Debug)]
pub struct WitnessCell {
    pub phi_name: String,
    pub t_index: usize,
    /// Outer average of `|<mu^1_t - mu^2_t, phi>|`.
    pub mean_abs_gap: f64,
    /// Per-path gap standard deviation: the combined noise scale of the
    /// two estimators.
    pub gap_std: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct UniquenessReport {
    pub cells: Vec<WitnessCell>,
    pub all_pass: bool,
}

/// Uniqueness witness: two forward estimators of the same dynamics (same
/// common paths, same initial law; different idiosyncratic seeds and/or N)
/// must produce statistically identical laws. A cell passes when the mean
/// absolute gap is within 3 combined standard errors of zero.
pub fn uniqueness_witness(
    first: &[LawTrajectory],
    second: &[LawTrajectory],
    bank: &[TestFunction],
    t_indices: &[usize],
) -> Result<UniquenessReport> {
    if first.len() != second.len() || first.is_empty() {
        return Err(SimError::InvalidConfig(
            "need equally many paths in both estimators".into(),
        ));
    }
    for (a, b) in first.iter().zip(second) {
        if a.grid() != b.grid() {
            return Err(SimError::GridMismatch(
                "witness estimators must share the grid".into(),
            ));
        }
        if a.w_seed() != b.w_seed() {
            return Err(SimError::ConditioningMismatch);
        }
    }
    let m = first.len() as f64;
    let mut cells = Vec::with_capacity(bank.len() * t_indices.len());
    for phi in bank {
        for &t in t_indices {
            let mut gaps = Vec::with_capacity(first.len());
            for (a, b) in first.iter().zip(second) {
                gaps.push(a.at(t).integrate(phi)? - b.at(t).integrate(phi)?);
            }
            let mean_abs = gaps.iter().map(|g| g.abs()).sum::<f64>() / m;
            let mean = gaps.iter().sum::<f64>() / m;
            let std = if gaps.len() >= 2 {
                (gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                0.0
            };
            cells.push(WitnessCell {
                phi_name: phi.name().to_string(),
                t_index: t,
                mean_abs_gap: mean_abs,
                gap_std: std,
                pass: mean_abs <= 3.0 * std + 1e-12,
            });
        }
    }
    let all_pass = cells.iter().all(|c| c.pass);
    Ok(UniquenessReport { cells, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::families;
    use crate::noise::TimeGrid;
    use crate::simulate::{run_particle_system, InitialLaw};
    use approx::assert_abs_diff_eq;

    fn gaussian01() -> InitialLaw {
        InitialLaw::Gaussian {
            mean: vec![0.0],
            std: vec![1.0],
        }
    }

    fn forward_path(
        coeffs: &CoefficientSet,
        n: usize,
        steps: usize,
        dt: f64,
        seed: u64,
    ) -> PathForward {
        let grid = TimeGrid::new(dt, steps).unwrap();
        let noise = Arc::new(NoiseBundle::generate(grid, n, 1, 1, seed));
        let ens = run_particle_system(coeffs, &noise, &gaussian01(), 1.0).unwrap();
        PathForward {
            laws: LawTrajectory::from_ensemble(&ens).unwrap(),
            noise,
        }
    }

    #[test]
    fn deterministic_characteristics_are_exact() {
        // sigma = alpha = 0, b constant: f_0(x) = phi(x + b t), zero variance
        let b0 = 0.8;
        let coeffs = families::constant(1, 1, &[0.0], &[b0], &[0.0]);
        let path = forward_path(&coeffs, 16, 50, 0.02, 101);
        let phi = TestFunction::sine(1, 0);
        let x = [0.3];
        let eval = feynman_kac_f(
            &coeffs, &path.laws, &path.noise, &x, 0, 50, &phi, 8, 99,
        )
        .unwrap();
        assert_abs_diff_eq!(eval.value, (0.3 + b0).sin(), epsilon = 1e-12);
        assert_eq!(eval.std_error, 0.0);
    }

    #[test]
    fn shift_model_dual_is_exact_translation_per_path() {
        let coeffs = families::shift(1, 1, 1.0);
        let path = forward_path(&coeffs, 32, 40, 0.025, 103);
        let phi = TestFunction::sine(1, 0);
        let w = path.noise.w_path();
        for &x0 in &[-0.7, 0.0, 1.3] {
            let eval = feynman_kac_f(
                &coeffs, &path.laws, &path.noise, &[x0], 0, 40, &phi, 4, 7,
            )
            .unwrap();
            assert_abs_diff_eq!(eval.value, (x0 + w[40]).sin(), epsilon = 1e-12);
            assert_eq!(eval.std_error, 0.0);
        }
    }

    #[test]
    fn heat_kernel_matches_gaussian_convolution() {
        // a = 1/2, b = sigma = 0 (alpha = 1): f_0(x) = E phi(x + B_t) with
        // phi = exp(-x^2) has the closed form
        // (1 + 2t)^(-1/2) exp(-x^2 / (1 + 2t)).
        let coeffs = families::constant(1, 1, &[0.5], &[0.0], &[0.0]);
        let t_end = 0.5f64;
        let path = forward_path(&coeffs, 8, 25, 0.02, 107);
        let phi = TestFunction::gaussian_bump(1);
        let n_inner = 20_000;
        for &x0 in &[0.0, 0.6, -1.1] {
            let eval = feynman_kac_f(
                &coeffs, &path.laws, &path.noise, &[x0], 0, 25, &phi, n_inner, 11,
            )
            .unwrap();
            let expect = (1.0 + 2.0 * t_end).sqrt().recip()
                * (-x0 * x0 / (1.0 + 2.0 * t_end)).exp();
            assert!(
                (eval.value - expect).abs() <= 3.0 * eval.std_error,
                "x0={x0}: {} vs {expect} (se {})",
                eval.value,
                eval.std_error
            );
        }
    }

    #[test]
    fn dual_tower_property_exact_for_shift() {
        // f_s(x) = phi(x + W_t - W_s) exactly; transporting a query through
        // an intermediate time changes nothing.
        let coeffs = families::shift(1, 1, 1.0);
        let path = forward_path(&coeffs, 16, 60, 0.01, 109);
        let phi = TestFunction::sine(1, 0);
        let w = path.noise.w_path();
        let (s, mid, t) = (10usize, 35usize, 60usize);
        let x0 = 0.4;
        let f_direct = feynman_kac_f(
            &coeffs, &path.laws, &path.noise, &[x0], s, t, &phi, 4, 13,
        )
        .unwrap();
        // transported query: state at mid started from (s, x0)
        let x_mid = x0 + w[mid] - w[s];
        let f_two_leg = feynman_kac_f(
            &coeffs, &path.laws, &path.noise, &[x_mid], mid, t, &phi, 4, 17,
        )
        .unwrap();
        assert_abs_diff_eq!(f_direct.value, f_two_leg.value, epsilon = 1e-12);
    }

    #[test]
    fn insufficient_inner_samples_rejected() {
        let coeffs = families::shift(1, 1, 1.0);
        let path = forward_path(&coeffs, 4, 5, 0.1, 113);
        let phi = TestFunction::sine(1, 0);
        assert!(matches!(
            feynman_kac_f(&coeffs, &path.laws, &path.noise, &[0.0], 0, 5, &phi, 1, 1),
            Err(SimError::InsufficientSamples(1))
        ));
    }

    #[test]
    fn duality_gap_shift_model_is_float_exact() {
        // both sides evaluate the same translated sum atom by atom
        let coeffs = families::shift(1, 1, 1.0);
        let paths: Vec<PathForward> = (0..4)
            .map(|p| forward_path(&coeffs, 64, 30, 0.02, 200 + p))
            .collect();
        let phi = TestFunction::sine(1, 0);
        let rep = duality_gap(&paths, &coeffs, &phi, 30, 4, 5150).unwrap();
        assert!(rep.gap.abs() < 1e-12, "gap {}", rep.gap);
        assert_eq!(rep.inner_std_error, 0.0);
    }

    #[test]
    fn duality_gap_mass_pairing_is_exact() {
        // phi == 1: both sides equal the total mass r
        let coeffs = families::mean_reversion(1, 1, 0.8, 0.4, 0.5, 1.0);
        let paths: Vec<PathForward> = (0..3)
            .map(|p| forward_path(&coeffs, 32, 20, 0.02, 300 + p))
            .collect();
        let phi = TestFunction::constant(1, 1.0);
        let rep = duality_gap(&paths, &coeffs, &phi, 20, 8, 6060).unwrap();
        assert!(rep.gap.abs() < 1e-12, "gap {}", rep.gap);
    }

    #[test]
    fn duality_gap_linear_in_phi_at_fixed_samples() {
        let coeffs = families::shift(1, 1, 0.7);
        let paths: Vec<PathForward> = (0..3)
            .map(|p| forward_path(&coeffs, 16, 15, 0.02, 400 + p))
            .collect();
        let f = TestFunction::sine(1, 0);
        let g = TestFunction::constant(1, 1.0);
        let combo = TestFunction::new(
            "sin + 2",
            3.0,
            1.0,
            Box::new(|x: &[f64]| x[0].sin() + 2.0),
            Box::new(|x, out| out[0] = x[0].cos()),
            Box::new(|x, out| out[0] = -x[0].sin()),
        );
        let seed = 7070;
        let rf = duality_gap(&paths, &coeffs, &f, 15, 4, seed).unwrap();
        let rg = duality_gap(&paths, &coeffs, &g, 15, 4, seed).unwrap();
        let rc = duality_gap(&paths, &coeffs, &combo, 15, 4, seed).unwrap();
        assert_abs_diff_eq!(rc.gap, rf.gap + 2.0 * rg.gap, epsilon = 1e-12);
    }

    #[test]
    fn witness_same_estimator_gives_exact_zero() {
        let coeffs = families::mean_reversion(1, 1, 0.9, 0.3, 0.5, 1.0);
        let runs: Vec<LawTrajectory> = (0..3)
            .map(|p| forward_path(&coeffs, 32, 20, 0.02, 500 + p).laws)
            .collect();
        let bank = TestFunction::standard_bank(1);
        let rep = uniqueness_witness(&runs, &runs, &bank, &[10, 20]).unwrap();
        assert!(rep.all_pass);
        for c in &rep.cells {
            assert_eq!(c.mean_abs_gap, 0.0);
        }
    }

    #[test]
    fn witness_shift_model_b_independent() {
        // the shift law does not depend on B at all: gaps are exactly zero
        // even with different idiosyncratic seeds
        let coeffs = families::shift(1, 1, 1.0);
        let grid = TimeGrid::new(0.02, 25).unwrap();
        let mk = |b_tag: u64| -> Vec<LawTrajectory> {
            (0..3)
                .map(|p| {
                    let noise = Arc::new(NoiseBundle::with_seeds(
                        grid,
                        32,
                        1,
                        1,
                        900 + p,
                        b_tag * 1000 + p,
                        44 + p,
                    ));
                    let ens = run_particle_system(&coeffs, &noise, &gaussian01(), 1.0).unwrap();
                    LawTrajectory::from_ensemble(&ens).unwrap()
                })
                .collect()
        };
        let first = mk(1);
        let second = mk(2);
        let bank = TestFunction::standard_bank(1);
        let rep = uniqueness_witness(&first, &second, &bank, &[25]).unwrap();
        assert!(rep.all_pass);
        for c in &rep.cells {
            assert!(c.mean_abs_gap < 1e-12);
        }
    }

    #[test]
    fn witness_rejects_mismatched_conditioning() {
        let coeffs = families::shift(1, 1, 1.0);
        let a = vec![forward_path(&coeffs, 8, 10, 0.05, 1).laws];
        let b = vec![forward_path(&coeffs, 8, 10, 0.05, 2).laws];
        let bank = TestFunction::standard_bank(1);
        assert!(matches!(
            uniqueness_witness(&a, &b, &bank, &[5]),
            Err(SimError::ConditioningMismatch)
        ));
    }
}
