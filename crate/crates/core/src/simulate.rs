//! Explicit time stepping for the particle systems: Euler--Maruyama for the
//! Ito dynamics `dX = b dt + sigma dW + alpha dB` (one common `W`, per-
//! particle `B^i`), and a Heun midpoint scheme for the Stratonovich
//! conservation dynamics `dX = sigma(X, L^N) o dW`.
//!
//! The measure argument fed to the coefficients at step `k` is always the
//! start-of-step measure: the live empirical cloud for interacting runs, or
//! the `k`-th entry of a frozen law trajectory. Particle updates within a
//! step are data parallel; the step barrier is sequential.

use std::sync::{Arc, Mutex};

use crate::coeffs::{alpha_from_parts, CoefficientSet, DEFAULT_PSD_TOL};
use crate::error::{Result, SimError};
use crate::exec;
use crate::linalg::{mat_vec_add, EigenWork};
use crate::measures::EmpiricalMeasure;
use crate::noise::{NoiseBundle, TimeGrid};
use crate::rng::NormalStream;

/// Particles per work block; scratch buffers are created once per block.
const BLOCK: usize = 64;

/// Initial-state laws for particle clouds.
#[derive(Clone, Debug)]
pub enum InitialLaw {
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// Particle `i` starts at atom `i mod count`: deterministic clusters.
    AtomsRoundRobin { dim: usize, points: Vec<f64> },
    /// Each particle picks an atom uniformly at random.
    AtomsSampled { dim: usize, points: Vec<f64> },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Gaussian { mean, .. } => mean.len(),
            InitialLaw::Uniform { lo, .. } => lo.len(),
            InitialLaw::AtomsRoundRobin { dim, .. } | InitialLaw::AtomsSampled { dim, .. } => *dim,
        }
    }

    pub fn sample_into(&self, stream: &NormalStream, particle: u32, out: &mut [f64]) {
        match self {
            InitialLaw::Gaussian { mean, std } => {
                stream.fill_normals(particle, 0, out);
                for ((o, m), s) in out.iter_mut().zip(mean).zip(std) {
                    *o = m + s * *o;
                }
            }
            InitialLaw::Uniform { lo, hi } => {
                for (j, o) in out.iter_mut().enumerate() {
                    let u = stream.uniform(particle, 0, j as u32);
                    *o = lo[j] + (hi[j] - lo[j]) * u;
                }
            }
            InitialLaw::AtomsRoundRobin { dim, points } => {
                let count = points.len() / dim;
                let a = particle as usize % count;
                out.copy_from_slice(&points[a * dim..(a + 1) * dim]);
            }
            InitialLaw::AtomsSampled { dim, points } => {
                let count = points.len() / dim;
                let a = ((stream.uniform(particle, 0, 0) * count as f64) as usize).min(count - 1);
                out.copy_from_slice(&points[a * dim..(a + 1) * dim]);
            }
        }
    }

    /// Samples a full cloud, flattened `n x dim`.
    pub fn sample_cloud(&self, stream: &NormalStream, n: usize) -> Vec<f64> {
        let d = self.dim();
        let mut cloud = vec![0.0; n * d];
        exec::for_each_chunk_mut(&mut cloud, d, |i, x| {
            self.sample_into(stream, i as u32, x);
        });
        cloud
    }
}

/// Full trajectory of an `N`-particle run conditioned on one common path.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    dim: usize,
    n: usize,
    grid: TimeGrid,
    mass: f64,
    /// (steps + 1) x n x dim, time-major.
    states: Vec<f64>,
    noise: Arc<NoiseBundle>,
}

impl ParticleEnsemble {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn noise(&self) -> &Arc<NoiseBundle> {
        &self.noise
    }

    /// All particle states at grid point `k`, flattened `n x dim`.
    pub fn state(&self, k: usize) -> &[f64] {
        let row = self.n * self.dim;
        &self.states[k * row..(k + 1) * row]
    }

    pub fn position(&self, k: usize, i: usize) -> &[f64] {
        let row = self.n * self.dim;
        &self.states[k * row + i * self.dim..k * row + (i + 1) * self.dim]
    }

    /// Empirical law at grid point `k`: one atom of weight `mass / N` per
    /// particle.
    pub fn empirical_law(&self, k: usize) -> Result<EmpiricalMeasure> {
        if k > self.grid.steps() {
            return Err(SimError::IndexOutOfRange {
                index: k,
                len: self.grid.steps() + 1,
            });
        }
        EmpiricalMeasure::uniform(self.dim, self.state(k).to_vec(), self.mass)
    }
}

/// One in-place Euler--Maruyama update of all particle states:
/// `X_i += b dt + sigma dW + alpha dB_i`, same `dW` for every particle.
///
/// `states` is `n x d`, `db` is the matching `n x d` block of idiosyncratic
/// increments, `dw` the common increment.
pub fn euler_step(
    coeffs: &CoefficientSet,
    states: &mut [f64],
    mu: &EmpiricalMeasure,
    dw: &[f64],
    db: &[f64],
    t: f64,
    dt: f64,
    psd_tol: f64,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(SimError::InvalidConfig(format!("need dt > 0, got {dt}")));
    }
    let d = coeffs.dim_x();
    let dwd = coeffs.dim_w();
    debug_assert_eq!(states.len(), db.len());
    debug_assert_eq!(dw.len(), dwd);
    let first_err: Mutex<Option<(usize, SimError)>> = Mutex::new(None);
    exec::for_each_chunk_mut(states, BLOCK * d, |blk, chunk| {
        let mut a = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        let mut sig = vec![0.0; d * dwd];
        let mut alpha = vec![0.0; d * d];
        let mut m = Vec::new();
        let mut work = EigenWork::default();
        let first = blk * BLOCK;
        for (local, x) in chunk.chunks_mut(d).enumerate() {
            let i = first + local;
            coeffs.b_into(t, x, mu, &mut b);
            coeffs.sigma_into(t, x, mu, &mut sig);
            coeffs.a_into(t, x, mu, &mut a);
            if let Err(eig) =
                alpha_from_parts(d, dwd, &a, &sig, psd_tol, &mut m, &mut work, &mut alpha)
            {
                let mut slot = first_err.lock().unwrap();
                if slot.as_ref().map_or(true, |(j, _)| i < *j) {
                    *slot = Some((
                        i,
                        SimError::ParabolicityViolation {
                            t,
                            x: x.to_vec(),
                            eigenvalue: eig,
                            tolerance: psd_tol,
                        },
                    ));
                }
                return;
            }
            for (xj, bj) in x.iter_mut().zip(&b) {
                *xj += bj * dt;
            }
            mat_vec_add(d, dwd, &sig, dw, x);
            mat_vec_add(d, d, &alpha, &db[i * d..(i + 1) * d], x);
        }
    });
    match first_err.into_inner().unwrap() {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}

/// Where the coefficients read their measure argument from during a run.
enum MeasureSource<'a> {
    /// The live empirical cloud of the system itself (interacting run).
    Live,
    /// A frozen trajectory, one measure per grid point.
    Frozen(&'a [EmpiricalMeasure]),
}

fn drive(
    coeffs: &CoefficientSet,
    noise: &Arc<NoiseBundle>,
    initial: &[f64],
    mass: f64,
    source: MeasureSource<'_>,
    psd_tol: f64,
) -> Result<ParticleEnsemble> {
    let d = coeffs.dim_x();
    let n = noise.n_particles();
    let grid = noise.grid();
    if noise.dim_x() != d || noise.dim_w() != coeffs.dim_w() {
        return Err(SimError::DimensionMismatch {
            expected: d,
            got: noise.dim_x(),
        });
    }
    if initial.len() != n * d {
        return Err(SimError::DimensionMismatch {
            expected: n * d,
            got: initial.len(),
        });
    }
    if let MeasureSource::Frozen(laws) = &source {
        if laws.len() != grid.steps() + 1 {
            return Err(SimError::GridMismatch(format!(
                "frozen trajectory has {} laws for {} grid points",
                laws.len(),
                grid.steps() + 1
            )));
        }
    }
    let row = n * d;
    let steps = grid.steps();
    let mut states = vec![0.0; (steps + 1) * row];
    states[..row].copy_from_slice(initial);
    for k in 0..steps {
        let (done, rest) = states.split_at_mut((k + 1) * row);
        let cur = &done[k * row..];
        let next = &mut rest[..row];
        next.copy_from_slice(cur);
        let live;
        let mu = match &source {
            MeasureSource::Live => {
                live = EmpiricalMeasure::uniform(d, cur.to_vec(), mass)?;
                &live
            }
            MeasureSource::Frozen(laws) => &laws[k],
        };
        euler_step(
            coeffs,
            next,
            mu,
            noise.dw(k),
            noise.db_step(k),
            grid.t(k),
            grid.dt(),
            psd_tol,
        )?;
    }
    Ok(ParticleEnsemble {
        dim: d,
        n,
        grid,
        mass,
        states,
        noise: Arc::clone(noise),
    })
}

/// Runs the interacting system: at every step the coefficients see the
/// current empirical measure scaled to mass `r`. Deterministic given the
/// bundle's seeds.
pub fn run_particle_system(
    coeffs: &CoefficientSet,
    noise: &Arc<NoiseBundle>,
    initial_law: &InitialLaw,
    mass: f64,
) -> Result<ParticleEnsemble> {
    let initial = initial_law.sample_cloud(&noise.init_stream(), noise.n_particles());
    run_particle_system_from(coeffs, noise, &initial, mass)
}

/// Interacting run from explicit initial states.
pub fn run_particle_system_from(
    coeffs: &CoefficientSet,
    noise: &Arc<NoiseBundle>,
    initial: &[f64],
    mass: f64,
) -> Result<ParticleEnsemble> {
    drive(coeffs, noise, initial, mass, MeasureSource::Live, DEFAULT_PSD_TOL)
}

/// Runs the frozen-coefficient system: the measure argument at step `k` is
/// `laws[k]`, never the live cloud.
pub fn run_frozen_system(
    coeffs: &CoefficientSet,
    laws: &[EmpiricalMeasure],
    noise: &Arc<NoiseBundle>,
    initial: &[f64],
    mass: f64,
) -> Result<ParticleEnsemble> {
    drive(
        coeffs,
        noise,
        initial,
        mass,
        MeasureSource::Frozen(laws),
        DEFAULT_PSD_TOL,
    )
}

/// Heun (midpoint) stepping for the Stratonovich dynamics
/// `dX = sigma(X, L^N) o dW`; only the diffusion of `coeffs` is used, and
/// the measure argument is midpoint-evaluated along with the state.
pub fn run_stratonovich_system(
    coeffs: &CoefficientSet,
    noise: &Arc<NoiseBundle>,
    initial: &[f64],
    mass: f64,
) -> Result<ParticleEnsemble> {
    let d = coeffs.dim_x();
    let dwd = coeffs.dim_w();
    let n = noise.n_particles();
    let grid = noise.grid();
    if initial.len() != n * d {
        return Err(SimError::DimensionMismatch {
            expected: n * d,
            got: initial.len(),
        });
    }
    let row = n * d;
    let steps = grid.steps();
    let mut states = vec![0.0; (steps + 1) * row];
    states[..row].copy_from_slice(initial);
    let mut predictor = vec![0.0; row];
    let mut euler_part = vec![0.0; row];
    for k in 0..steps {
        let t = grid.t(k);
        let dt = grid.dt();
        let dw = noise.dw(k);
        let (done, rest) = states.split_at_mut((k + 1) * row);
        let cur = &done[k * row..];
        let next = &mut rest[..row];
        let mu = EmpiricalMeasure::uniform(d, cur.to_vec(), mass)?;
        // predictor: Euler proposal under the start-of-step measure
        {
            let mu = &mu;
            let cur = &*cur;
            exec::for_each_chunk_mut(&mut euler_part, BLOCK * d, |blk, chunk| {
                let mut sig = vec![0.0; d * dwd];
                let first = blk * BLOCK * d;
                for (off, x) in chunk.chunks_mut(d).enumerate() {
                    let base = first + off * d;
                    coeffs.sigma_into(t, &cur[base..base + d], mu, &mut sig);
                    x.fill(0.0);
                    mat_vec_add(d, dwd, &sig, dw, x);
                }
            });
        }
        for i in 0..row {
            predictor[i] = cur[i] + euler_part[i];
        }
        let mu_mid = EmpiricalMeasure::uniform(d, predictor.clone(), mass)?;
        {
            let mu_mid = &mu_mid;
            let cur = &*cur;
            let predictor = &predictor;
            let euler_part = &euler_part;
            exec::for_each_chunk_mut(next, BLOCK * d, |blk, chunk| {
                let mut sig = vec![0.0; d * dwd];
                let mut corr = vec![0.0; d];
                let first = blk * BLOCK * d;
                for (off, x) in chunk.chunks_mut(d).enumerate() {
                    let base = first + off * d;
                    coeffs.sigma_into(t + dt, &predictor[base..base + d], mu_mid, &mut sig);
                    corr.fill(0.0);
                    mat_vec_add(d, dwd, &sig, dw, &mut corr);
                    for j in 0..d {
                        x[j] = cur[base + j] + 0.5 * (euler_part[base + j] + corr[j]);
                    }
                }
            });
        }
    }
    Ok(ParticleEnsemble {
        dim: d,
        n,
        grid,
        mass,
        states,
        noise: Arc::clone(noise),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::families;
    use approx::assert_abs_diff_eq;

    fn bundle(n: usize, steps: usize, dt: f64, seed: u64) -> Arc<NoiseBundle> {
        let grid = TimeGrid::new(dt, steps).unwrap();
        Arc::new(NoiseBundle::generate(grid, n, 1, 1, seed))
    }

    fn gaussian01() -> InitialLaw {
        InitialLaw::Gaussian {
            mean: vec![0.0],
            std: vec![1.0],
        }
    }

    #[test]
    fn zero_dynamics_is_constant() {
        let coeffs = families::constant(1, 1, &[0.0], &[0.0], &[0.0]);
        let noise = bundle(5, 20, 0.1, 1);
        let ens = run_particle_system(&coeffs, &noise, &gaussian01(), 1.0).unwrap();
        assert_eq!(ens.state(0), ens.state(20));
    }

    #[test]
    fn deterministic_drift_shifts_everyone() {
        let coeffs = families::constant(1, 1, &[0.0], &[1.0], &[0.0]);
        let noise = bundle(7, 1, 0.1, 2);
        let ens = run_particle_system(&coeffs, &noise, &gaussian01(), 1.0).unwrap();
        for i in 0..7 {
            assert_abs_diff_eq!(
                ens.position(1, i)[0] - ens.position(0, i)[0],
                0.1,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn constant_sigma_telescopes_exactly() {
        // X_T = X_0 + sigma0 * sum dW for every particle: Euler is exact
        // for constant coefficients.
        let sigma0 = 0.7;
        let coeffs = families::shift(1, 1, sigma0);
        let noise = bundle(6, 50, 0.02, 3);
        let ens = run_particle_system(&coeffs, &noise, &gaussian01(), 1.0).unwrap();
        let w = noise.w_path();
        for k in [10usize, 27, 50] {
            for i in 0..6 {
                let expect = ens.position(0, i)[0] + sigma0 * w[k];
                assert_abs_diff_eq!(ens.position(k, i)[0], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mean_reversion_preserves_empirical_mean() {
        // sigma = alpha = 0: the drift beta(mean - x) sums to zero across
        // the cloud, so the empirical mean is constant in time.
        let coeffs = families::mean_reversion(1, 1, 1.3, 0.0, 0.0, 1.0);
        let noise = bundle(64, 100, 0.01, 4);
        let ens = run_particle_system(&coeffs, &noise, &gaussian01(), 1.0).unwrap();
        let m0 = ens.empirical_law(0).unwrap().mean()[0];
        for k in [1usize, 50, 100] {
            let mk = ens.empirical_law(k).unwrap().mean()[0];
            assert_abs_diff_eq!(mk, m0, epsilon = 1e-12);
        }
    }

    #[test]
    fn empirical_law_weights_and_mass() {
        let coeffs = families::constant(1, 1, &[0.0], &[0.0], &[0.0]);
        let grid = TimeGrid::new(0.1, 1).unwrap();
        let noise = Arc::new(NoiseBundle::generate(grid, 2, 1, 1, 5));
        let ens =
            run_particle_system_from(&coeffs, &noise, &[0.0, 2.0], 1.0).unwrap();
        let law = ens.empirical_law(0).unwrap();
        assert_eq!(law.len(), 2);
        assert_abs_diff_eq!(law.weight(0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(law.mass(), 1.0, epsilon = 1e-15);

        let noise3 = Arc::new(NoiseBundle::generate(grid, 3, 1, 1, 6));
        let ens3 = run_particle_system_from(&coeffs, &noise3, &[0.0, 1.0, 2.0], 3.0).unwrap();
        let law3 = ens3.empirical_law(1).unwrap();
        assert_abs_diff_eq!(law3.weight(0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(law3.mass(), 3.0, epsilon = 1e-12);
        assert!(ens3.empirical_law(2).is_err());
    }

    #[test]
    fn mass_conserved_at_every_step() {
        let coeffs = families::mean_reversion(1, 1, 0.8, 0.4, 0.5, 2.5);
        let noise = bundle(32, 40, 0.01, 7);
        let ens = run_particle_system(&coeffs, &noise, &gaussian01(), 2.5).unwrap();
        for k in 0..=40 {
            let law = ens.empirical_law(k).unwrap();
            assert_abs_diff_eq!(law.weights().iter().sum::<f64>(), 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_seeds_identical_trajectories_across_exec_modes() {
        let coeffs = families::mean_reversion(1, 1, 1.0, 0.5, 0.6, 1.0);
        let run = |parallel: bool| {
            crate::exec::set_parallel(parallel);
            let noise = bundle(33, 25, 0.02, 11);
            let ens = run_particle_system(&coeffs, &noise, &gaussian01(), 1.0).unwrap();
            crate::exec::set_parallel(true);
            ens.states
        };
        assert_eq!(run(true), run(false));
    }

    fn permuted_run(
        coeffs: &CoefficientSet,
        perm: &[usize],
        seed: u64,
    ) -> (ParticleEnsemble, ParticleEnsemble) {
        let grid = TimeGrid::new(0.02, 30).unwrap();
        let n = perm.len();
        let base = NoiseBundle::generate(grid, n, 1, 1, seed);
        let initial: Vec<f64> = (0..n).map(|i| i as f64 * 0.3 - 1.0).collect();
        let mut db_perm = vec![0.0; n * grid.steps()];
        for k in 0..grid.steps() {
            for (new_i, &old_i) in perm.iter().enumerate() {
                db_perm[k * n + new_i] = base.db(old_i, k)[0];
            }
        }
        let dw: Vec<f64> = (0..grid.steps()).flat_map(|k| base.dw(k).to_vec()).collect();
        let permuted =
            Arc::new(NoiseBundle::from_parts(grid, n, 1, 1, dw, db_perm, 0, 0, 0).unwrap());
        let init_perm: Vec<f64> = perm.iter().map(|&i| initial[i]).collect();
        let base = Arc::new(base);
        let ens = run_particle_system_from(coeffs, &base, &initial, 1.0).unwrap();
        let ens_p = run_particle_system_from(coeffs, &permuted, &init_perm, 1.0).unwrap();
        (ens, ens_p)
    }

    #[test]
    fn exchangeability_under_particle_permutation() {
        // Permuting initial states and their dB streams permutes the
        // trajectories: bit-exactly for measure-free coefficients, and up
        // to the summation order inside the empirical measure otherwise.
        let perm = [3usize, 0, 7, 1, 5, 2, 6, 4];
        let free = families::shift(1, 1, 0.8);
        let (ens, ens_p) = permuted_run(&free, &perm, 13);
        for k in 0..=30 {
            for (new_i, &old_i) in perm.iter().enumerate() {
                assert_eq!(ens_p.position(k, new_i)[0], ens.position(k, old_i)[0]);
            }
        }
        let interacting = families::mean_reversion(1, 1, 0.9, 0.3, 0.4, 1.0);
        let (ens, ens_p) = permuted_run(&interacting, &perm, 13);
        for k in 0..=30 {
            for (new_i, &old_i) in perm.iter().enumerate() {
                assert_abs_diff_eq!(
                    ens_p.position(k, new_i)[0],
                    ens.position(k, old_i)[0],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn parabolicity_violation_surfaces_from_stepping() {
        let coeffs = families::linear_local(1.0, 0.0, 0.0);
        let noise = bundle(4, 5, 0.1, 17);
        let err = run_particle_system_from(&coeffs, &noise, &[1.0, 2.0, 3.0, 4.0], 1.0)
            .unwrap_err();
        assert!(matches!(err, SimError::ParabolicityViolation { .. }));
    }

    #[test]
    fn euler_weak_order_one_in_dt() {
        // Mean-field OU with alpha0 = 0: the cloud variance contracts
        // deterministically, v_M = v_0 (1 - beta dt)^{2M} under Euler
        // against v_0 e^{-2 beta T} in the limit, so the bias of
        // E<mu_T, x^2> about the mean halves cleanly with dt.
        let beta = 1.0;
        let t_end = 1.0f64;
        let n = 256;
        let mut biases = Vec::new();
        for &dt in &[0.1, 0.05, 0.025] {
            let steps = (t_end / dt).round() as usize;
            let coeffs = families::mean_reversion(1, 1, beta, 0.5, 0.0, 1.0);
            let noise = bundle(n, steps, dt, 19);
            let ens = run_particle_system(&coeffs, &noise, &gaussian01(), 1.0).unwrap();
            let v0 = ens.empirical_law(0).unwrap().variance()[0];
            let v_hat = ens.empirical_law(steps).unwrap().variance()[0];
            let v_cont = v0 * (-2.0 * beta * t_end).exp();
            biases.push((v_hat - v_cont).abs());
        }
        for pair in biases.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!(
                (1.8..2.2).contains(&ratio),
                "weak-order ratio {ratio}, biases {biases:?}"
            );
        }
    }

    #[test]
    fn stratonovich_heun_matches_ito_for_constant_sigma() {
        // constant sigma: predictor and corrector diffusions coincide, so
        // Heun degenerates to the exact translation
        let sigma0 = 0.9;
        let coeffs = families::constant(1, 1, &[0.5 * sigma0 * sigma0], &[0.0], &[sigma0]);
        let noise = bundle(5, 30, 0.02, 23);
        let initial = [0.1, -0.4, 0.9, 2.0, -1.3];
        let strat = run_stratonovich_system(&coeffs, &noise, &initial, 1.0).unwrap();
        let ito = run_particle_system_from(&coeffs, &noise, &initial, 1.0).unwrap();
        for k in 0..=30 {
            for i in 0..5 {
                assert_abs_diff_eq!(
                    strat.position(k, i)[0],
                    ito.position(k, i)[0],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn initial_law_moments() {
        let law = InitialLaw::Gaussian {
            mean: vec![0.5],
            std: vec![2.0],
        };
        let stream = NormalStream::new(3141, crate::rng::role::INITIAL);
        let cloud = law.sample_cloud(&stream, 50_000);
        let m = EmpiricalMeasure::uniform(1, cloud, 1.0).unwrap();
        assert_abs_diff_eq!(m.mean()[0], 0.5, epsilon = 0.05);
        assert_abs_diff_eq!(m.variance()[0], 4.0, epsilon = 0.15);

        let rr = InitialLaw::AtomsRoundRobin {
            dim: 1,
            points: vec![-1.0, 1.0],
        };
        let cloud = rr.sample_cloud(&stream, 10);
        assert_eq!(cloud.iter().filter(|&&x| x == 1.0).count(), 5);
    }
}
