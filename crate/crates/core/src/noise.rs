//! Time grids and reproducible Brownian increment bundles.

use crate::error::{Result, SimError};
use crate::exec;
use crate::rng::{derive_seed, role, NormalStream};

/// Uniform grid `0 = t_0 < t_1 < ... < t_M = T` with step `dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || steps == 0 {
            return Err(SimError::InvalidConfig(format!(
                "need dt > 0 and steps >= 1, got dt={dt}, steps={steps}"
            )));
        }
        Ok(TimeGrid { dt, steps })
    }

    /// Grid covering `[0, t_end]`; `t_end / dt` must be integral within 1e-9.
    pub fn from_horizon(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_end > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "need dt > 0 and t_end > 0, got dt={dt}, t_end={t_end}"
            )));
        }
        let ratio = t_end / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return Err(SimError::InvalidConfig(format!(
                "t_end/dt = {ratio} is not an integer step count"
            )));
        }
        TimeGrid::new(dt, steps as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps M; the grid has M+1 points.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    /// Grid index of time `t`, which must sit on the grid within 1e-9.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if (t - k * self.dt).abs() > 1e-9 * t.abs().max(1.0) || k < 0.0 || k > self.steps as f64 {
            return Err(SimError::GridMismatch(format!(
                "time {t} is not a grid point (dt={}, steps={})",
                self.dt, self.steps
            )));
        }
        Ok(k as usize)
    }
}

/// One common-noise increment path plus `N` idiosyncratic increment paths
/// on a shared grid, all regenerable bit-exactly from the seeds.
#[derive(Clone, Debug)]
pub struct NoiseBundle {
    grid: TimeGrid,
    n_particles: usize,
    dim_x: usize,
    dim_w: usize,
    /// steps x dim_w
    dw: Vec<f64>,
    /// steps x n_particles x dim_x (step-major so a step is one slice)
    db: Vec<f64>,
    w_seed: u64,
    b_seed: u64,
    init_seed: u64,
}

impl NoiseBundle {
    /// Derives the three stream seeds from one master seed.
    pub fn generate(grid: TimeGrid, n: usize, d: usize, dw: usize, master_seed: u64) -> Self {
        Self::with_seeds(
            grid,
            n,
            d,
            dw,
            derive_seed(master_seed, TAG_COMMON),
            derive_seed(master_seed, TAG_IDIOSYNCRATIC),
            derive_seed(master_seed, TAG_INITIAL),
        )
    }

    /// Full control over the stream seeds; sharing `w_seed` across bundles
    /// conditions several runs on the same common path.
    pub fn with_seeds(
        grid: TimeGrid,
        n: usize,
        d: usize,
        dw_dim: usize,
        w_seed: u64,
        b_seed: u64,
        init_seed: u64,
    ) -> Self {
        let steps = grid.steps();
        let sqrt_dt = grid.dt().sqrt();
        let mut dw = vec![0.0; steps * dw_dim];
        let w_stream = NormalStream::new(w_seed, role::COMMON);
        exec::for_each_chunk_mut(&mut dw, dw_dim, |k, row| {
            w_stream.fill_normals(0, k as u32, row);
            for v in row.iter_mut() {
                *v *= sqrt_dt;
            }
        });
        let mut db = vec![0.0; n * steps * d];
        let b_stream = NormalStream::new(b_seed, role::IDIOSYNCRATIC);
        exec::for_each_chunk_mut(&mut db, n * d, |k, row| {
            for (i, cell) in row.chunks_mut(d).enumerate() {
                b_stream.fill_normals(i as u32, k as u32, cell);
                for v in cell.iter_mut() {
                    *v *= sqrt_dt;
                }
            }
        });
        NoiseBundle {
            grid,
            n_particles: n,
            dim_x: d,
            dim_w: dw_dim,
            dw,
            db,
            w_seed,
            b_seed,
            init_seed,
        }
    }

    /// Builds a bundle from explicit increment arrays (tests and couplings).
    pub fn from_parts(
        grid: TimeGrid,
        n: usize,
        d: usize,
        dw_dim: usize,
        dw: Vec<f64>,
        db: Vec<f64>,
        w_seed: u64,
        b_seed: u64,
        init_seed: u64,
    ) -> Result<Self> {
        if dw.len() != grid.steps() * dw_dim || db.len() != n * grid.steps() * d {
            return Err(SimError::GridMismatch(
                "increment arrays do not match the grid".into(),
            ));
        }
        Ok(NoiseBundle {
            grid,
            n_particles: n,
            dim_x: d,
            dim_w: dw_dim,
            dw,
            db,
            w_seed,
            b_seed,
            init_seed,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_w(&self) -> usize {
        self.dim_w
    }

    pub fn w_seed(&self) -> u64 {
        self.w_seed
    }

    pub fn b_seed(&self) -> u64 {
        self.b_seed
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Common increment over step `k`.
    pub fn dw(&self, k: usize) -> &[f64] {
        &self.dw[k * self.dim_w..(k + 1) * self.dim_w]
    }

    /// Idiosyncratic increment of particle `i` over step `k`.
    pub fn db(&self, i: usize, k: usize) -> &[f64] {
        let base = (k * self.n_particles + i) * self.dim_x;
        &self.db[base..base + self.dim_x]
    }

    /// All idiosyncratic increments of step `k`, `n_particles x dim_x`.
    pub fn db_step(&self, k: usize) -> &[f64] {
        let row = self.n_particles * self.dim_x;
        &self.db[k * row..(k + 1) * row]
    }

    /// Cumulative common path W at every grid point, `(steps+1) x dim_w`.
    pub fn w_path(&self) -> Vec<f64> {
        let steps = self.grid.steps();
        let dw = self.dim_w;
        let mut w = vec![0.0; (steps + 1) * dw];
        for k in 0..steps {
            for c in 0..dw {
                w[(k + 1) * dw + c] = w[k * dw + c] + self.dw[k * dw + c];
            }
        }
        w
    }

    /// Aggregates increments in groups of `factor`: the same Brownian paths
    /// on a grid `factor` times coarser. Used by refinement studies so that
    /// all levels share one realization.
    pub fn coarsen(&self, factor: usize) -> Result<NoiseBundle> {
        let steps = self.grid.steps();
        if factor == 0 || steps % factor != 0 {
            return Err(SimError::GridMismatch(format!(
                "cannot coarsen {steps} steps by factor {factor}"
            )));
        }
        let new_steps = steps / factor;
        let grid = TimeGrid::new(self.grid.dt() * factor as f64, new_steps)?;
        let dwd = self.dim_w;
        let d = self.dim_x;
        let mut dw = vec![0.0; new_steps * dwd];
        for k in 0..new_steps {
            for f in 0..factor {
                for c in 0..dwd {
                    dw[k * dwd + c] += self.dw[(k * factor + f) * dwd + c];
                }
            }
        }
        let mut db = vec![0.0; self.n_particles * new_steps * d];
        for k in 0..new_steps {
            for f in 0..factor {
                for i in 0..self.n_particles {
                    let src = ((k * factor + f) * self.n_particles + i) * d;
                    let dst = (k * self.n_particles + i) * d;
                    for c in 0..d {
                        db[dst + c] += self.db[src + c];
                    }
                }
            }
        }
        Ok(NoiseBundle {
            grid,
            n_particles: self.n_particles,
            dim_x: d,
            dim_w: dwd,
            dw,
            db,
            w_seed: self.w_seed,
            b_seed: self.b_seed,
            init_seed: self.init_seed,
        })
    }

    /// Stream for sampling initial states of this bundle's particles.
    pub fn init_stream(&self) -> NormalStream {
        NormalStream::new(self.init_seed, role::INITIAL)
    }
}

const TAG_COMMON: u64 = 0x57;
const TAG_IDIOSYNCRATIC: u64 = 0x42;
const TAG_INITIAL: u64 = 0x49;
