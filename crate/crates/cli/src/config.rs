//! Experiment configuration: one JSON document per run, with every default
//! made explicit when echoed back into the report.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use mfsim_core::coeffs::{families, CoefficientSet, StratonovichSigma};
use mfsim_core::noise::TimeGrid;
use mfsim_core::simulate::InitialLaw;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Picard,
    Weakcheck,
    Duality,
    Rate,
    Chaos,
    Stratcheck,
    Assumptions,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Picard => "picard",
            ExperimentKind::Weakcheck => "weakcheck",
            ExperimentKind::Duality => "duality",
            ExperimentKind::Rate => "rate",
            ExperimentKind::Chaos => "chaos",
            ExperimentKind::Stratcheck => "stratcheck",
            ExperimentKind::Assumptions => "assumptions",
        }
    }
}

/// Built-in coefficient families, selectable by name.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelSpec {
    Constant {
        d: usize,
        d1: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        sigma: Vec<f64>,
    },
    Shift {
        d: usize,
        d1: usize,
        sigma0: f64,
    },
    LinearLocal {
        slope: f64,
        a: f64,
        b: f64,
    },
    SinLocal {
        amp: f64,
    },
    MeanReversionToConditionalMean {
        beta: f64,
        sigma0: f64,
        alpha0: f64,
    },
    ConvolutionKernelGaussian {
        amp: f64,
        length_scale: f64,
        #[serde(default)]
        omit_measure_term: bool,
    },
}

impl ModelSpec {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ModelSpec::Constant { d, d1, .. } | ModelSpec::Shift { d, d1, .. } => (*d, *d1),
            _ => (1, 1),
        }
    }

    pub fn build(&self, mass: f64) -> CoefficientSet {
        match self {
            ModelSpec::Constant { d, d1, a, b, sigma } => families::constant(*d, *d1, a, b, sigma),
            ModelSpec::Shift { d, d1, sigma0 } => families::shift(*d, *d1, *sigma0),
            ModelSpec::LinearLocal { slope, a, b } => families::linear_local(*slope, *a, *b),
            ModelSpec::SinLocal { amp } => families::sin_local(*amp),
            ModelSpec::MeanReversionToConditionalMean {
                beta,
                sigma0,
                alpha0,
            } => families::mean_reversion(1, 1, *beta, *sigma0, *alpha0, mass),
            ModelSpec::ConvolutionKernelGaussian {
                amp,
                length_scale,
                omit_measure_term,
            } => families::convolution_kernel_gaussian(*amp, *length_scale, *omit_measure_term),
        }
    }

    /// The diffusion as a local-plus-kernel object, for models inside that
    /// family (the conversion experiments need it).
    pub fn strat_sigma(&self) -> Option<StratonovichSigma> {
        match self {
            ModelSpec::SinLocal { amp } => Some(families::sin_local_sigma(*amp)),
            ModelSpec::ConvolutionKernelGaussian {
                amp, length_scale, ..
            } => Some(families::gaussian_kernel_sigma(*amp, *length_scale)),
            ModelSpec::Constant { .. } | ModelSpec::Shift { .. } => None,
            ModelSpec::LinearLocal { slope, .. } => Some(families::linear_strat_sigma(*slope)),
            ModelSpec::MeanReversionToConditionalMean { .. } => None,
        }
    }

    /// True when the dynamics carries no noise at all (`sigma = alpha = 0`).
    pub fn is_deterministic(&self) -> bool {
        match self {
            ModelSpec::Constant { a, sigma, .. } => {
                sigma.iter().all(|v| *v == 0.0) && a.iter().all(|v| *v == 0.0)
            }
            _ => false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLawSpec {
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    AtomsRoundRobin { dim: usize, points: Vec<f64> },
    AtomsSampled { dim: usize, points: Vec<f64> },
}

impl InitialLawSpec {
    pub fn build(&self) -> InitialLaw {
        match self {
            InitialLawSpec::Gaussian { mean, std } => InitialLaw::Gaussian {
                mean: mean.clone(),
                std: std.clone(),
            },
            InitialLawSpec::Uniform { lo, hi } => InitialLaw::Uniform {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            InitialLawSpec::AtomsRoundRobin { dim, points } => InitialLaw::AtomsRoundRobin {
                dim: *dim,
                points: points.clone(),
            },
            InitialLawSpec::AtomsSampled { dim, points } => InitialLaw::AtomsSampled {
                dim: *dim,
                points: points.clone(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialLawSpec::Gaussian { mean, .. } => mean.len(),
            InitialLawSpec::Uniform { lo, .. } => lo.len(),
            InitialLawSpec::AtomsRoundRobin { dim, .. } | InitialLawSpec::AtomsSampled { dim, .. } => {
                *dim
            }
        }
    }

    /// Gaussian parameters when the law is Gaussian (closed-form references
    /// need them).
    pub fn gaussian_moments(&self) -> Option<(f64, f64)> {
        match self {
            InitialLawSpec::Gaussian { mean, std } if mean.len() == 1 => {
                Some((mean[0], std[0] * std[0]))
            }
            _ => None,
        }
    }
}

fn default_mass() -> f64 {
    1.0
}
fn default_outer_paths() -> usize {
    1
}
fn default_inner_samples() -> usize {
    200
}
fn default_times() -> Vec<f64> {
    Vec::new()
}
fn default_test_functions() -> Vec<String> {
    Vec::new()
}
fn default_sample_sizes() -> Vec<usize> {
    Vec::new()
}
fn default_dt_levels() -> Vec<f64> {
    Vec::new()
}

/// Tolerances and pass thresholds; every field has an explicit default so
/// echoed configs are self-describing.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Picard stopping tolerance on the discretized trajectory metric.
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Grid resolution of the bounded-Lipschitz metric.
    pub metric_resolution: usize,
    /// Contraction factor that successive Picard gaps must not exceed
    /// (checked from iteration 2 on).
    pub contraction_ratio: f64,
    /// Oracle residual ceiling for translation-invariant models.
    pub translation_oracle: f64,
    /// z-score multiple for statistical pass rules.
    pub sigma_level: f64,
    /// Acceptance band for the log-log convergence slope.
    pub slope_band: [f64; 2],
    /// Residual refinement ratio band per dt halving.
    pub refinement_ratio_band: [f64; 2],
    /// Minimal measured strong order in the conversion experiment.
    pub min_conversion_order: f64,
    /// Multiple of dt bounding the duality gap of deterministic models.
    pub deterministic_gap_dts: f64,
    /// Martingale z-statistics: allowed fraction of |z| above sigma_level.
    pub z_violation_fraction: f64,
    /// Ceiling for the exact W-measurable martingale discrepancy.
    pub exact_discrepancy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            picard_tol: 1e-3,
            picard_max_iter: 10,
            metric_resolution: 256,
            contraction_ratio: 0.9,
            translation_oracle: 1e-12,
            sigma_level: 3.0,
            slope_band: [-0.65, -0.35],
            refinement_ratio_band: [1.4, 3.0],
            min_conversion_order: 0.5,
            deterministic_gap_dts: 5.0,
            z_violation_fraction: 0.01,
            exact_discrepancy: 1e-12,
        }
    }
}

/// One experiment run. Defaults are filled on load and echoed verbatim in
/// the report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    pub initial_law: InitialLawSpec,
    pub n_particles: usize,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_mass")]
    pub mass: f64,
    pub seed: u64,
    /// Number of independent common-noise paths.
    #[serde(default = "default_outer_paths")]
    pub outer_paths: usize,
    /// Inner idiosyncratic samples for nested Monte Carlo.
    #[serde(default = "default_inner_samples")]
    pub inner_samples: usize,
    /// Observation times (grid points); empty means `[t_end]`.
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    /// Test-function names from the standard bank; empty means the whole
    /// bank where a bank applies, or `sin(x0)` for single-phi experiments.
    #[serde(default = "default_test_functions")]
    pub test_functions: Vec<String>,
    /// Particle counts for rate/chaos sweeps.
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    /// Step sizes for refinement sweeps (coarse to fine, each dividing the
    /// previous).
    #[serde(default = "default_dt_levels")]
    pub dt_levels: Vec<f64>,
    /// Probe count for assumption audits.
    #[serde(default)]
    pub probes: usize,
    /// Repetition count for the seeded martingale level test.
    #[serde(default)]
    pub repetitions: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Optional output directory; the CLI flag takes precedence.
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).context("cannot parse experiment config")?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            bail!("invalid grid: need dt > 0 and t_end > 0 (dt={}, t_end={})", self.dt, self.t_end);
        }
        let ratio = self.t_end / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            bail!("invalid grid: t_end/dt = {ratio} is not an integer step count");
        }
        if self.n_particles == 0 {
            bail!("need n_particles >= 1");
        }
        if !(self.mass > 0.0) {
            bail!("need mass > 0, got {}", self.mass);
        }
        if self.outer_paths == 0 {
            bail!("need outer_paths >= 1");
        }
        let (d, _) = self.model.dims();
        if self.initial_law.dim() != d {
            bail!(
                "initial law dimension {} does not match model dimension {d}",
                self.initial_law.dim()
            );
        }
        Ok(())
    }

    pub fn grid(&self) -> anyhow::Result<TimeGrid> {
        Ok(TimeGrid::from_horizon(self.t_end, self.dt)?)
    }

    /// Observation times resolved to grid indices; defaults to `[t_end]`.
    pub fn time_indices(&self) -> anyhow::Result<Vec<usize>> {
        let grid = self.grid()?;
        if self.times.is_empty() {
            return Ok(vec![grid.steps()]);
        }
        let mut idx = Vec::with_capacity(self.times.len());
        for &t in &self.times {
            idx.push(grid.index_of(t)?);
        }
        Ok(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(kind: &str) -> String {
        format!(
            r#"{{
                "kind": "{kind}",
                "model": {{"name": "shift", "d": 1, "d1": 1, "sigma0": 1.0}},
                "initial_law": {{"kind": "gaussian", "mean": [0.0], "std": [1.0]}},
                "n_particles": 16,
                "dt": 0.1,
                "t_end": 1.0,
                "seed": 7
            }}"#
        )
    }

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(&minimal("simulate")).unwrap();
        assert_eq!(cfg.mass, 1.0);
        assert_eq!(cfg.outer_paths, 1);
        assert_eq!(cfg.tolerances.sigma_level, 3.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_model() {
        let bad = minimal("simulate").replace("shift", "quantum_foam");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn rejects_non_integral_grid() {
        let mut cfg = ExperimentConfig::from_json(&minimal("simulate")).unwrap();
        cfg.dt = 0.3;
        assert!(cfg.validate().is_err());
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn echo_serializes_all_defaults() {
        let cfg = ExperimentConfig::from_json(&minimal("picard")).unwrap();
        let echo = serde_json::to_value(&cfg).unwrap();
        assert!(echo.get("tolerances").is_some());
        assert!(echo["tolerances"].get("picard_tol").is_some());
        assert!(echo.get("inner_samples").is_some());
    }
}
