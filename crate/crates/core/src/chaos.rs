//! Quantitative convergence and conditional propagation-of-chaos harness:
//! empirical-law error rates in N, pairwise factorization gaps given the
//! common path, and conditional martingale statistics for the stochastic
//! integrals against `B` and `W`.

use std::sync::Arc;

use crate::coeffs::CoefficientSet;
use crate::error::{Result, SimError};
use crate::exec;
use crate::linalg::linear_fit;
use crate::measures::TestFunction;
use crate::noise::{NoiseBundle, TimeGrid};
use crate::rng::{derive_seed, role, NormalStream};
use crate::simulate::{run_particle_system, InitialLaw, ParticleEnsemble};

/// Log-log fit of empirical errors against sample size.
#[derive(Clone, Debug)]
pub struct RateFit {
    pub sample_sizes: Vec<usize>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
}

impl RateFit {
    /// Least squares on `(ln N, ln e)`. Needs at least 3 distinct sizes and
    /// strictly positive errors.
    pub fn fit(sample_sizes: &[usize], errors: &[f64]) -> Result<Self> {
        if sample_sizes.len() != errors.len() {
            return Err(SimError::DimensionMismatch {
                expected: sample_sizes.len(),
                got: errors.len(),
            });
        }
        let mut distinct = sample_sizes.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(SimError::InvalidConfig(
                "rate fit needs at least 3 distinct sample sizes".into(),
            ));
        }
        if errors.iter().any(|&e| !(e > 0.0)) {
            return Err(SimError::InvalidConfig(
                "rate fit needs strictly positive errors".into(),
            ));
        }
        let x: Vec<f64> = sample_sizes.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = errors.iter().map(|&e| e.ln()).collect();
        let (slope, intercept, slope_std_error) = linear_fit(&x, &y);
        Ok(RateFit {
            sample_sizes: sample_sizes.to_vec(),
            errors: errors.to_vec(),
            slope,
            intercept,
            slope_std_error,
        })
    }
}

/// Where the limiting value `<mu_t, phi>` comes from.
pub enum RateReference<'a> {
    /// Closed form per conditioned path: `(bundle, t_index) -> <mu_t, phi>`.
    ClosedForm(&'a (dyn Fn(&NoiseBundle, usize) -> f64 + Sync)),
    /// A high-N run on the same common path stands in for the limit.
    HighN { n_ref: usize },
}

/// Model plus observable for a convergence-rate study.
pub struct RateExperiment<'a> {
    pub coeffs: &'a CoefficientSet,
    pub initial_law: &'a InitialLaw,
    pub mass: f64,
    pub grid: TimeGrid,
    pub phi: &'a TestFunction,
    pub t_index: usize,
}

fn seed3(master: u64, a: u64, b: u64, c: u64) -> u64 {
    derive_seed(derive_seed(derive_seed(master, a), b), c)
}

/// Measures `e(N) = mean over paths of |<L^N_t, phi> - <mu_t, phi>|` and
/// fits the log-log slope. Within one path all N-cells share the common
/// increments; idiosyncratic increments and initial states are fresh per
/// cell.
pub fn convergence_rate(
    exp: &RateExperiment<'_>,
    sample_sizes: &[usize],
    m_paths: usize,
    reference: &RateReference<'_>,
    master_seed: u64,
) -> Result<RateFit> {
    let max_n = sample_sizes.iter().copied().max().unwrap_or(0);
    if let RateReference::HighN { n_ref } = reference {
        if *n_ref < 8 * max_n {
            return Err(SimError::ReferenceQuality {
                n_ref: *n_ref,
                required: 8 * max_n,
            });
        }
    }
    let d = exp.coeffs.dim_x();
    let dw = exp.coeffs.dim_w();
    let per_path = exec::try_map_indexed(m_paths, |p| -> Result<Vec<f64>> {
        let p64 = p as u64;
        let w_seed = seed3(master_seed, 1, p64, 0);
        let reference_value = match reference {
            RateReference::ClosedForm(f) => {
                // any cell bundle carries the same common path; build a
                // tiny one just for W
                let probe =
                    NoiseBundle::with_seeds(exp.grid, 1, d, dw, w_seed, seed3(master_seed, 9, p64, 0), 0);
                f(&probe, exp.t_index)
            }
            RateReference::HighN { n_ref } => {
                let noise = Arc::new(NoiseBundle::with_seeds(
                    exp.grid,
                    *n_ref,
                    d,
                    dw,
                    w_seed,
                    seed3(master_seed, 2, p64, u64::MAX),
                    seed3(master_seed, 3, p64, u64::MAX),
                ));
                let ens = run_particle_system(exp.coeffs, &noise, exp.initial_law, exp.mass)?;
                ens.empirical_law(exp.t_index)?.integrate(exp.phi)?
            }
        };
        let mut gaps = Vec::with_capacity(sample_sizes.len());
        for (q, &n) in sample_sizes.iter().enumerate() {
            let noise = Arc::new(NoiseBundle::with_seeds(
                exp.grid,
                n,
                d,
                dw,
                w_seed,
                seed3(master_seed, 2, p64, q as u64),
                seed3(master_seed, 3, p64, q as u64),
            ));
            let ens = run_particle_system(exp.coeffs, &noise, exp.initial_law, exp.mass)?;
            let v = ens.empirical_law(exp.t_index)?.integrate(exp.phi)?;
            gaps.push((v - reference_value).abs());
        }
        Ok(gaps)
    })?;
    let errors: Vec<f64> = (0..sample_sizes.len())
        .map(|q| per_path.iter().map(|g| g[q]).sum::<f64>() / m_paths as f64)
        .collect();
    RateFit::fit(sample_sizes, &errors)
}

/// Reference marginals for the factorization gap.
pub enum ChaosReference<'a> {
    /// Use the ensemble's own empirical marginals (isolates the pair-average
    /// combinatorics; the gap is O(1/N) for conditionally independent
    /// particles).
    SelfEmpirical,
    /// Mass-normalized closed-form marginals per path:
    /// `path index -> (<mu_t, phi1>/r, <mu_t, phi2>/r)`.
    PerPath(&'a (dyn Fn(usize) -> (f64, f64) + Sync)),
}

#[derive(Clone, Debug)]
pub struct ChaosGapReport {
    /// Outer average of the absolute factorization gap.
    pub gap: f64,
    pub std_error: f64,
    pub per_path_gaps: Vec<f64>,
}

/// Conditional factorization gap
/// `E | E[phi1(X^1) phi2(X^2) | W] - <mu_t, phi1> <mu_t, phi2> |`
/// in probability normalization. The inner conditional expectation is the
/// exchangeable average over ordered particle pairs, computed in O(N).
pub fn conditional_chaos_gap(
    ensembles: &[ParticleEnsemble],
    phi1: &TestFunction,
    phi2: &TestFunction,
    t_index: usize,
    reference: &ChaosReference<'_>,
) -> Result<ChaosGapReport> {
    if ensembles.is_empty() {
        return Err(SimError::InvalidConfig("no ensembles given".into()));
    }
    let gaps = exec::try_map_indexed(ensembles.len(), |p| -> Result<f64> {
        let ens = &ensembles[p];
        let n = ens.n_particles();
        if n < 2 {
            return Err(SimError::InsufficientSamples(n));
        }
        let nf = n as f64;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut s12 = 0.0;
        for i in 0..n {
            let x = ens.position(t_index, i);
            let (v1, v2) = (phi1.eval(x), phi2.eval(x));
            if !v1.is_finite() || !v2.is_finite() {
                return Err(SimError::NonFiniteValue {
                    name: phi1.name().to_string(),
                    point: x.to_vec(),
                });
            }
            s1 += v1;
            s2 += v2;
            s12 += v1 * v2;
        }
        s1 /= nf;
        s2 /= nf;
        s12 /= nf;
        // average of phi1(X_i) phi2(X_j) over ordered pairs i != j
        let pair = (nf * s1 * s2 - s12) / (nf - 1.0);
        let (r1, r2) = match reference {
            ChaosReference::SelfEmpirical => (s1, s2),
            ChaosReference::PerPath(f) => f(p),
        };
        Ok(pair - r1 * r2)
    })?;
    let m = gaps.len() as f64;
    let abs: Vec<f64> = gaps.iter().map(|g| g.abs()).collect();
    let gap = abs.iter().sum::<f64>() / m;
    let std_error = if gaps.len() >= 2 {
        let var = abs.iter().map(|g| (g - gap) * (g - gap)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok(ChaosGapReport {
        gap,
        std_error,
        per_path_gaps: gaps,
    })
}

/// Bounded adapted integrand for the conditional martingale tests,
/// evaluated on scalar path values `(t, W_t, B_t)`.
pub struct YProcess {
    pub name: String,
    pub bound: f64,
    pub eval: Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
}

impl YProcess {
    pub fn constant(c: f64) -> Self {
        YProcess {
            name: format!("const({c})"),
            bound: c.abs(),
            eval: Box::new(move |_, _, _| c),
        }
    }

    pub fn of_common_path(name: impl Into<String>, bound: f64, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        YProcess {
            name: name.into(),
            bound,
            eval: Box::new(move |t, w, _| f(t, w)),
        }
    }
}

pub enum MartingaleCase {
    /// `E[ int Y dB | W ] = 0`
    IdiosyncraticB,
    /// `E[ int Y dW | W ] = int E[Y | W] dW`
    CommonW,
}

#[derive(Clone, Debug)]
pub struct MartingaleReport {
    pub case_name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// estimate / std_error (0 when both vanish)
    pub z: f64,
    /// W-case only: the same-sample algebraic discrepancy between the
    /// B-averaged integral and the integral of the B-averaged integrand.
    pub raw_discrepancy: f64,
}

/// Estimates the conditional-integral statistics by resampling `B` at a
/// fixed common path (scalar `W` and `B`).
pub fn conditional_martingale_test(
    y: &YProcess,
    case: MartingaleCase,
    grid: TimeGrid,
    n_resamples: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    if n_resamples < 2 {
        return Err(SimError::InsufficientSamples(n_resamples));
    }
    let steps = grid.steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let w_stream = NormalStream::new(derive_seed(seed, 1), role::COMMON);
    let b_stream = NormalStream::new(derive_seed(seed, 2), role::IDIOSYNCRATIC);
    let mut dw = vec![0.0; steps];
    let mut w = vec![0.0; steps + 1];
    for k in 0..steps {
        dw[k] = sqrt_dt * w_stream.normal(0, k as u32, 0);
        w[k + 1] = w[k] + dw[k];
    }

    // per resample: (int Y dB, int Y dW, Y path)
    let per_sample = exec::try_map_indexed(n_resamples, |m| -> Result<(f64, f64, Vec<f64>)> {
        let mut b = 0.0;
        let mut int_db = 0.0;
        let mut int_dw = 0.0;
        let mut y_path = vec![0.0; steps];
        for k in 0..steps {
            let val = (y.eval)(grid.t(k), w[k], b);
            if val.abs() > y.bound {
                return Err(SimError::AssumptionViolation {
                    value: val.abs(),
                    bound: y.bound,
                });
            }
            let db = sqrt_dt * b_stream.normal(m as u32, k as u32, 0);
            int_db += val * db;
            int_dw += val * dw[k];
            y_path[k] = val;
            b += db;
        }
        Ok((int_db, int_dw, y_path))
    })?;

    let n = n_resamples as f64;
    match case {
        MartingaleCase::IdiosyncraticB => {
            let vals: Vec<f64> = per_sample.iter().map(|(db, _, _)| *db).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            let z = if se > 0.0 { mean / se } else { 0.0 };
            Ok(MartingaleReport {
                case_name: "idiosyncratic".into(),
                estimate: mean,
                std_error: se,
                z,
                raw_discrepancy: 0.0,
            })
        }
        MartingaleCase::CommonW => {
            // same-sample comparison: B-average of int Y dW against
            // int (B-averaged Y) dW
            let lhs = per_sample.iter().map(|(_, dw_i, _)| dw_i).sum::<f64>() / n;
            let mut rhs = 0.0;
            for k in 0..steps {
                let ybar = per_sample.iter().map(|(_, _, y)| y[k]).sum::<f64>() / n;
                rhs += ybar * dw[k];
            }
            let raw = lhs - rhs;
            // disjoint-halves z: independent estimates of the same
            // conditional quantity
            let half = n_resamples / 2;
            let mean_of = |range: std::ops::Range<usize>| {
                let len = range.len() as f64;
                let vals: Vec<f64> = range.map(|i| per_sample[i].1).collect();
                let mean = vals.iter().sum::<f64>() / len;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (len - 1.0).max(1.0);
                (mean, var / len)
            };
            let (m1, v1) = mean_of(0..half);
            let (m2, v2) = mean_of(half..n_resamples);
            let se = (v1 + v2).sqrt();
            let diff = m1 - m2;
            let z = if se > 0.0 { diff / se } else { 0.0 };
            Ok(MartingaleReport {
                case_name: "common".into(),
                estimate: diff,
                std_error: se,
                z,
                raw_discrepancy: raw,
            })
        }
    }
}
