//! Coefficient triples `(a, b, sigma)` for measure-dependent dynamics, the
//! derived idiosyncratic diffusion `alpha`, randomized assumption audits,
//! and the Stratonovich-to-Ito drift correction for kernel diffusions.

pub mod families;

use std::sync::{Arc, Mutex};

use crate::error::{Result, SimError};
use crate::linalg::{gram, max_abs, sym_eigen, sym_psd_sqrt, symmetry_defect, EigenWork};
use crate::measures::EmpiricalMeasure;
use crate::rng::{role, NormalStream};

/// Evaluator signature shared by `a`, `b` and `sigma`: `(t, x, mu, out)`.
/// Outputs are row-major (`d x d` for `a`, `d` for `b`, `d x d_w` for
/// `sigma`). Evaluators must be pure; they are called concurrently across
/// particles.
pub type CoeffFn = dyn Fn(f64, &[f64], &EmpiricalMeasure, &mut [f64]) + Send + Sync;

/// Relative floor used when no explicit tolerance is requested: eigenvalues
/// of `2a - sigma sigma^T` down to `-DEFAULT_PSD_TOL * (1 + |2a - ss^T|)`
/// are clipped to zero.
pub const DEFAULT_PSD_TOL: f64 = 1e-10;

/// The coefficient triple of a measure-dependent diffusion together with
/// its regularity metadata.
#[derive(Clone)]
pub struct CoefficientSet {
    name: String,
    dim_x: usize,
    dim_w: usize,
    lipschitz_k: f64,
    bound_km: f64,
    a: Arc<CoeffFn>,
    b: Arc<CoeffFn>,
    sigma: Arc<CoeffFn>,
}

impl CoefficientSet {
    pub fn new(
        name: impl Into<String>,
        dim_x: usize,
        dim_w: usize,
        lipschitz_k: f64,
        bound_km: f64,
        a: Arc<CoeffFn>,
        b: Arc<CoeffFn>,
        sigma: Arc<CoeffFn>,
    ) -> Self {
        CoefficientSet {
            name: name.into(),
            dim_x,
            dim_w,
            lipschitz_k,
            bound_km,
            a,
            b,
            sigma,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_w(&self) -> usize {
        self.dim_w
    }

    pub fn lipschitz_k(&self) -> f64 {
        self.lipschitz_k
    }

    pub fn bound_km(&self) -> f64 {
        self.bound_km
    }

    pub fn a_into(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        (self.a)(t, x, mu, out)
    }

    pub fn b_into(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        (self.b)(t, x, mu, out)
    }

    pub fn sigma_into(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        (self.sigma)(t, x, mu, out)
    }

    /// `alpha = [2a - sigma sigma^T]^(1/2)` as a symmetric PSD matrix.
    ///
    /// Eigenvalues of the argument in `[-floor, 0)` are clipped to zero,
    /// where `floor = psd_tol * (1 + |2a - sigma sigma^T|)`; anything below
    /// the floor is a parabolicity violation carrying `(t, x, eigenvalue)`.
    pub fn alpha_into(
        &self,
        t: f64,
        x: &[f64],
        mu: &EmpiricalMeasure,
        psd_tol: f64,
        scratch: &mut AlphaScratch,
        out: &mut [f64],
    ) -> Result<()> {
        let d = self.dim_x;
        scratch.resize(d, self.dim_w);
        self.a_into(t, x, mu, &mut scratch.a);
        self.sigma_into(t, x, mu, &mut scratch.sigma);
        let (a, sigma) = (&scratch.a[..d * d], &scratch.sigma[..d * self.dim_w]);
        alpha_from_parts(
            d,
            self.dim_w,
            a,
            sigma,
            psd_tol,
            &mut scratch.m,
            &mut scratch.work,
            out,
        )
        .map_err(|eig| SimError::ParabolicityViolation {
            t,
            x: x.to_vec(),
            eigenvalue: eig,
            tolerance: psd_tol,
        })
    }

    /// Allocating convenience wrapper around [`alpha_into`].
    pub fn alpha(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure, psd_tol: f64) -> Result<Vec<f64>> {
        let mut scratch = AlphaScratch::default();
        let mut out = vec![0.0; self.dim_x * self.dim_x];
        self.alpha_into(t, x, mu, psd_tol, &mut scratch, &mut out)?;
        Ok(out)
    }

    /// Randomized audit of boundedness, symmetry, parabolicity and sampled
    /// Lipschitz quotients. Report-only: violations are listed, never thrown.
    pub fn check_assumptions(&self, probes: usize, seed: u64) -> AssumptionReport {
        self.check_assumptions_in(probes, seed, &ProbeRanges::default())
    }

    pub fn check_assumptions_in(
        &self,
        probes: usize,
        seed: u64,
        ranges: &ProbeRanges,
    ) -> AssumptionReport {
        let d = self.dim_x;
        let dw = self.dim_w;
        let stream = NormalStream::new(seed, role::PROBE);
        let mut rep = AssumptionReport {
            probes,
            ..AssumptionReport::default()
        };
        rep.min_parabolic_eigenvalue = f64::INFINITY;

        let mut a = vec![0.0; d * d];
        let mut a2 = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        let mut b2 = vec![0.0; d];
        let mut s = vec![0.0; d * dw];
        let mut s2 = vec![0.0; d * dw];
        let mut m = vec![0.0; d * d];
        let mut vals = vec![0.0; d];
        let mut vecs = vec![0.0; d * d];
        let mut x = vec![0.0; d];
        let mut x2 = vec![0.0; d];

        for p in 0..probes as u32 {
            let t = ranges.t_max * stream.uniform(p, 0, 0);
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = ranges.x_box * 2.0 * (stream.uniform(p, 1, j as u32) - 0.5);
            }
            let mu = random_cloud(&stream, p, d, ranges);

            self.a_into(t, &x, &mu, &mut a);
            self.b_into(t, &x, &mu, &mut b);
            self.sigma_into(t, &x, &mu, &mut s);
            rep.max_a_norm = rep.max_a_norm.max(frob(&a));
            rep.max_b_norm = rep.max_b_norm.max(frob(&b));
            rep.max_sigma_norm = rep.max_sigma_norm.max(frob(&s));
            rep.max_symmetry_defect = rep.max_symmetry_defect.max(symmetry_defect(d, &a));

            gram(d, dw, &s, &mut m);
            for (mi, &ai) in m.iter_mut().zip(a.iter()) {
                *mi = 2.0 * ai - *mi;
            }
            sym_eigen(d, &m, &mut vals, &mut vecs);
            let min_eig = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            rep.min_parabolic_eigenvalue = rep.min_parabolic_eigenvalue.min(min_eig);

            // Lipschitz quotient in x: small random displacement.
            let mut dx = 0.0;
            for (j, xj) in x2.iter_mut().enumerate() {
                let step = 0.05 * (stream.uniform(p, 2, j as u32) - 0.5);
                *xj = x[j] + step;
                dx += step * step;
            }
            let dx = dx.sqrt().max(1e-12);
            self.a_into(t, &x2, &mu, &mut a2);
            self.b_into(t, &x2, &mu, &mut b2);
            self.sigma_into(t, &x2, &mu, &mut s2);
            let diff = frob_diff(&a, &a2) + frob_diff(&b, &b2) + frob_diff(&s, &s2);
            rep.max_lipschitz_quotient_x = rep.max_lipschitz_quotient_x.max(diff / dx);

            // Lipschitz quotient in mu: move one atom and measure rho.
            if let Some((mu2, rho)) = perturbed_cloud(&stream, p, &mu) {
                self.a_into(t, &x, &mu2, &mut a2);
                self.b_into(t, &x, &mu2, &mut b2);
                self.sigma_into(t, &x, &mu2, &mut s2);
                let diff = frob_diff(&a, &a2) + frob_diff(&b, &b2) + frob_diff(&s, &s2);
                if rho > 1e-9 {
                    rep.max_lipschitz_quotient_mu = rep.max_lipschitz_quotient_mu.max(diff / rho);
                }
            }
        }

        if rep.max_symmetry_defect > 1e-12 {
            rep.violations.push(format!(
                "a is not symmetric: worst defect {:.3e}",
                rep.max_symmetry_defect
            ));
        }
        let bound = self.bound_km;
        if rep.max_a_norm > bound || rep.max_b_norm > bound || rep.max_sigma_norm > bound {
            rep.violations.push(format!(
                "boundedness exceeded: |a|={:.3e} |b|={:.3e} |sigma|={:.3e} > K_m={:.3e}",
                rep.max_a_norm, rep.max_b_norm, rep.max_sigma_norm, bound
            ));
        }
        if rep.min_parabolic_eigenvalue < -1e-9 {
            rep.violations.push(format!(
                "parabolicity violated: min eigenvalue {:.3e}",
                rep.min_parabolic_eigenvalue
            ));
        }
        let k_cap = 1.1 * self.lipschitz_k;
        if rep.max_lipschitz_quotient_x > k_cap {
            rep.violations.push(format!(
                "x-Lipschitz quotient {:.3e} exceeds 1.1*K={:.3e}",
                rep.max_lipschitz_quotient_x, k_cap
            ));
        }
        if rep.max_lipschitz_quotient_mu > k_cap {
            rep.violations.push(format!(
                "mu-Lipschitz quotient {:.3e} exceeds 1.1*K={:.3e}",
                rep.max_lipschitz_quotient_mu, k_cap
            ));
        }
        rep
    }
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("dim_x", &self.dim_x)
            .field("dim_w", &self.dim_w)
            .finish()
    }
}

/// `[2a - sigma sigma^T]^(1/2)` from already-evaluated `a` and `sigma`;
/// the stepping loops use this to avoid re-evaluating the coefficients.
/// Returns the offending eigenvalue on a parabolicity violation.
#[allow(clippy::too_many_arguments)]
pub fn alpha_from_parts(
    d: usize,
    dw: usize,
    a: &[f64],
    sigma: &[f64],
    psd_tol: f64,
    m: &mut Vec<f64>,
    work: &mut EigenWork,
    out: &mut [f64],
) -> std::result::Result<(), f64> {
    if d == 1 {
        // scalar fast path: the bulk of the experiments
        let v = 2.0 * a[0] - sigma.iter().map(|s| s * s).sum::<f64>();
        let floor = psd_tol * (1.0 + v.abs());
        if v < -floor {
            return Err(v);
        }
        out[0] = v.max(0.0).sqrt();
        return Ok(());
    }
    m.resize(d * d, 0.0);
    gram(d, dw, sigma, m);
    for (mi, &ai) in m.iter_mut().zip(a.iter()) {
        *mi = 2.0 * ai - *mi;
    }
    let floor = psd_tol * (1.0 + max_abs(m));
    sym_psd_sqrt(d, m, floor, out, work).map(|_| ())
}

/// Reusable buffers for [`CoefficientSet::alpha_into`].
#[derive(Clone, Debug, Default)]
pub struct AlphaScratch {
    a: Vec<f64>,
    sigma: Vec<f64>,
    m: Vec<f64>,
    work: EigenWork,
}

impl AlphaScratch {
    fn resize(&mut self, d: usize, dw: usize) {
        self.a.resize(d * d, 0.0);
        self.sigma.resize(d * dw, 0.0);
        self.m.resize(d * d, 0.0);
    }
}

/// Probe ranges for [`CoefficientSet::check_assumptions_in`].
#[derive(Clone, Debug)]
pub struct ProbeRanges {
    pub t_max: f64,
    pub x_box: f64,
    pub cloud_atoms: usize,
    pub cloud_spread: f64,
    pub mass: f64,
}

impl Default for ProbeRanges {
    fn default() -> Self {
        ProbeRanges {
            t_max: 1.0,
            x_box: 3.0,
            cloud_atoms: 8,
            cloud_spread: 1.5,
            mass: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AssumptionReport {
    pub probes: usize,
    pub max_a_norm: f64,
    pub max_b_norm: f64,
    pub max_sigma_norm: f64,
    pub max_symmetry_defect: f64,
    pub min_parabolic_eigenvalue: f64,
    pub max_lipschitz_quotient_x: f64,
    pub max_lipschitz_quotient_mu: f64,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn frob(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn frob_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn random_cloud(stream: &NormalStream, probe: u32, d: usize, r: &ProbeRanges) -> EmpiricalMeasure {
    let n = r.cloud_atoms;
    let mut pts = vec![0.0; n * d];
    for (j, p) in pts.iter_mut().enumerate() {
        *p = r.cloud_spread * stream.normal(probe, 3, j as u32);
    }
    EmpiricalMeasure::uniform(d, pts, r.mass).expect("probe cloud")
}

/// Moves one atom of `mu` and returns the perturbed cloud together with the
/// metric distance between the two (exact in d=1, sliced otherwise).
fn perturbed_cloud(
    stream: &NormalStream,
    probe: u32,
    mu: &EmpiricalMeasure,
) -> Option<(EmpiricalMeasure, f64)> {
    let d = mu.dim();
    let mut pts = mu.points().to_vec();
    for j in 0..d {
        pts[j] += 0.2 * (stream.uniform(probe, 4, j as u32) - 0.5);
    }
    let mu2 = EmpiricalMeasure::with_mass(d, pts, mu.weights().to_vec(), mu.mass()).ok()?;
    let rho = if d == 1 {
        crate::measures::bl_distance(mu, &mu2, 512).ok()?
    } else {
        crate::measures::bl_distance_sliced(mu, &mu2, 512, 16, 0x51ce).ok()?
    };
    Some((mu2, rho))
}

type LocalSigmaFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Measure-free diffusion part `sigma_loc(x)` with its analytic spatial
/// gradient, laid out `[i][j][k] = d_j sigma^{ik}`.
#[derive(Clone)]
pub struct LocalSigma {
    pub value: Arc<LocalSigmaFn>,
    pub grad: Arc<LocalSigmaFn>,
}

type KernelFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// Convolution-type diffusion part `sigma_ker(x, mu) = < mu, K(x, .) >`.
///
/// `grad_y` is the measure derivative in the convolution family: perturbing
/// an atom at `y` moves `sigma` by `d_y K(x, y)`. `grad_x` feeds the spatial
/// gradient needed by the drift correction; for kernels of the form
/// `K(x - y)` it is the negation of `grad_y`. Derivative tensors are
/// `[i][j][k] = d_{(.)_j} K^{ik}`.
#[derive(Clone)]
pub struct KernelSigma {
    pub kernel: Arc<KernelFn>,
    pub grad_y: Option<Arc<KernelFn>>,
    pub grad_x: Option<Arc<KernelFn>>,
}

impl KernelSigma {
    /// Worst finite-difference mismatch of `grad_y` against `kernel` at
    /// random probe pairs.
    pub fn check_grad_y(&self, d: usize, dw: usize, probes: usize, seed: u64) -> Result<f64> {
        let grad_y = self.grad_y.as_ref().ok_or(SimError::IncompleteDerivative)?;
        let stream = NormalStream::new(seed, role::PROBE);
        let eps = 1e-5;
        let mut worst = 0.0f64;
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut kp = vec![0.0; d * dw];
        let mut km = vec![0.0; d * dw];
        let mut g = vec![0.0; d * d * dw];
        for p in 0..probes as u32 {
            for j in 0..d {
                x[j] = 2.0 * stream.normal(p, 0, j as u32);
                y[j] = 2.0 * stream.normal(p, 1, j as u32);
            }
            (grad_y)(&x, &y, &mut g);
            for j in 0..d {
                let keep = y[j];
                y[j] = keep + eps;
                (self.kernel)(&x, &y, &mut kp);
                y[j] = keep - eps;
                (self.kernel)(&x, &y, &mut km);
                y[j] = keep;
                for i in 0..d {
                    for k in 0..dw {
                        let fd = (kp[i * dw + k] - km[i * dw + k]) / (2.0 * eps);
                        worst = worst.max((g[(i * d + j) * dw + k] - fd).abs());
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Diffusion given as a local part plus a kernel part; the concrete family
/// for which the drift correction is computable in closed form.
#[derive(Clone)]
pub struct StratonovichSigma {
    pub dim_x: usize,
    pub dim_w: usize,
    pub local: Option<LocalSigma>,
    pub kernel: Option<KernelSigma>,
}

impl StratonovichSigma {
    /// `sigma(x, mu) = sigma_loc(x) + < mu, K(x, .) >`
    pub fn sigma_into(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        out.fill(0.0);
        let mut buf = vec![0.0; out.len()];
        if let Some(local) = &self.local {
            (local.value)(x, out);
        }
        if let Some(ker) = &self.kernel {
            for i in 0..mu.len() {
                (ker.kernel)(x, mu.point(i), &mut buf);
                let w = mu.weight(i);
                for (o, v) in out.iter_mut().zip(&buf) {
                    *o += w * v;
                }
            }
        }
    }

    /// Spatial gradient of the full diffusion, `[i][j][k] = d_j sigma^{ik}`.
    pub fn grad_x_into(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        let mut buf = vec![0.0; out.len()];
        if let Some(local) = &self.local {
            (local.grad)(x, out);
        }
        if let Some(ker) = &self.kernel {
            let grad_x = ker.grad_x.as_ref().ok_or(SimError::IncompleteDerivative)?;
            for i in 0..mu.len() {
                (grad_x)(x, mu.point(i), &mut buf);
                let w = mu.weight(i);
                for (o, v) in out.iter_mut().zip(&buf) {
                    *o += w * v;
                }
            }
        }
        Ok(())
    }
}

/// Ito-form coefficients of the conservation-law dynamics
/// `d mu + div(mu sigma(x, mu) o dW) = 0`:
///
/// `b^i = (1/2) sigma^{jk} d_j sigma^{ik} + (1/2) G^i` and
/// `a^{ij} = (1/2) sigma^{ik} sigma^{jk}`, where
/// `G^i(x, mu) = < mu, sigma^{jk}(., mu) (d_mu sigma(x, mu)(.))^{ijk} >`
/// is the measure-derivative term, evaluated as the finite weighted sum
/// over the atoms of `mu`.
pub fn ito_from_stratonovich(
    sigma: &StratonovichSigma,
    _t: f64,
    x: &[f64],
    mu: &EmpiricalMeasure,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = sigma.dim_x;
    let dw = sigma.dim_w;
    let mut sig = vec![0.0; d * dw];
    let mut dsig = vec![0.0; d * d * dw];
    sigma.sigma_into(x, mu, &mut sig);
    sigma.grad_x_into(x, mu, &mut dsig)?;

    let mut b = vec![0.0; d];
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..d {
            for k in 0..dw {
                acc += sig[j * dw + k] * dsig[(i * d + j) * dw + k];
            }
        }
        b[i] = 0.5 * acc;
    }
    if sigma.kernel.is_some() {
        let g = lions_correction(sigma, x, mu)?;
        for (bi, gi) in b.iter_mut().zip(&g) {
            *bi += 0.5 * gi;
        }
    }

    let mut a = vec![0.0; d * d];
    gram(d, dw, &sig, &mut a);
    for v in a.iter_mut() {
        *v *= 0.5;
    }
    Ok((b, a))
}

/// Evaluates the full diffusion at every atom of `mu`, flattened
/// `n x d x d_w`. The bracket below contracts against this; computing it
/// once per measure keeps the bracket linear per query point.
pub fn sigma_at_atoms(sigma: &StratonovichSigma, mu: &EmpiricalMeasure) -> Vec<f64> {
    let width = sigma.dim_x * sigma.dim_w;
    let mut out = vec![0.0; mu.len() * width];
    for (at, chunk) in out.chunks_mut(width).enumerate() {
        sigma.sigma_into(mu.point(at), mu, chunk);
    }
    out
}

/// The bracket `G^i(x, mu) = < mu, sigma^{jk}(., mu) (d_y K(x, .))^{ijk} >`.
pub fn lions_correction(
    sigma: &StratonovichSigma,
    x: &[f64],
    mu: &EmpiricalMeasure,
) -> Result<Vec<f64>> {
    let sig_atoms = sigma_at_atoms(sigma, mu);
    lions_correction_with(sigma, x, mu, &sig_atoms)
}

/// [`lions_correction`] against precomputed atom diffusions.
pub fn lions_correction_with(
    sigma: &StratonovichSigma,
    x: &[f64],
    mu: &EmpiricalMeasure,
    sig_atoms: &[f64],
) -> Result<Vec<f64>> {
    let d = sigma.dim_x;
    let dw = sigma.dim_w;
    if sigma.kernel.is_none() {
        return Ok(vec![0.0; d]);
    }
    let ker = sigma.kernel.as_ref().unwrap();
    let grad_y = ker.grad_y.as_ref().ok_or(SimError::IncompleteDerivative)?;
    let width = d * dw;
    let mut g = vec![0.0; d];
    let mut dk = vec![0.0; d * d * dw];
    for at in 0..mu.len() {
        let y = mu.point(at);
        let w = mu.weight(at);
        let sig_y = &sig_atoms[at * width..(at + 1) * width];
        (grad_y)(x, y, &mut dk);
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                for k in 0..dw {
                    acc += sig_y[j * dw + k] * dk[(i * d + j) * dw + k];
                }
            }
            g[i] += w * acc;
        }
    }
    Ok(g)
}

/// Wraps the converted coefficients as a [`CoefficientSet`] with `alpha = 0`
/// (the converted dynamics is degenerate: `2a = sigma sigma^T` exactly).
///
/// `omit_measure_term` drops `G` from the drift; it exists solely as the
/// negative control in the conversion experiments.
pub fn ito_converted_set(
    sigma: StratonovichSigma,
    omit_measure_term: bool,
    lipschitz_k: f64,
    bound_km: f64,
    name: impl Into<String>,
) -> CoefficientSet {
    let d = sigma.dim_x;
    let dw = sigma.dim_w;
    let s1 = Arc::new(sigma);
    let s2 = Arc::clone(&s1);
    let s3 = Arc::clone(&s1);
    // one-slot memo of sigma-at-atoms keyed by the exact atom cloud; within
    // a step every particle sees the same measure snapshot
    type AtomCache = Mutex<Option<(Vec<f64>, Arc<Vec<f64>>)>>;
    let cache: Arc<AtomCache> = Arc::new(Mutex::new(None));
    let b_fn: Arc<CoeffFn> = Arc::new(move |_t, x, mu, out| {
        let mut sig = vec![0.0; d * dw];
        let mut dsig = vec![0.0; d * d * dw];
        s1.sigma_into(x, mu, &mut sig);
        s1.grad_x_into(x, mu, &mut dsig).expect("kernel x-derivative");
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                for k in 0..dw {
                    acc += sig[j * dw + k] * dsig[(i * d + j) * dw + k];
                }
            }
            out[i] = 0.5 * acc;
        }
        if !omit_measure_term && s1.kernel.is_some() {
            let sig_atoms = {
                let mut slot = cache.lock().unwrap();
                match slot.as_ref() {
                    Some((pts, cached)) if pts == mu.points() => Arc::clone(cached),
                    _ => {
                        let fresh = Arc::new(sigma_at_atoms(&s1, mu));
                        *slot = Some((mu.points().to_vec(), Arc::clone(&fresh)));
                        fresh
                    }
                }
            };
            let g =
                lions_correction_with(&s1, x, mu, &sig_atoms).expect("kernel y-derivative");
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += 0.5 * gi;
            }
        }
    });
    let a_fn: Arc<CoeffFn> = Arc::new(move |_t, x, mu, out| {
        let mut sig = vec![0.0; d * dw];
        s2.sigma_into(x, mu, &mut sig);
        gram(d, dw, &sig, out);
        for v in out.iter_mut() {
            *v *= 0.5;
        }
    });
    let sig_fn: Arc<CoeffFn> = Arc::new(move |_t, x, mu, out| {
        s3.sigma_into(x, mu, out);
    });
    CoefficientSet::new(name, d, dw, lipschitz_k, bound_km, a_fn, b_fn, sig_fn)
}
