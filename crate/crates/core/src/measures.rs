//! Finite positive measures as weighted point clouds, test functions, and
//! the metrics used to compare conditional laws.
//!
//! The central metric is the bounded-Lipschitz (Kantorovich--Rubinstein)
//! distance `rho(mu, nu) = sup { integral phi d(mu - nu) }` over functions
//! with `|phi| <= 1` and Lipschitz constant `<= 1`. In one dimension we
//! maximize exactly over the piecewise-linear subclass living on a uniform
//! grid, which lower-bounds `rho` and converges to it as the grid refines.
//! A sorted-quantile Wasserstein-1 is provided as the companion oracle for
//! equal-mass pairs (it upper-bounds the bounded-Lipschitz value).
//!
//! Note on the norm convention: the dual form used here takes the supremum
//! of the plain integral (no absolute value). On differences of measures
//! the test class is symmetric under negation, so the result is the usual
//! nonnegative metric either way.

use std::sync::OnceLock;

use crate::error::{Result, SimError};
use crate::rng::{role, NormalStream};

/// Weighted point cloud standing in for a finite positive measure on R^d
/// with total mass `r`.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    mass: f64,
    /// Lazily cached mass-normalized mean; coefficient evaluators read it
    /// once per particle, so it must not cost O(atoms) per call.
    mean_cache: OnceLock<Vec<f64>>,
}

impl EmpiricalMeasure {
    /// Builds a measure from flattened atom locations; the mass is the sum
    /// of the weights.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mass = kahan_sum(&weights);
        Self::with_mass(dim, points, weights, mass)
    }

    /// Builds a measure with a declared total mass, validating that the
    /// weights sum to it within 1e-12 relative tolerance. The validation
    /// sum is compensated so the tolerance is meaningful at any atom count.
    pub fn with_mass(dim: usize, points: Vec<f64>, weights: Vec<f64>, mass: f64) -> Result<Self> {
        if dim == 0 || weights.is_empty() || points.len() != weights.len() * dim {
            return Err(SimError::EmptySupport);
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) {
                return Err(SimError::NegativeWeight { index: i, weight: w });
            }
        }
        if !(mass > 0.0) {
            return Err(SimError::NonPositiveMass(mass));
        }
        let total = kahan_sum(&weights);
        if (total - mass).abs() > 1e-12 * mass.abs().max(1.0) {
            return Err(SimError::MassMismatch {
                total,
                declared: mass,
            });
        }
        Ok(EmpiricalMeasure {
            dim,
            points,
            weights,
            mass,
            mean_cache: OnceLock::new(),
        })
    }

    /// Uniform weights `mass / n` on the given cloud.
    pub fn uniform(dim: usize, points: Vec<f64>, mass: f64) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(SimError::EmptySupport);
        }
        let n = points.len() / dim;
        let w = mass / n as f64;
        Self::with_mass(dim, points, vec![w; n], mass)
    }

    /// Point mass at `x`.
    pub fn dirac(x: &[f64], mass: f64) -> Result<Self> {
        Self::with_mass(x.len(), x.to_vec(), vec![mass], mass)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `< mu, phi >` as the exact weighted sum over atoms.
    pub fn integrate(&self, phi: &TestFunction) -> Result<f64> {
        let mut acc = 0.0;
        for i in 0..self.len() {
            let v = phi.eval(self.point(i));
            if !v.is_finite() {
                return Err(SimError::NonFiniteValue {
                    name: phi.name().to_string(),
                    point: self.point(i).to_vec(),
                });
            }
            acc += self.weights[i] * v;
        }
        Ok(acc)
    }

    /// Weighted sum of an arbitrary closure over atoms (infallible fast path).
    pub fn integrate_with<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).sum()
    }

    /// Mass-normalized mean vector, computed once and cached.
    pub fn mean(&self) -> &[f64] {
        self.mean_cache.get_or_init(|| {
            let mut m = vec![0.0; self.dim];
            for i in 0..self.len() {
                let w = self.weights[i];
                for (mj, xj) in m.iter_mut().zip(self.point(i)) {
                    *mj += w * xj;
                }
            }
            for mj in m.iter_mut() {
                *mj /= self.mass;
            }
            m
        })
    }

    /// Mass-normalized per-coordinate variance.
    pub fn variance(&self) -> Vec<f64> {
        let mean: Vec<f64> = self.mean().to_vec();
        let mut v = vec![0.0; self.dim];
        for i in 0..self.len() {
            let w = self.weights[i];
            for ((vj, xj), mj) in v.iter_mut().zip(self.point(i)).zip(&mean) {
                let d = xj - mj;
                *vj += w * d * d;
            }
        }
        for vj in v.iter_mut() {
            *vj /= self.mass;
        }
        v
    }

    /// Canonical form: coincident atoms merged with summed weights, atoms
    /// sorted lexicographically by location.
    pub fn merged(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut points = Vec::with_capacity(self.points.len());
        let mut weights: Vec<f64> = Vec::with_capacity(self.len());
        for &i in &idx {
            let p = self.point(i);
            let same = !weights.is_empty() && {
                let last = &points[points.len() - self.dim..];
                last == p
            };
            if same {
                *weights.last_mut().unwrap() += self.weights[i];
            } else {
                points.extend_from_slice(p);
                weights.push(self.weights[i]);
            }
        }
        EmpiricalMeasure {
            dim: self.dim,
            points,
            weights,
            mass: self.mass,
            mean_cache: OnceLock::new(),
        }
    }
}

/// Compensated summation; error stays O(eps) independent of length.
fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Exact Wasserstein-1 between one-dimensional measures of equal mass, via
/// the sorted quantile coupling (equivalently the area between unnormalized
/// CDFs).
pub fn w1_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim() != 1 {
        return Err(SimError::UnsupportedDimension(mu.dim()));
    }
    if nu.dim() != 1 {
        return Err(SimError::UnsupportedDimension(nu.dim()));
    }
    if (mu.mass() - nu.mass()).abs() > 1e-9 * mu.mass().max(nu.mass()).max(1.0) {
        return Err(SimError::MassMismatch {
            total: nu.mass(),
            declared: mu.mass(),
        });
    }
    // event list: (position, +weight from mu, -weight from nu)
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(mu.len() + nu.len());
    for i in 0..mu.len() {
        events.push((mu.point(i)[0], mu.weight(i)));
    }
    for i in 0..nu.len() {
        events.push((nu.point(i)[0], -nu.weight(i)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut dist = 0.0f64;
    let mut cdf_gap = 0.0f64;
    let mut prev_x = events[0].0;
    for &(x, dw) in &events {
        dist += cdf_gap.abs() * (x - prev_x);
        cdf_gap += dw;
        prev_x = x;
    }
    Ok(dist)
}

/// Bounded-Lipschitz distance in one dimension, maximized exactly over
/// piecewise-linear test functions on a uniform grid.
///
/// `grid_resolution` is the number of grid intervals spanning the joint
/// support padded by 1 on each side. The result lower-bounds the true
/// metric and increases to it along nested (doubling) refinements.
pub fn bl_distance(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    grid_resolution: usize,
) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(SimError::UnsupportedDimension(mu.dim().max(nu.dim())));
    }
    if grid_resolution == 0 {
        return Err(SimError::InvalidConfig(
            "grid_resolution must be >= 1".into(),
        ));
    }
    // coincident atoms coalesce additively in the node coefficients below,
    // which is the canonical merged form as far as the chain program sees
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in mu.points().iter().chain(nu.points()) {
        lo = lo.min(*x);
        hi = hi.max(*x);
    }
    lo -= 1.0;
    hi += 1.0;
    let g = grid_resolution;
    let h = (hi - lo) / g as f64;
    // node coefficients of the signed measure mu - nu under hat-function
    // interpolation
    let mut c = vec![0.0; g + 1];
    let mut deposit = |x: f64, w: f64| {
        let s = ((x - lo) / h).clamp(0.0, g as f64);
        let k = (s.floor() as usize).min(g - 1);
        let theta = s - k as f64;
        c[k] += w * (1.0 - theta);
        c[k + 1] += w * theta;
    };
    for i in 0..mu.len() {
        deposit(mu.point(i)[0], mu.weight(i));
    }
    for i in 0..nu.len() {
        deposit(nu.point(i)[0], -nu.weight(i));
    }
    Ok(chain_lp_max(&c, h))
}

/// Sliced bounded-Lipschitz estimator for d > 1: the maximum of the 1D
/// distance over random unit-vector projections. A lower bound on the true
/// metric.
pub fn bl_distance_sliced(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    grid_resolution: usize,
    n_projections: usize,
    seed: u64,
) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(SimError::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    let d = mu.dim();
    if d == 1 {
        return bl_distance(mu, nu, grid_resolution);
    }
    let stream = NormalStream::new(seed, role::PROJECTION);
    let mut best = 0.0f64;
    let mut dir = vec![0.0; d];
    for p in 0..n_projections {
        stream.fill_normals(p as u32, 0, &mut dir);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let project = |m: &EmpiricalMeasure| -> Result<EmpiricalMeasure> {
            let pts = (0..m.len())
                .map(|i| {
                    m.point(i)
                        .iter()
                        .zip(&dir)
                        .map(|(x, u)| x * u / norm)
                        .sum::<f64>()
                })
                .collect();
            EmpiricalMeasure::with_mass(1, pts, m.weights().to_vec(), m.mass())
        };
        best = best.max(bl_distance(&project(mu)?, &project(nu)?, grid_resolution)?);
    }
    Ok(best)
}

/// Maximizes `sum c_j phi_j` over node values with `|phi_j| <= 1` and
/// `|phi_{j+1} - phi_j| <= h`.
///
/// The feasible set is a chain polytope, so a backward sweep that keeps the
/// value function as (concave, piecewise-linear) data solves the linear
/// program exactly: each step takes a sliding-window maximum of width `2h`
/// and adds the node's linear term.
fn chain_lp_max(c: &[f64], h: f64) -> f64 {
    let mut v = ConcavePl::constant(-1.0, 1.0, 0.0);
    let mut first = true;
    for &cj in c.iter().rev() {
        if !first {
            v.window_max(h);
            v.clip_domain(-1.0, 1.0);
        }
        v.add_linear(cj);
        first = false;
    }
    v.max_value()
}

/// Concave piecewise-linear function represented by its breakpoints.
struct ConcavePl {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl ConcavePl {
    fn constant(lo: f64, hi: f64, y: f64) -> Self {
        ConcavePl {
            xs: vec![lo, hi],
            ys: vec![y, y],
        }
    }

    fn add_linear(&mut self, c: f64) {
        for (x, y) in self.xs.iter().zip(self.ys.iter_mut()) {
            *y += c * x;
        }
    }

    fn max_value(&self) -> f64 {
        self.ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|&v| v <= x).min(n - 1);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        if x1 == x0 {
            return y0.max(y1);
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Replaces f(phi) by max over psi in [phi - h, phi + h] of f(psi): the
    /// branch left of the peak shifts left by h, the right branch shifts
    /// right by h, and a plateau of width 2h appears at the top.
    fn window_max(&mut self, h: f64) {
        let m = self.max_value();
        let i0 = self.ys.iter().position(|&y| y == m).unwrap();
        let i1 = self.ys.iter().rposition(|&y| y == m).unwrap();
        let n = self.xs.len();
        let mut xs = Vec::with_capacity(n + 2);
        let mut ys = Vec::with_capacity(n + 2);
        for i in 0..=i0 {
            xs.push(self.xs[i] - h);
            ys.push(self.ys[i]);
        }
        for i in i1..n {
            xs.push(self.xs[i] + h);
            ys.push(self.ys[i]);
        }
        self.xs = xs;
        self.ys = ys;
    }

    fn clip_domain(&mut self, lo: f64, hi: f64) {
        let ylo = self.eval(lo);
        let yhi = self.eval(hi);
        let mut xs = Vec::with_capacity(self.xs.len());
        let mut ys = Vec::with_capacity(self.ys.len());
        xs.push(lo);
        ys.push(ylo);
        for (&x, &y) in self.xs.iter().zip(&self.ys) {
            if x > lo && x < hi {
                xs.push(x);
                ys.push(y);
            }
        }
        xs.push(hi);
        ys.push(yhi);
        self.xs = xs;
        self.ys = ys;
    }
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A C^2 test function with analytic gradient and Hessian evaluators plus
/// the bound metadata used by metric and residual computations.
pub struct TestFunction {
    name: String,
    sup_bound: f64,
    lipschitz_bound: f64,
    f: ScalarFn,
    grad: VectorFn,
    hess: VectorFn,
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        sup_bound: f64,
        lipschitz_bound: f64,
        f: ScalarFn,
        grad: VectorFn,
        hess: VectorFn,
    ) -> Self {
        TestFunction {
            name: name.into(),
            sup_bound,
            lipschitz_bound,
            f,
            grad,
            hess,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        (self.grad)(x, out)
    }

    /// Hessian, row-major d x d.
    pub fn hess_into(&self, x: &[f64], out: &mut [f64]) {
        (self.hess)(x, out)
    }

    /// Worst central-finite-difference mismatch of (gradient, Hessian) at
    /// random probe points in [-2, 2]^d.
    pub fn check_derivatives(&self, dim: usize, probes: usize, seed: u64) -> (f64, f64) {
        let stream = NormalStream::new(seed, role::PROBE);
        let eps = 1e-5;
        let mut worst_g = 0.0f64;
        let mut worst_h = 0.0f64;
        let mut x = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        let mut gp = vec![0.0; dim];
        let mut gm = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        for p in 0..probes {
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = 4.0 * (stream.uniform(p as u32, j as u32, 0) - 0.5);
            }
            self.grad_into(&x, &mut g);
            self.hess_into(&x, &mut hess);
            for j in 0..dim {
                let keep = x[j];
                x[j] = keep + eps;
                let fp = self.eval(&x);
                self.grad_into(&x, &mut gp);
                x[j] = keep - eps;
                let fm = self.eval(&x);
                self.grad_into(&x, &mut gm);
                x[j] = keep;
                worst_g = worst_g.max((g[j] - (fp - fm) / (2.0 * eps)).abs());
                for i in 0..dim {
                    let fd = (gp[i] - gm[i]) / (2.0 * eps);
                    worst_h = worst_h.max((hess[i * dim + j] - fd).abs());
                }
            }
        }
        (worst_g, worst_h)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let _ = dim;
        TestFunction::new(
            format!("const({c})"),
            c.abs(),
            0.0,
            Box::new(move |_| c),
            Box::new(|_, out| out.fill(0.0)),
            Box::new(|_, out| out.fill(0.0)),
        )
    }

    pub fn coordinate(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        TestFunction::new(
            format!("x{i}"),
            f64::INFINITY,
            1.0,
            Box::new(move |x| x[i]),
            Box::new(move |_, out| {
                out.fill(0.0);
                out[i] = 1.0;
            }),
            Box::new(|_, out| out.fill(0.0)),
        )
    }

    pub fn quadratic(dim: usize, i: usize, j: usize) -> Self {
        assert!(i < dim && j < dim);
        TestFunction::new(
            format!("x{i}*x{j}"),
            f64::INFINITY,
            f64::INFINITY,
            Box::new(move |x| x[i] * x[j]),
            Box::new(move |x, out| {
                out.fill(0.0);
                out[i] += x[j];
                out[j] += x[i];
            }),
            Box::new(move |x, out| {
                let d = x.len();
                out.fill(0.0);
                out[i * d + j] += 1.0;
                out[j * d + i] += 1.0;
            }),
        )
    }

    pub fn sine(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        TestFunction::new(
            format!("sin(x{i})"),
            1.0,
            1.0,
            Box::new(move |x| x[i].sin()),
            Box::new(move |x, out| {
                out.fill(0.0);
                out[i] = x[i].cos();
            }),
            Box::new(move |x, out| {
                let d = x.len();
                out.fill(0.0);
                out[i * d + i] = -x[i].sin();
            }),
        )
    }

    /// exp(-|x|^2)
    pub fn gaussian_bump(dim: usize) -> Self {
        let _ = dim;
        TestFunction::new(
            "exp(-|x|^2)",
            1.0,
            (2.0f64 / std::f64::consts::E).sqrt(),
            Box::new(|x| (-x.iter().map(|v| v * v).sum::<f64>()).exp()),
            Box::new(|x, out| {
                let e = (-x.iter().map(|v| v * v).sum::<f64>()).exp();
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -2.0 * v * e;
                }
            }),
            Box::new(|x, out| {
                let d = x.len();
                let e = (-x.iter().map(|v| v * v).sum::<f64>()).exp();
                for i in 0..d {
                    for j in 0..d {
                        let kron = if i == j { 1.0 } else { 0.0 };
                        out[i * d + j] = e * (4.0 * x[i] * x[j] - 2.0 * kron);
                    }
                }
            }),
        )
    }

    /// The bank spanning constants, moments, bounded oscillation, and decay:
    /// `{1, x_i, x_i x_j (i <= j), sin(x_i), exp(-|x|^2)}`.
    pub fn standard_bank(dim: usize) -> Vec<TestFunction> {
        let mut bank = vec![TestFunction::constant(dim, 1.0)];
        for i in 0..dim {
            bank.push(TestFunction::coordinate(dim, i));
        }
        for i in 0..dim {
            for j in i..dim {
                bank.push(TestFunction::quadratic(dim, i, j));
            }
        }
        for i in 0..dim {
            bank.push(TestFunction::sine(dim, i));
        }
        bank.push(TestFunction::gaussian_bump(dim));
        bank
    }
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .finish()
    }
}
