//! Built-in coefficient families, selectable by name from experiment
//! configs: "constant", "shift", "linear_local", "sin_local",
//! "mean_reversion_to_conditional_mean", "convolution_kernel_gaussian".

use std::sync::Arc;

use super::{ito_converted_set, CoeffFn, CoefficientSet, KernelSigma, LocalSigma, StratonovichSigma};
use crate::linalg::gram;

fn const_fn(values: Vec<f64>) -> Arc<CoeffFn> {
    Arc::new(move |_t, _x, _mu, out| out.copy_from_slice(&values))
}

fn constant_named(
    name: &'static str,
    d: usize,
    dw: usize,
    a0: &[f64],
    b0: &[f64],
    sigma0: &[f64],
) -> CoefficientSet {
    assert_eq!(a0.len(), d * d);
    assert_eq!(b0.len(), d);
    assert_eq!(sigma0.len(), d * dw);
    let frob = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let km = frob(a0).max(frob(b0)).max(frob(sigma0));
    CoefficientSet::new(
        name,
        d,
        dw,
        0.0,
        km,
        const_fn(a0.to_vec()),
        const_fn(b0.to_vec()),
        const_fn(sigma0.to_vec()),
    )
}

/// Constant coefficient triple.
pub fn constant(d: usize, dw: usize, a0: &[f64], b0: &[f64], sigma0: &[f64]) -> CoefficientSet {
    constant_named("constant", d, dw, a0, b0, sigma0)
}

/// Pure common-noise translation: `sigma = sigma0 * I`, `b = 0`, and
/// `a = sigma sigma^T / 2` so that `alpha = 0`. Every particle rides the
/// same Brownian path and the cloud translates rigidly.
pub fn shift(d: usize, dw: usize, sigma0: f64) -> CoefficientSet {
    let mut s = vec![0.0; d * dw];
    for i in 0..d.min(dw) {
        s[i * dw + i] = sigma0;
    }
    let mut a = vec![0.0; d * d];
    gram(d, dw, &s, &mut a);
    for v in a.iter_mut() {
        *v *= 0.5;
    }
    constant_named("shift", d, dw, &a, &vec![0.0; d], &s)
}

/// Scalar model with `sigma(x) = slope * x` and constant `a`, `b`. With
/// `a = 0` this is the canonical parabolicity violator away from the origin.
pub fn linear_local(slope: f64, a_const: f64, b_const: f64) -> CoefficientSet {
    CoefficientSet::new(
        "linear_local",
        1,
        1,
        slope.abs(),
        4.0 * slope.abs() + a_const.abs() + b_const.abs(),
        const_fn(vec![a_const]),
        const_fn(vec![b_const]),
        Arc::new(move |_t, x, _mu, out| out[0] = slope * x[0]),
    )
}

/// Mean-field Ornstein-Uhlenbeck: `b = beta (<mu, id>/r - x)`, constant
/// `sigma = sigma0 * I` in the common noise, and `a` chosen so the
/// idiosyncratic diffusion is `alpha0 * I`.
pub fn mean_reversion(
    d: usize,
    dw: usize,
    beta: f64,
    sigma0: f64,
    alpha0: f64,
    mass_r: f64,
) -> CoefficientSet {
    let mut s = vec![0.0; d * dw];
    for i in 0..d.min(dw) {
        s[i * dw + i] = sigma0;
    }
    let mut a = vec![0.0; d * d];
    gram(d, dw, &s, &mut a);
    for i in 0..d {
        a[i * d + i] += alpha0 * alpha0;
    }
    for v in a.iter_mut() {
        *v *= 0.5;
    }
    let k = beta * (1.0f64).max(1.0 / mass_r);
    let km = 8.0 * beta + sigma0.abs() + alpha0 * alpha0 + sigma0 * sigma0;
    CoefficientSet::new(
        "mean_reversion_to_conditional_mean",
        d,
        dw,
        k,
        km,
        const_fn(a),
        Arc::new(move |_t, x, mu, out| {
            let mean = mu.mean();
            for i in 0..x.len() {
                out[i] = beta * (mean[i] - x[i]);
            }
        }),
        const_fn(s),
    )
}

/// sigma == c as a local Stratonovich part (d = d_w = 1).
pub fn constant_strat_sigma(c: f64) -> StratonovichSigma {
    StratonovichSigma {
        dim_x: 1,
        dim_w: 1,
        local: Some(LocalSigma {
            value: Arc::new(move |_x, out| out[0] = c),
            grad: Arc::new(|_x, out| out[0] = 0.0),
        }),
        kernel: None,
    }
}

/// sigma(x) = slope * x as a local Stratonovich part (d = d_w = 1).
pub fn linear_strat_sigma(slope: f64) -> StratonovichSigma {
    StratonovichSigma {
        dim_x: 1,
        dim_w: 1,
        local: Some(LocalSigma {
            value: Arc::new(move |x, out| out[0] = slope * x[0]),
            grad: Arc::new(move |_x, out| out[0] = slope),
        }),
        kernel: None,
    }
}

/// sigma(x) = amp * sin(x) as a local Stratonovich part (d = d_w = 1).
pub fn sin_local_sigma(amp: f64) -> StratonovichSigma {
    StratonovichSigma {
        dim_x: 1,
        dim_w: 1,
        local: Some(LocalSigma {
            value: Arc::new(move |x, out| out[0] = amp * x[0].sin()),
            grad: Arc::new(move |x, out| out[0] = amp * x[0].cos()),
        }),
        kernel: None,
    }
}

/// Ito-form coefficient set of the sin-diffusion conservation dynamics.
pub fn sin_local(amp: f64) -> CoefficientSet {
    ito_converted_set(
        sin_local_sigma(amp),
        false,
        amp + amp * amp,
        1.0 + amp + amp * amp,
        "sin_local",
    )
}

/// Gaussian convolution diffusion `sigma(x, mu) = < mu, K(x - .) >` with
/// `K(u) = amp exp(-u^2 / (2 ell^2))` (d = d_w = 1).
pub fn gaussian_kernel_sigma(amp: f64, ell: f64) -> StratonovichSigma {
    let l2 = ell * ell;
    let k = move |u: f64| amp * (-0.5 * u * u / l2).exp();
    StratonovichSigma {
        dim_x: 1,
        dim_w: 1,
        local: None,
        kernel: Some(KernelSigma {
            kernel: Arc::new(move |x, y, out| out[0] = k(x[0] - y[0])),
            grad_y: Some(Arc::new(move |x, y, out| {
                let u = x[0] - y[0];
                out[0] = amp * u / l2 * (-0.5 * u * u / l2).exp();
            })),
            grad_x: Some(Arc::new(move |x, y, out| {
                let u = x[0] - y[0];
                out[0] = -amp * u / l2 * (-0.5 * u * u / l2).exp();
            })),
        }),
    }
}

/// Ito-form coefficient set of the Gaussian-kernel conservation dynamics.
/// `omit_measure_term` drops the measure-derivative drift contribution
/// (negative control for the conversion experiments).
pub fn convolution_kernel_gaussian(amp: f64, ell: f64, omit_measure_term: bool) -> CoefficientSet {
    let k = 2.0 * amp / ell + amp * amp / ell;
    let km = 2.0 * amp + amp * amp / ell;
    ito_converted_set(
        gaussian_kernel_sigma(amp, ell),
        omit_measure_term,
        k,
        km,
        if omit_measure_term {
            "convolution_kernel_gaussian[ablated]"
        } else {
            "convolution_kernel_gaussian"
        },
    )
}
