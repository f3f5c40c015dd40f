//! Dense kernels for the small (d <= 4 in practice) matrices that coefficient
//! evaluation produces. Row-major layout throughout.

/// y = M x for an `n x m` matrix.
#[inline]
pub fn mat_vec(n: usize, m: usize, mat: &[f64], x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        let row = &mat[i * m..(i + 1) * m];
        y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// y += M x for an `n x m` matrix.
#[inline]
pub fn mat_vec_add(n: usize, m: usize, mat: &[f64], x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        let row = &mat[i * m..(i + 1) * m];
        y[i] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// out = S S^T for an `n x m` matrix S; out is `n x n`, symmetric.
pub fn gram(n: usize, m: usize, s: &[f64], out: &mut [f64]) {
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..m {
                acc += s[i * m + k] * s[j * m + k];
            }
            out[i * n + j] = acc;
            out[j * n + i] = acc;
        }
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Largest absolute asymmetry |m_ij - m_ji| of a square matrix.
pub fn symmetry_defect(n: usize, m: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[i * n + j] - m[j * n + i]).abs());
        }
    }
    worst
}

/// Reusable workspace for [`sym_eigen`] and [`sym_psd_sqrt`].
#[derive(Clone, Debug, Default)]
pub struct EigenWork {
    a: Vec<f64>,
    v: Vec<f64>,
    vals: Vec<f64>,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// On return `vals` holds the eigenvalues and column `j` of `vecs` the
/// corresponding orthonormal eigenvector, so `m = V diag(vals) V^T`.
pub fn sym_eigen(n: usize, m: &[f64], vals: &mut [f64], vecs: &mut [f64]) {
    debug_assert_eq!(m.len(), n * n);
    let mut a = m.to_vec();
    vecs.fill(0.0);
    for i in 0..n {
        vecs[i * n + i] = 1.0;
    }
    if n == 1 {
        vals[0] = a[0];
        return;
    }
    let scale = max_abs(&a).max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[p * n + q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J on rows/cols p and q
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = vecs[k * n + p];
                    let vkq = vecs[k * n + q];
                    vecs[k * n + p] = c * vkp - s * vkq;
                    vecs[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for i in 0..n {
        vals[i] = a[i * n + i];
    }
}

/// Symmetric PSD square root with an eigenvalue floor.
///
/// Eigenvalues in `[-tol, 0)` are clipped to zero; an eigenvalue below
/// `-tol` aborts and is returned as the error payload. On success returns
/// the smallest eigenvalue seen (before clipping).
pub fn sym_psd_sqrt(
    n: usize,
    m: &[f64],
    tol: f64,
    out: &mut [f64],
    work: &mut EigenWork,
) -> Result<f64, f64> {
    if n == 1 {
        if m[0] < -tol {
            return Err(m[0]);
        }
        out[0] = m[0].max(0.0).sqrt();
        return Ok(m[0]);
    }
    work.vals.resize(n, 0.0);
    work.v.resize(n * n, 0.0);
    sym_eigen(n, m, &mut work.vals, &mut work.v);
    let min_eig = work.vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < -tol {
        return Err(min_eig);
    }
    work.a.resize(n, 0.0);
    for (r, &l) in work.a.iter_mut().zip(work.vals.iter()) {
        *r = l.max(0.0).sqrt();
    }
    // out = V diag(sqrt(l)) V^T
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += work.v[i * n + k] * work.a[k] * work.v[j * n + k];
            }
            out[i * n + j] = acc;
            out[j * n + i] = acc;
        }
    }
    Ok(min_eig)
}

/// Ordinary least squares fit `y = intercept + slope * x`.
///
/// Returns `(slope, intercept, slope_standard_error)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = (x.len().max(3) - 2) as f64;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let se = (ss_res / dof / sxx).sqrt();
    (slope, intercept, se)
}
