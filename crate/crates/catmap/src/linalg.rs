//! Thin helpers over faer for the dense operations used throughout the crate.

use crate::{CMat, C64};
use faer::{Mat, MatRef, Side};

/// Above this dimension operator norms fall back to power iteration.
pub const DENSE_SVD_LIMIT: usize = 2048;

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn adjoint(a: MatRef<'_, C64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn matmul(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    a * b
}

/// Largest absolute entry.
pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn frobenius(a: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Entrywise sup-norm of `A A† - I`.
pub fn unitarity_residual(a: MatRef<'_, C64>) -> f64 {
    let g = a * a.adjoint();
    let mut m = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let d = if i == j { g[(i, j)] - 1.0 } else { g[(i, j)] };
            m = m.max(d.norm());
        }
    }
    m
}

/// Entrywise sup-norm of `A - A†`.
pub fn hermiticity_residual(a: MatRef<'_, C64>) -> f64 {
    let n = a.nrows();
    let mut m = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

pub fn sub(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    a - b
}

/// Largest singular value. Dense SVD up to [`DENSE_SVD_LIMIT`], power
/// iteration on `A†A` beyond.
pub fn op_norm(a: MatRef<'_, C64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if a.nrows().max(a.ncols()) <= DENSE_SVD_LIMIT {
        if let Ok(s) = a.singular_values() {
            return s.first().copied().unwrap_or(0.0);
        }
    }
    power_norm(a, 500, 1e-13)
}

fn power_norm(a: MatRef<'_, C64>, iters: usize, tol: f64) -> f64 {
    let n = a.ncols();
    let mut v = Mat::<C64>::from_fn(n, 1, |i, _| C64::new(1.0 + (i as f64 * 0.37).sin(), 0.0));
    let mut est = 0.0;
    for _ in 0..iters {
        let nv = v.norm_l2();
        if nv == 0.0 {
            return 0.0;
        }
        v = v * faer::Scale(C64::new(1.0 / nv, 0.0));
        let av = a * &v;
        let s = av.norm_l2();
        v = a.adjoint() * &av;
        if (s - est).abs() <= tol * s.max(1e-300) {
            return s;
        }
        est = s;
    }
    est
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(a: MatRef<'_, C64>) -> Option<(Vec<f64>, CMat)> {
    let evd = a.self_adjoint_eigen(Side::Lower).ok()?;
    let s = evd.S();
    let vals: Vec<f64> = (0..a.nrows()).map(|i| s[i].re).collect();
    Some((vals, evd.U().to_owned()))
}

pub fn hermitian_eigenvalues(a: MatRef<'_, C64>) -> Option<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower).ok()
}

/// `(A + A†) / 2`.
pub fn hermitian_part(a: MatRef<'_, C64>) -> CMat {
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// `(A - A†) / 2i`.
pub fn skew_part(a: MatRef<'_, C64>) -> CMat {
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| (a[(i, j)] - a[(j, i)].conj()) * C64::new(0.0, -0.5))
}

/// Integer matrix power by repeated squaring.
pub fn matrix_power(a: MatRef<'_, C64>, p: u32) -> CMat {
    let n = a.nrows();
    let mut result = identity(n);
    let mut base = a.to_owned();
    let mut e = p;
    let mut first = true;
    while e > 0 {
        if e & 1 == 1 {
            result = if first { base.clone() } else { &result * &base };
            first = false;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}


/// In-place two-dimensional FFT of a row-major `m × m` array. The inverse is
/// unnormalized.
pub fn fft2_inplace(data: &mut [C64], m: usize, inverse: bool) {
    use rustfft::FftPlanner;
    assert_eq!(data.len(), m * m);
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    fft.process(data);
    let mut col = vec![C64::new(0.0, 0.0); m];
    for j in 0..m {
        for i in 0..m {
            col[i] = data[i * m + j];
        }
        fft.process(&mut col);
        for i in 0..m {
            data[i * m + j] = col[i];
        }
    }
}
