//! Small dense linear-algebra helpers on complex matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Plain inner product `Σ conj(g_j) f_j`.
pub fn inner(g: &[C64], f: &[C64]) -> C64 {
    g.iter().zip(f).map(|(a, b)| a.conj() * b).sum()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Padé approximant.
pub fn expm(m: &CMat) -> CMat {
    m.exp()
}

/// Eigenvalues of a hermitian matrix (input is symmetrized first), ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Column-stacking vectorization.
pub fn vec_of(m: &CMat) -> Vec<C64> {
    m.iter().cloned().collect()
}

pub fn unvec(v: &[C64], n: usize) -> CMat {
    CMat::from_column_slice(n, n, v)
}

/// Superoperator matrix of a linear map on `n×n` matrices in the column-stacking convention.
pub fn superoperator<F: Fn(&CMat) -> CMat>(n: usize, map: F) -> CMat {
    let mut out = CMat::zeros(n * n, n * n);
    for col in 0..n * n {
        let mut e = CMat::zeros(n, n);
        e[(col % n, col / n)] = C64::new(1.0, 0.0);
        let img = map(&e);
        for (row, z) in img.iter().enumerate() {
            out[(row, col)] = *z;
        }
    }
    out
}

/// Apply a superoperator matrix to an `n×n` matrix.
pub fn apply_super(s: &CMat, x: &CMat) -> CMat {
    let n = x.nrows();
    let v = nalgebra::DVector::from_column_slice(&vec_of(x));
    let w = s * v;
    unvec(w.as_slice(), n)
}

/// Choi matrix `Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)` of a superoperator on `n×n` matrices.
pub fn choi_matrix(s: &CMat, n: usize) -> CMat {
    let mut out = CMat::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let mut e = CMat::zeros(n, n);
            e[(i, j)] = C64::new(1.0, 0.0);
            let img = apply_super(s, &e);
            for a in 0..n {
                for b in 0..n {
                    out[(i * n + a, j * n + b)] = img[(a, b)];
                }
            }
        }
    }
    out
}

/// Inverse with residual verification `‖A·A⁻¹ − 1‖_F ≤ tol`.
pub fn checked_inverse(a: &CMat, tol: f64) -> Result<CMat> {
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))?;
    let res = frobenius(&(a * &inv - identity(a.nrows())));
    if !(res <= tol) {
        return Err(Error::Numerical(format!(
            "inverse residual {res:e} above {tol:e}"
        )));
    }
    Ok(inv)
}
