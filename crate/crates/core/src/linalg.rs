//! Small dense complex linear-algebra helpers shared by the model, gradient
//! and projection code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `(M + M^H) / 2`
pub fn hermitian_part(m: &CMat) -> CMat {
    let n = m.nrows();
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)].im = 0.0;
        for j in i + 1..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    out
}

/// Largest entry-wise deviation from Hermitian symmetry.
pub fn max_asymmetry(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `Re tr(A^H B)`, the real inner product on complex matrices and vectors.
pub fn real_inner<R: nalgebra::Dim, C: nalgebra::Dim, S1, S2>(
    a: &nalgebra::Matrix<C64, R, C, S1>,
    b: &nalgebra::Matrix<C64, R, C, S2>,
) -> f64
where
    S1: nalgebra::RawStorage<C64, R, C>,
    S2: nalgebra::RawStorage<C64, R, C>,
{
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Real part of `x^H M x`.
pub fn quad_form(x: &CVec, m: &CMat) -> f64 {
    x.dotc(&(m * x)).re
}

/// Cholesky factorization that also rejects factors whose diagonal is not
/// real positive (the complex square root never fails on its own).
pub(crate) fn cholesky(m: &CMat, ctx: &'static str) -> Result<Cholesky<C64, Dyn>> {
    if !is_finite(m) {
        return Err(Error::NonFinite(ctx));
    }
    let chol = Cholesky::new(hermitian_part(m)).ok_or(Error::NotPositiveDefinite(ctx))?;
    let l = chol.l_dirty();
    let ok = (0..m.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-6 * d.re
    });
    if ok {
        Ok(chol)
    } else {
        Err(Error::NotPositiveDefinite(ctx))
    }
}

/// `ln det M` for Hermitian positive definite `M`.
pub fn log_det_hpd(m: &CMat, ctx: &'static str) -> Result<f64> {
    let chol = cholesky(m, ctx)?;
    let l = chol.l_dirty();
    Ok((0..m.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// `ln det(I + X Y^{-1})` evaluated as `ln det(I + L^{-1} X L^{-H})` with
/// `Y = L L^H`, which keeps the argument Hermitian.
pub fn log_det_ratio(x: &CMat, y: &CMat, ctx: &'static str) -> Result<f64> {
    let n = x.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let chol = cholesky(y, ctx)?;
    let l = chol.l();
    let half = l.solve_lower_triangular(x).ok_or(Error::NotPositiveDefinite(ctx))?;
    let whitened = l
        .solve_lower_triangular(&half.adjoint())
        .ok_or(Error::NotPositiveDefinite(ctx))?;
    let arg = identity(n) + hermitian_part(&whitened);
    log_det_hpd(&arg, ctx)
}

/// Solves `M X = B` for Hermitian positive definite `M`.
pub fn hpd_solve(m: &CMat, b: &CMat, ctx: &'static str) -> Result<CMat> {
    let chol = cholesky(m, ctx)?;
    Ok(chol.solve(b))
}

/// `B^H M^{-1} B`, Hermitianized.
pub fn sandwich_inverse(m: &CMat, b: &CMat, ctx: &'static str) -> Result<CMat> {
    let solved = hpd_solve(m, b, ctx)?;
    Ok(hermitian_part(&(b.adjoint() * solved)))
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in descending
/// order and matching eigenvector columns.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Reassembles `V diag(w) V^H`.
pub fn from_eigen(values: &[f64], vectors: &CMat) -> CMat {
    let n = vectors.nrows();
    let mut out = CMat::zeros(n, n);
    for (c, &w) in values.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let v = vectors.column(c);
        out += (v * v.adjoint()).scale(w);
    }
    hermitian_part(&out)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (values, _) = hermitian_eigen(m);
    *values.last().unwrap()
}

pub fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

/// Rotates `v` by a global phase so its largest-magnitude entry is real and
/// nonnegative.
pub fn fix_global_phase(v: &mut CVec) {
    let mut best = 0usize;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        // strict comparison keeps the first index on ties
        if z.norm() > best_mag + 1e-14 {
            best = i;
            best_mag = z.norm();
        }
    }
    if best_mag > 0.0 {
        let phase = v[best].conj() / best_mag;
        v.apply(|z| *z *= phase);
        v[best] = C64::new(v[best].norm(), 0.0);
    }
}

pub fn real_matrix(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> CMat {
    CMat::from_fn(rows, cols, |r, c| C64::new(f(r, c), 0.0))
}

#[allow(dead_code)]
pub(crate) fn to_real(m: &DMatrix<C64>) -> DMatrix<f64> {
    m.map(|z| z.re)
}
