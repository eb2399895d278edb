//! Small dense helpers on top of faer.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

pub fn to_c(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn re(a: MatRef<'_, c64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].re)
}

pub fn im(a: MatRef<'_, c64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].im)
}

pub fn conj(a: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].conj())
}

pub fn sym(a: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

pub fn skew(a: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] - a[(j, i)]))
}

pub fn transpose(a: MatRef<'_, f64>) -> Mat<f64> {
    a.transpose().to_owned()
}

pub fn scaled(a: MatRef<'_, f64>, s: f64) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| s * a[(i, j)])
}

/// alpha*a + beta*b
pub fn axpby(alpha: f64, a: MatRef<'_, f64>, beta: f64, b: MatRef<'_, f64>) -> Mat<f64> {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| alpha * a[(i, j)] + beta * b[(i, j)])
}

pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        0.0
    } else {
        a.norm_max()
    }
}

pub fn max_abs_c(a: MatRef<'_, c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    sym(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Smallest eigenvalue of the symmetric part (`+inf` for an empty matrix).
pub fn min_eig_sym(a: MatRef<'_, f64>) -> Result<f64> {
    Ok(sym_eigenvalues(a)?.first().copied().unwrap_or(f64::INFINITY))
}

pub fn singular_values(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values().map_err(|e| Error::Eigen(format!("svd: {e:?}")))
}

pub fn singular_values_c(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values().map_err(|e| Error::Eigen(format!("svd: {e:?}")))
}

/// Spectral norm.
pub fn norm2(a: MatRef<'_, f64>) -> f64 {
    singular_values(a).ok().and_then(|s| s.first().copied()).unwrap_or(0.0)
}

pub fn norm2_c(a: MatRef<'_, c64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    singular_values_c(a).ok().and_then(|s| s.first().copied()).unwrap_or(0.0)
}

/// (sigma_min, sigma_max); (inf, 0) for empty.
pub fn sv_extremes(a: MatRef<'_, f64>) -> Result<(f64, f64)> {
    let s = singular_values(a)?;
    match (s.last(), s.first()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Ok((f64::INFINITY, 0.0)),
    }
}

pub fn solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!("solve {}x{} with rhs {} rows", a.nrows(), a.ncols(), b.nrows())));
    }
    if a.nrows() == 0 {
        return Ok(b.to_owned());
    }
    let x = a.partial_piv_lu().solve(b);
    if x.norm_max().is_finite() {
        Ok(x)
    } else {
        Err(Error::Singular("dense solve produced non-finite values".into()))
    }
}

pub fn solve_c(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<Mat<c64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!("solve {}x{} with rhs {} rows", a.nrows(), a.ncols(), b.nrows())));
    }
    if a.nrows() == 0 {
        return Ok(b.to_owned());
    }
    let x = a.partial_piv_lu().solve(b);
    if max_abs_c(x.as_ref()).is_finite() {
        Ok(x)
    } else {
        Err(Error::Singular("dense complex solve produced non-finite values".into()))
    }
}

pub fn inverse(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let x = a.partial_piv_lu().inverse();
    if x.norm_max().is_finite() {
        Ok(x)
    } else {
        Err(Error::Singular("dense inverse produced non-finite values".into()))
    }
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let s = sym(a);
    let llt = s.llt(Side::Lower).map_err(|e| Error::Singular(format!("Cholesky failed: {e:?}")))?;
    Ok(llt.L().to_owned())
}

/// L⁻¹ B for lower-triangular L.
pub fn lower_solve(l: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut x = b.to_owned();
    if l.nrows() > 0 {
        l.solve_lower_triangular_in_place(x.as_mut());
    }
    x
}

/// L⁻ᵀ B for lower-triangular L.
pub fn lower_t_solve(l: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut x = b.to_owned();
    if l.nrows() > 0 {
        l.transpose().solve_upper_triangular_in_place(x.as_mut());
    }
    x
}

pub fn blkdiag(blocks: &[MatRef<'_, f64>]) -> Mat<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(n, m);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.as_mut().submatrix_mut(r, c, b.nrows(), b.ncols()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[MatRef<'_, f64>]) -> Mat<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let mut out = Mat::zeros(n, m);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), m);
        out.as_mut().submatrix_mut(r, 0, b.nrows(), m).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn hstack(blocks: &[MatRef<'_, f64>]) -> Mat<f64> {
    let n = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(n, m);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), n);
        out.as_mut().submatrix_mut(0, c, n, b.ncols()).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Eigenvalues and right eigenvectors of a real square matrix.
pub fn eigen(a: MatRef<'_, f64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let evd = a.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let vals: Vec<c64> = (0..n).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<c64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Dominant right singular vector (unit norm) and the largest singular value.
pub fn dominant_right_singular(a: MatRef<'_, c64>) -> Result<(f64, Vec<c64>)> {
    let svd = a.thin_svd().map_err(|e| Error::Eigen(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector()[0].re;
    let v = svd.V();
    Ok((s, (0..a.ncols()).map(|i| v[(i, 0)]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_skew_split_reconstructs() {
        let a = Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.7 - 2.0);
        let r = &sym(a.as_ref()) + &skew(a.as_ref());
        assert!((&r - &a).norm_max() < 1e-15);
    }

    #[test]
    fn cholesky_and_triangular_solves() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 1.0 });
        let l = cholesky(a.as_ref()).unwrap();
        assert!((&l * l.transpose() - &a).norm_max() < 1e-14);
        let b = Mat::from_fn(3, 2, |i, j| (i + j) as f64);
        let x = lower_t_solve(l.as_ref(), lower_solve(l.as_ref(), b.as_ref()).as_ref());
        assert!((&a * &x - &b).norm_max() < 1e-14);
    }

    #[test]
    fn eigen_of_rotation_is_conjugate_pair() {
        let a = Mat::from_fn(2, 2, |i, j| [[0.0, -2.0], [2.0, 0.0]][i][j]);
        let (vals, _) = eigen(a.as_ref()).unwrap();
        let mut ims: Vec<f64> = vals.iter().map(|v| v.im).collect();
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ims[0] + 2.0).abs() < 1e-14 && (ims[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn empty_matrices_are_harmless() {
        let e = Mat::<f64>::zeros(0, 0);
        assert_eq!(min_eig_sym(e.as_ref()).unwrap(), f64::INFINITY);
        assert_eq!(norm2(e.as_ref()), 0.0);
        assert_eq!(inverse(e.as_ref()).unwrap().nrows(), 0);
    }
}
