//! Matrix-sign-function solvers for Lyapunov, Sylvester and algebraic
//! Riccati equations. Only LU-based kernels are needed, so everything runs
//! on faer's dense factorizations.

use faer::linalg::solvers::SolveLstsq;
use faer::{Mat, MatRef};

use super::dense::{axpby, inverse, scaled, transpose};
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;

fn identity_defect(p: MatRef<'_, f64>, sign: f64) -> f64 {
    let n = p.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            let d = p[(i, j)] - if i == j { sign } else { 0.0 };
            s += d * d;
        }
    }
    (s / n.max(1) as f64).sqrt()
}

/// Solves A X + X Aᵀ + Q = 0 for Hurwitz A.
pub fn lyapunov(a: MatRef<'_, f64>, q: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let mut p = a.to_owned();
    let mut w = q.to_owned();
    let mut scaling = true;
    for _ in 0..MAX_ITER {
        let pinv = inverse(p.as_ref())?;
        let c = if scaling {
            (p.norm_l2() / pinv.norm_l2()).sqrt()
        } else {
            1.0
        };
        let pw = &pinv * &w * pinv.transpose();
        let p_next = axpby(0.5 / c, p.as_ref(), 0.5 * c, pinv.as_ref());
        w = axpby(0.5 / c, w.as_ref(), 0.5 * c, pw.as_ref());
        let step = (&p_next - &p).norm_l2() / p_next.norm_l2();
        p = p_next;
        let defect = identity_defect(p.as_ref(), -1.0);
        if defect < 1e-2 {
            scaling = false;
        }
        if step < 1e-13 || defect < 1e-14 {
            if identity_defect(p.as_ref(), -1.0) > 1e-8 {
                break;
            }
            let x = scaled(w.as_ref(), 0.5);
            return Ok(axpby(0.5, x.as_ref(), 0.5, transpose(x.as_ref()).as_ref()));
        }
    }
    Err(Error::NotConverged(
        "sign iteration for the Lyapunov equation did not reach -I (matrix not Hurwitz?)".into(),
    ))
}

/// Solves A X + X B + W = 0 for Hurwitz A and B.
pub fn sylvester(a: MatRef<'_, f64>, b: MatRef<'_, f64>, w: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (n, k) = (a.nrows(), b.nrows());
    if n == 0 || k == 0 {
        return Ok(Mat::zeros(n, k));
    }
    let mut p = a.to_owned();
    let mut nn = scaled(b, -1.0);
    let mut w = w.to_owned();
    let mut scaling = true;
    for _ in 0..MAX_ITER {
        let pinv = inverse(p.as_ref())?;
        let ninv = inverse(nn.as_ref())?;
        let c = if scaling {
            let num = pinv.norm_l2().powi(2) + ninv.norm_l2().powi(2);
            let den = p.norm_l2().powi(2) + nn.norm_l2().powi(2);
            (den / num).sqrt().sqrt()
        } else {
            1.0
        };
        let pwn = &pinv * &w * &ninv;
        let p_next = axpby(0.5 / c, p.as_ref(), 0.5 * c, pinv.as_ref());
        let n_next = axpby(0.5 / c, nn.as_ref(), 0.5 * c, ninv.as_ref());
        w = axpby(0.5 / c, w.as_ref(), -0.5 * c, pwn.as_ref());
        let step = ((&p_next - &p).norm_l2() + (&n_next - &nn).norm_l2()) / (p_next.norm_l2() + n_next.norm_l2());
        p = p_next;
        nn = n_next;
        let defect = identity_defect(p.as_ref(), -1.0).max(identity_defect(nn.as_ref(), 1.0));
        if defect < 1e-2 {
            scaling = false;
        }
        if step < 1e-13 || defect < 1e-14 {
            if defect > 1e-8 {
                break;
            }
            return Ok(scaled(w.as_ref(), 0.5));
        }
    }
    Err(Error::NotConverged("sign iteration for the Sylvester equation did not converge".into()))
}

/// Stabilizing solution of X F + Fᵀ X + X G X + Q = 0 (G, Q symmetric) via
/// the sign of the Hamiltonian [[F, G], [−Q, −Fᵀ]].
pub fn riccati_stabilizing(f: MatRef<'_, f64>, g: MatRef<'_, f64>, q: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = f.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let mut h = Mat::<f64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            h[(i, j)] = f[(i, j)];
            h[(i, j + n)] = g[(i, j)];
            h[(i + n, j)] = -q[(i, j)];
            h[(i + n, j + n)] = -f[(j, i)];
        }
    }
    let mut scaling = true;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let hinv = inverse(h.as_ref())?;
        let c = if scaling {
            (h.norm_l2() / hinv.norm_l2()).sqrt()
        } else {
            1.0
        };
        let mut next = axpby(0.5 / c, h.as_ref(), 0.5 * c, hinv.as_ref());
        restore_hamiltonian(&mut next);
        let step = (&next - &h).norm_l2() / next.norm_l2();
        h = next;
        // sign(H)^2 = I at convergence
        let sq = &h * &h;
        let defect = identity_defect(sq.as_ref(), 1.0);
        if defect < 1e-2 {
            scaling = false;
        }
        if step < 1e-13 || defect < 1e-13 {
            converged = defect < 1e-8;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged(
            "Hamiltonian sign iteration did not converge (eigenvalues on the imaginary axis?)".into(),
        ));
    }
    // [S12; S22 + I] X = −[S11 + I; S21]
    let mut lhs = Mat::<f64>::zeros(2 * n, n);
    let mut rhs = Mat::<f64>::zeros(2 * n, n);
    for j in 0..n {
        for i in 0..n {
            lhs[(i, j)] = h[(i, j + n)];
            lhs[(i + n, j)] = h[(i + n, j + n)] + if i == j { 1.0 } else { 0.0 };
            rhs[(i, j)] = -(h[(i, j)] + if i == j { 1.0 } else { 0.0 });
            rhs[(i + n, j)] = -h[(i + n, j)];
        }
    }
    let qr = lhs.qr();
    let x = qr.solve_lstsq(rhs.as_ref());
    if !x.norm_max().is_finite() {
        return Err(Error::Singular("stable invariant subspace is not a graph subspace".into()));
    }
    Ok(axpby(0.5, x.as_ref(), 0.5, transpose(x.as_ref()).as_ref()))
}

/// Projects onto Hamiltonian matrices: J H symmetric with J = [[0, I], [−I, 0]].
fn restore_hamiltonian(h: &mut Mat<f64>) {
    let n = h.nrows() / 2;
    // J H = [[H21, H22], [−H11, −H12]]; symmetrize it and map back.
    for i in 0..n {
        for j in 0..n {
            // H21 and H12 blocks must be symmetric; H22 = −H11ᵀ
            if j > i {
                let a = 0.5 * (h[(n + i, j)] + h[(n + j, i)]);
                h[(n + i, j)] = a;
                h[(n + j, i)] = a;
                let b = 0.5 * (h[(i, n + j)] + h[(j, n + i)]);
                h[(i, n + j)] = b;
                h[(j, n + i)] = b;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let a = 0.5 * (h[(i, j)] - h[(n + j, n + i)]);
            h[(i, j)] = a;
        }
    }
    for i in 0..n {
        for j in 0..n {
            h[(n + j, n + i)] = -h[(i, j)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::eigenvalues;

    fn stable(n: usize, seed: u64) -> Mat<f64> {
        let mut s = seed;
        let mut rnd = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = Mat::from_fn(n, n, |_, _| rnd());
        let shift = eigenvalues(m.as_ref()).unwrap().iter().fold(f64::MIN, |a, v| a.max(v.re));
        Mat::from_fn(n, n, |i, j| m[(i, j)] - if i == j { shift + 0.3 } else { 0.0 })
    }

    #[test]
    fn lyapunov_residual_small() {
        let a = stable(12, 3);
        let q = Mat::from_fn(12, 12, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 });
        let x = lyapunov(a.as_ref(), q.as_ref()).unwrap();
        let r = &a * &x + &x * a.transpose() + &q;
        assert!(r.norm_max() < 1e-10 * (x.norm_max() * a.norm_max()).max(1.0), "{}", r.norm_max());
    }

    #[test]
    fn lyapunov_scalar() {
        let a = Mat::from_fn(1, 1, |_, _| -2.0);
        let q = Mat::from_fn(1, 1, |_, _| 8.0);
        let x = lyapunov(a.as_ref(), q.as_ref()).unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(lyapunov(a.as_ref(), a.as_ref()).is_err());
    }

    #[test]
    fn sylvester_residual_small() {
        let a = stable(7, 5);
        let b = stable(3, 9);
        let w = Mat::from_fn(7, 3, |i, j| (i as f64) - (j as f64) * 0.3);
        let x = sylvester(a.as_ref(), b.as_ref(), w.as_ref()).unwrap();
        let r = &a * &x + &x * &b + &w;
        assert!(r.norm_max() < 1e-10, "{}", r.norm_max());
    }

    #[test]
    fn riccati_scalar_stabilizing_root() {
        // x f + f x + g x^2 + q = 0 with f=-1, g=0.5, q=0.5: roots 2 ± sqrt(3)
        let f = Mat::from_fn(1, 1, |_, _| -1.0);
        let g = Mat::from_fn(1, 1, |_, _| 0.5);
        let q = Mat::from_fn(1, 1, |_, _| 0.5);
        let x = riccati_stabilizing(f.as_ref(), g.as_ref(), q.as_ref()).unwrap();
        let expect = 2.0 - 3f64.sqrt();
        assert!((x[(0, 0)] - expect).abs() < 1e-12, "{}", x[(0, 0)]);
    }

    #[test]
    fn riccati_matrix_residual() {
        let f = stable(6, 11);
        let b = Mat::from_fn(6, 2, |i, j| ((i + 2 * j) % 5) as f64 * 0.1);
        let g = &b * b.transpose();
        let c = Mat::from_fn(2, 6, |i, j| ((i * 3 + j) % 4) as f64 * 0.1);
        let q = c.transpose() * &c;
        let x = riccati_stabilizing(f.as_ref(), g.as_ref(), q.as_ref()).unwrap();
        let r = &x * &f + f.transpose() * &x + &x * &g * &x + &q;
        assert!(r.norm_max() < 1e-10, "{}", r.norm_max());
        let cl = &f + &g * &x;
        assert!(eigenvalues(cl.as_ref()).unwrap().iter().all(|v| v.re < 0.0));
    }
}
