//! Strict system equivalence of the staircase system matrix: proper part,
//! improper coefficient and the pH-ODE form of the proper part.

use std::sync::Arc;

use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::dense::{self, blkdiag, hstack, max_abs, scaled, vstack};
use crate::linalg::sparse::cadd;
#[cfg(test)]
use crate::linalg::sparse::csub;
use crate::linalg::{ShiftedPencil, SparseLu, SparseMatrix};
use crate::staircase::{assemble_operator_blocks, inverse_condition, BlockDims, OperatorBlocks, StaircaseSystem, Tolerances};

/// Largest n + m for which the explicit T1/T2 products are formed.
pub const DENSE_PRODUCT_LIMIT: usize = 2000;
const PATTERN_TOL: f64 = 1e-10;

/// Factorizations of A33 and A41 plus the operator blocks they act on.
#[derive(Clone)]
pub struct SseTransform {
    pub blocks: OperatorBlocks,
    lu33: Option<Arc<SparseLu>>,
    lu41: Option<Arc<SparseLu>>,
}

impl std::fmt::Debug for SseTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SseTransform").field("dims", &self.blocks.dims).finish()
    }
}

fn factor_block(m: &SparseMatrix, name: &str) -> Result<Option<Arc<SparseLu>>> {
    if m.nrows() == 0 {
        return Ok(None);
    }
    let tol = Tolerances::default();
    match SparseLu::new(m) {
        Ok(lu) => {
            // cheap finiteness probe; full conditioning is validation's job
            let probe = lu.solve(Mat::<f64>::from_fn(m.nrows(), 1, |i, _| 1.0 + (i % 5) as f64).as_ref());
            if probe.is_err() {
                return Err(Error::NotInvertible { block: name.into(), ratio: inverse_condition(m, &tol) });
            }
            Ok(Some(Arc::new(lu)))
        }
        Err(_) => Err(Error::NotInvertible { block: name.into(), ratio: 0.0 }),
    }
}

impl SseTransform {
    pub fn dims(&self) -> BlockDims {
        self.blocks.dims
    }

    /// A33⁻¹ X
    pub fn a33_solve(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        match &self.lu33 {
            Some(lu) => lu.solve(x),
            None => Ok(Mat::zeros(0, x.ncols())),
        }
    }
    /// A33⁻ᵀ X
    pub fn a33t_solve(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        match &self.lu33 {
            Some(lu) => lu.solve_transpose(x),
            None => Ok(Mat::zeros(0, x.ncols())),
        }
    }
    /// A41⁻¹ X
    pub fn a41_solve(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        match &self.lu41 {
            Some(lu) => lu.solve(x),
            None => Ok(Mat::zeros(0, x.ncols())),
        }
    }
    /// A41⁻ᵀ X
    pub fn a41t_solve(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        match &self.lu41 {
            Some(lu) => lu.solve_transpose(x),
            None => Ok(Mat::zeros(0, x.ncols())),
        }
    }
    /// A14⁻¹ X = −A41⁻ᵀ X
    pub fn a14_solve(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        Ok(scaled(self.a41t_solve(x)?.as_ref(), -1.0))
    }
    /// A14⁻ᵀ X = −A41⁻¹ X
    pub fn a14t_solve(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        Ok(scaled(self.a41_solve(x)?.as_ref(), -1.0))
    }

    /// X A33⁻¹ for a dense X with n3 columns.
    fn right_a33(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        Ok(self.a33t_solve(x.transpose())?.transpose().to_owned())
    }
    fn right_a41(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        Ok(self.a41t_solve(x.transpose())?.transpose().to_owned())
    }
    fn right_a14(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        Ok(self.a14t_solve(x.transpose())?.transpose().to_owned())
    }

    fn block_sizes(&self) -> Vec<usize> {
        let d = self.dims();
        vec![d.n1, d.n2, d.n3, d.n4, d.m]
    }

    /// Dense T1 (left factor). Only meant for moderate n + m.
    pub fn t1(&self) -> Result<Mat<f64>> {
        let b = &self.blocks;
        let d = self.dims();
        let a = |i, k| b.a(i, k).to_dense();
        let a13_33 = self.right_a33(a(1, 3).as_ref())?;
        let a23_33 = self.right_a33(a(2, 3).as_ref())?;
        let a33i = self.a33_solve(Mat::<f64>::identity(d.n3, d.n3).as_ref())?;
        let a41i = self.a41_solve(Mat::<f64>::identity(d.n4, d.n4).as_ref())?;
        let inner = &a(2, 1) - &a23_33 * a(3, 1);
        let t24 = scaled(self.right_a41(inner.as_ref())?.as_ref(), -1.0);
        let c4_14 = self.right_a14(b.c(4).to_dense().as_ref())?;
        let t53 = self.right_a33((b.c(3).to_dense() - &c4_14 * a(1, 3)).as_ref())?;
        let sz = self.block_sizes();
        let mut t = Mat::<f64>::identity(sz.iter().sum(), sz.iter().sum());
        let off = crate::linalg::sparse::offsets(&sz);
        let mut put = |bi: usize, bj: usize, m: MatRef<'_, f64>| {
            t.as_mut().submatrix_mut(off[bi], off[bj], sz[bi], sz[bj]).copy_from(m);
        };
        put(0, 2, scaled(a13_33.as_ref(), -1.0).as_ref());
        put(1, 2, scaled(a23_33.as_ref(), -1.0).as_ref());
        put(1, 3, t24.as_ref());
        put(2, 2, a33i.as_ref());
        put(3, 3, a41i.as_ref());
        put(4, 0, c4_14.as_ref());
        put(4, 2, t53.as_ref());
        Ok(t)
    }

    /// Dense T2 (right factor).
    pub fn t2(&self) -> Result<Mat<f64>> {
        let b = &self.blocks;
        let d = self.dims();
        let a = |i, k| b.a(i, k).to_dense();
        let y1 = scaled(self.a41_solve(b.b(4).to_dense().as_ref())?.as_ref(), -1.0);
        let a33_31 = self.a33_solve(a(3, 1).as_ref())?;
        let a33_32 = self.a33_solve(a(3, 2).as_ref())?;
        // −A33⁻¹(B3 − A31 A41⁻¹ B4) = −A33⁻¹(B3 + A31 y1)
        let t35 = scaled(self.a33_solve((b.b(3).to_dense() + a(3, 1) * &y1).as_ref())?.as_ref(), -1.0);
        let t42 = self.a14_solve((&a(1, 3) * &a33_32 - a(1, 2)).as_ref())?;
        let a14i = self.a14_solve(Mat::<f64>::identity(d.n1, d.n1).as_ref())?;
        let sz = self.block_sizes();
        let mut t = Mat::<f64>::identity(sz.iter().sum(), sz.iter().sum());
        let off = crate::linalg::sparse::offsets(&sz);
        let mut put = |bi: usize, bj: usize, m: MatRef<'_, f64>| {
            t.as_mut().submatrix_mut(off[bi], off[bj], sz[bi], sz[bj]).copy_from(m);
        };
        put(0, 4, y1.as_ref());
        put(2, 0, scaled(a33_31.as_ref(), -1.0).as_ref());
        put(2, 1, scaled(a33_32.as_ref(), -1.0).as_ref());
        put(2, 4, t35.as_ref());
        put(3, 1, t42.as_ref());
        put(3, 3, a14i.as_ref());
        Ok(t)
    }
}

pub fn build_transformations(blocks: &OperatorBlocks) -> Result<SseTransform> {
    let lu33 = factor_block(blocks.a(3, 3), "A33")?;
    let lu41 = factor_block(blocks.a(4, 1), "A41")?;
    Ok(SseTransform { blocks: blocks.clone(), lu33, lu41 })
}

/// Ap = A22 − A23 A33⁻¹ A32 as a matrix-free operator.
#[derive(Clone)]
pub struct ProperOperator {
    a22: SparseMatrix,
    a23: SparseMatrix,
    a32: SparseMatrix,
    a33: SparseMatrix,
    lu33: Option<Arc<SparseLu>>,
}

impl ProperOperator {
    pub fn dim(&self) -> usize {
        self.a22.nrows()
    }

    /// Ap X
    pub fn apply(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let mut y = self.a22.mul_dense(x);
        if let Some(lu) = &self.lu33 {
            let z = lu.solve(self.a32.mul_dense(x).as_ref())?;
            y -= self.a23.mul_dense(z.as_ref());
        }
        Ok(y)
    }

    /// Apᵀ X
    pub fn apply_t(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let mut y = self.a22.tmul_dense(x);
        if let Some(lu) = &self.lu33 {
            let z = lu.solve_transpose(self.a23.tmul_dense(x).as_ref())?;
            y -= self.a32.tmul_dense(z.as_ref());
        }
        Ok(y)
    }

    pub fn to_dense(&self) -> Result<Mat<f64>> {
        let mut ap = self.a22.to_dense();
        if let Some(lu) = &self.lu33 {
            let z = lu.solve(self.a32.to_dense().as_ref())?;
            ap -= self.a23.mul_dense(z.as_ref());
        }
        Ok(ap)
    }

    /// Sparse pencil of the bordered system [[sE22 − A22, −A23], [−A32, −A33]],
    /// whose leading block of the solution equals (sEp − Ap)⁻¹ rhs.
    pub fn bordered_pencil(&self, e22: &SparseMatrix) -> Result<ShiftedPencil> {
        let n2 = self.dim();
        let n3 = self.a33.nrows();
        let e = SparseMatrix::assemble(&[n2, n3], &[n2, n3], &[(0, 0, e22)]);
        let a = SparseMatrix::assemble(
            &[n2, n3],
            &[n2, n3],
            &[(0, 0, &self.a22), (0, 1, &self.a23), (1, 0, &self.a32), (1, 1, &self.a33)],
        );
        ShiftedPencil::new(&e, &a)
    }
}

/// Proper part Cp(sEp − Ap)⁻¹Bp + Dp and improper coefficient Dinf.
#[derive(Clone)]
pub struct ProperSubsystem {
    pub ep: SparseMatrix,
    pub ap: ProperOperator,
    pub bp: Mat<f64>,
    pub cp: Mat<f64>,
    pub dp: Mat<f64>,
    pub dinf: Mat<f64>,
}

impl std::fmt::Debug for ProperSubsystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProperSubsystem")
            .field("n2", &self.n2())
            .field("m", &self.m())
            .field("dp", &self.dp)
            .field("dinf", &self.dinf)
            .finish()
    }
}

impl ProperSubsystem {
    pub fn n2(&self) -> usize {
        self.ep.nrows()
    }
    pub fn m(&self) -> usize {
        self.dp.nrows()
    }

    /// Cp(sEp − Ap)⁻¹Bp + Dp + s·Dinf through the sparse bordered system.
    pub fn transfer(&self, s: c64) -> Result<Mat<c64>> {
        let pencil = self.ap.bordered_pencil(&self.ep)?;
        self.transfer_with(&pencil, s)
    }

    pub fn transfer_with(&self, pencil: &ShiftedPencil, s: c64) -> Result<Mat<c64>> {
        let x = self.resolvent_bp(pencil, s)?;
        let cx = dense::to_c(self.cp.as_ref()) * &x;
        let poly = Mat::from_fn(self.m(), self.m(), |i, j| c64::new(self.dp[(i, j)], 0.0) + s * self.dinf[(i, j)]);
        Ok(cadd(cx.as_ref(), poly.as_ref()))
    }

    /// (sEp − Ap)⁻¹ Bp
    pub fn resolvent_bp(&self, pencil: &ShiftedPencil, s: c64) -> Result<Mat<c64>> {
        let n2 = self.n2();
        let rhs = Mat::from_fn(pencil.dim(), self.m(), |i, j| {
            if i < n2 {
                c64::new(self.bp[(i, j)], 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        let lu = pencil.factor(s)?;
        let x = lu.solve_checked(rhs.as_ref(), 1e-8)?;
        Ok(x.subrows(0, n2).to_owned())
    }

    /// Proper part only (no s·Dinf), from a dense Ap.
    pub fn proper_transfer_dense(&self, ap: MatRef<'_, f64>, s: c64) -> Result<Mat<c64>> {
        let ep = self.ep.to_dense();
        let n2 = self.n2();
        let k = Mat::from_fn(n2, n2, |i, j| s * ep[(i, j)] - c64::new(ap[(i, j)], 0.0));
        let x = dense::solve_c(k.as_ref(), dense::to_c(self.bp.as_ref()).as_ref())?;
        let cx = dense::to_c(self.cp.as_ref()) * &x;
        Ok(cadd(cx.as_ref(), dense::to_c(self.dp.as_ref()).as_ref()))
    }
}

/// Closed-form proper part; with `check` and moderate size the T1/T2 products
/// are also formed and their constant pattern asserted.
pub fn extract_proper(sys: &StaircaseSystem) -> Result<ProperSubsystem> {
    let blocks = assemble_operator_blocks(sys);
    let sse = build_transformations(&blocks)?;
    let p = proper_closed_form(sys, &sse)?;
    if sys.n_states() + sys.m() <= DENSE_PRODUCT_LIMIT {
        check_against_products(sys, &sse, &p)?;
    }
    Ok(p)
}

pub fn proper_closed_form(sys: &StaircaseSystem, sse: &SseTransform) -> Result<ProperSubsystem> {
    let b = &sse.blocks;
    let m = sys.m();
    let dense_b = |i| b.b(i).to_dense();
    let dense_c = |i| b.c(i).to_dense();

    let y1 = scaled(sse.a41_solve(dense_b(4).as_ref())?.as_ref(), -1.0);
    let y3 = scaled(sse.a33_solve((dense_b(3) + b.a(3, 1).mul_dense(y1.as_ref())).as_ref())?.as_ref(), -1.0);
    let bp = dense_b(2) + b.a(2, 1).mul_dense(y1.as_ref()) + b.a(2, 3).mul_dense(y3.as_ref());

    // row vectors are handled through transposes: Cp = C2 − C3 A33⁻¹ A32 + C4 A14⁻¹(−A12 + A13 A33⁻¹ A32)
    let c3t = dense_c(3).transpose().to_owned();
    let c4t = dense_c(4).transpose().to_owned();
    let w3 = sse.a33t_solve(c3t.as_ref())?; // A33⁻ᵀ C3ᵀ
    let w4 = sse.a14t_solve(c4t.as_ref())?; // A14⁻ᵀ C4ᵀ
    let w34 = sse.a33t_solve(b.a(1, 3).tmul_dense(w4.as_ref()).as_ref())?; // A33⁻ᵀ A13ᵀ A14⁻ᵀ C4ᵀ
    let cpt = dense_c(2).transpose().to_owned() - b.a(3, 2).tmul_dense(w3.as_ref()) - b.a(1, 2).tmul_dense(w4.as_ref())
        + b.a(3, 2).tmul_dense(w34.as_ref());
    let cp = cpt.transpose().to_owned();

    // Dp = D + C1 y1 + C3 y3 + C4 A14⁻¹(−A11 y1 − A13 y3 − B1)
    let inner = scaled(b.a(1, 1).mul_dense(y1.as_ref()).as_ref(), -1.0) - b.a(1, 3).mul_dense(y3.as_ref()) - dense_b(1);
    let dp = &b.d + b.c(1).mul_dense(y1.as_ref()) + b.c(3).mul_dense(y3.as_ref()) + w4.transpose() * &inner;

    let dinf = dinf_closed_form(sse, &sys.e11)?;
    let _ = m;
    Ok(ProperSubsystem {
        ep: sys.e22.clone(),
        ap: ProperOperator {
            a22: b.a(2, 2).clone(),
            a23: b.a(2, 3).clone(),
            a32: b.a(3, 2).clone(),
            a33: b.a(3, 3).clone(),
            lu33: sse.lu33.clone(),
        },
        bp,
        cp,
        dp,
        dinf,
    })
}

/// Dinf = G4ᵀ A41⁻ᵀ E11 A41⁻¹ G4, symmetrized.
pub fn dinf_closed_form(sse: &SseTransform, e11: &SparseMatrix) -> Result<Mat<f64>> {
    let m = sse.dims().m;
    if sse.dims().n4 == 0 {
        return Ok(Mat::zeros(m, m));
    }
    let z = sse.a41_solve(sse.blocks.b(4).to_dense().as_ref())?;
    let d = z.transpose() * e11.mul_dense(z.as_ref());
    Ok(dense::sym(d.as_ref()))
}

/// M₀ = T1 (Γ + W) T2 and M₁ = T1 𝓔 T2, dense.
pub fn transformed_pencil(sys: &StaircaseSystem, sse: &SseTransform) -> Result<(Mat<f64>, Mat<f64>)> {
    let n = sys.n_states();
    let m = sys.m();
    let t1 = sse.t1()?;
    let t2 = sse.t2()?;
    let mut m0 = Mat::<f64>::zeros(n + m, n + m);
    let a = sys.a_full().to_dense();
    let bb = sys.b_full().to_dense();
    let cc = sys.c_full().to_dense();
    m0.as_mut().submatrix_mut(0, 0, n, n).copy_from(scaled(a.as_ref(), -1.0));
    m0.as_mut().submatrix_mut(0, n, n, m).copy_from(scaled(bb.as_ref(), -1.0));
    m0.as_mut().submatrix_mut(n, 0, m, n).copy_from(&cc);
    m0.as_mut().submatrix_mut(n, n, m, m).copy_from(sys.d());
    let e = blkdiag(&[sys.e_full().to_dense().as_ref(), Mat::<f64>::zeros(m, m).as_ref()]);
    Ok((&t1 * &m0 * &t2, &t1 * &e * &t2))
}

fn check_against_products(sys: &StaircaseSystem, sse: &SseTransform, p: &ProperSubsystem) -> Result<()> {
    let (m0, m1) = transformed_pencil(sys, sse)?;
    let d = sys.dims();
    let sz = [d.n1, d.n2, d.n3, d.n4, d.m];
    let off = crate::linalg::sparse::offsets(&sz);
    let blk = |m: &Mat<f64>, i: usize, j: usize| m.as_ref().submatrix(off[i], off[j], sz[i], sz[j]).to_owned();
    let scale = max_abs(m0.as_ref()).max(max_abs(m1.as_ref())).max(1.0);
    let mut worst: (f64, String) = (0.0, String::new());
    let mut note = |v: f64, what: String| {
        if v > worst.0 {
            worst = (v, what);
        }
    };
    let zeros = [
        (0, 1),
        (0, 2),
        (1, 0),
        (1, 2),
        (1, 3),
        (2, 0),
        (2, 1),
        (2, 3),
        (2, 4),
        (3, 1),
        (3, 2),
        (3, 3),
        (3, 4),
        (4, 2),
        (4, 3),
    ];
    for (i, j) in zeros {
        note(max_abs(blk(&m0, i, j).as_ref()), format!("M0 block ({},{})", i + 1, j + 1));
        note(max_abs(blk(&m1, i, j).as_ref()), format!("E block ({},{})", i + 1, j + 1));
    }
    for (i, j) in [(2, 2), (0, 3), (3, 0)] {
        let b = blk(&m0, i, j);
        let id = Mat::<f64>::identity(b.nrows(), b.ncols());
        note(max_abs((&b + &id).as_ref()), format!("M0 block ({},{}) = -I", i + 1, j + 1));
        note(max_abs(blk(&m1, i, j).as_ref()), format!("E block ({},{})", i + 1, j + 1));
    }
    let ap = p.ap.to_dense()?;
    let diffs = [
        ("Ep", &blk(&m1, 1, 1) - &p.ep.to_dense()),
        ("Ap", &blk(&m0, 1, 1) + &ap),
        ("Bp", &blk(&m0, 1, 4) + &p.bp),
        ("Cp", &blk(&m0, 4, 1) - &p.cp),
        ("Dp", &blk(&m0, 4, 4) - &p.dp),
        ("Dinf", &blk(&m1, 4, 4) - &p.dinf),
    ];
    for (name, dm) in diffs {
        note(max_abs(dm.as_ref()), format!("{name} closed form vs product"));
    }
    if worst.0 > PATTERN_TOL * scale {
        return Err(Error::Consistency(format!(
            "{} deviates by {:.3e} (scale {:.3e})",
            worst.1, worst.0, scale
        )));
    }
    Ok(())
}

/// pH-ODE blocks of the proper subsystem.
#[derive(Clone, Debug)]
pub struct PhOdeForm {
    pub ep: Mat<f64>,
    pub jp: Mat<f64>,
    pub rp: Mat<f64>,
    pub gp: Mat<f64>,
    pub pp: Mat<f64>,
    pub sp: Mat<f64>,
    pub np: Mat<f64>,
}

impl PhOdeForm {
    /// Splits the system matrix [[sE − A, −B], [C, D]] into skew and symmetric parts.
    pub fn from_matrices(e: MatRef<'_, f64>, a: MatRef<'_, f64>, b: MatRef<'_, f64>, c: MatRef<'_, f64>, d: MatRef<'_, f64>) -> Self {
        let ct = c.transpose().to_owned();
        Self {
            ep: dense::sym(e),
            jp: dense::skew(a),
            rp: scaled(dense::sym(a).as_ref(), -1.0),
            gp: dense::axpby(0.5, b, 0.5, ct.as_ref()),
            pp: dense::axpby(0.5, ct.as_ref(), -0.5, b),
            sp: dense::sym(d),
            np: dense::skew(d),
        }
    }

    /// [[R, P], [Pᵀ, S]]
    pub fn w(&self) -> Mat<f64> {
        let top = hstack(&[self.rp.as_ref(), self.pp.as_ref()]);
        let bot = hstack(&[self.pp.transpose(), self.sp.as_ref()]);
        vstack(&[top.as_ref(), bot.as_ref()])
    }

    pub fn a(&self) -> Mat<f64> {
        &self.jp - &self.rp
    }
    pub fn b(&self) -> Mat<f64> {
        &self.gp - &self.pp
    }
    pub fn c(&self) -> Mat<f64> {
        (&self.gp + &self.pp).transpose().to_owned()
    }
    pub fn d(&self) -> Mat<f64> {
        &self.sp + &self.np
    }

    /// Relative PSD violation of W (0 if PSD).
    pub fn w_violation(&self) -> Result<f64> {
        let w = self.w();
        let ev = dense::sym_eigenvalues(w.as_ref())?;
        let norm = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm == 0.0 {
            return Ok(0.0);
        }
        Ok((-ev[0] / norm).max(0.0))
    }
}

pub fn ph_form_of_proper(p: &ProperSubsystem) -> Result<PhOdeForm> {
    if p.n2() > DENSE_PRODUCT_LIMIT {
        return Err(Error::Unsupported(format!("dense pH form of a proper part with n2 = {}", p.n2())));
    }
    let ap = p.ap.to_dense()?;
    let f = PhOdeForm::from_matrices(p.ep.to_dense().as_ref(), ap.as_ref(), p.bp.as_ref(), p.cp.as_ref(), p.dp.as_ref());
    let v = f.w_violation()?;
    if v > 1e-10 {
        return Err(Error::InvalidModel(format!(
            "dissipation matrix of the proper part is indefinite (relative violation {v:.3e})"
        )));
    }
    Ok(f)
}

/// Full-order transfer function C(sE − A)⁻¹B + D through a sparse solve.
pub fn full_transfer(sys: &StaircaseSystem, pencil: &ShiftedPencil, s: c64) -> Result<Mat<c64>> {
    let b = dense::to_c(sys.b_full().to_dense().as_ref());
    let lu = pencil.factor(s)?;
    let x = lu.solve_checked(b.as_ref(), 1e-8)?;
    let cx = sys.c_full().mul_dense_c(x.as_ref());
    Ok(cadd(cx.as_ref(), dense::to_c(sys.d().as_ref()).as_ref()))
}

pub fn full_pencil(sys: &StaircaseSystem) -> Result<ShiftedPencil> {
    ShiftedPencil::new(&sys.e_full(), &sys.a_full())
}

#[cfg(test)]
pub(crate) fn rel_diff_c(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    let d = csub(a, b);
    let n = dense::max_abs_c(b).max(f64::MIN_POSITIVE);
    dense::max_abs_c(d.as_ref()) / n
}
