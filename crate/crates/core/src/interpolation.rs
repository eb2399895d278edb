//! Tangential interpolation of staircase pH-DAEs: Krylov basis, V2
//! orthonormalization, reduction matrices, reduced pencil and minimal ROM.

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::linalg::dense::{self, max_abs, scaled};
use crate::linalg::{ShiftedPencil, SparseMatrix};
use crate::rosenbrock::{build_transformations, proper_closed_form, ProperSubsystem, SseTransform};
use crate::staircase::{assemble_operator_blocks, BlockDims, StaircaseSystem};

/// Conjugate-closed shifts with tangential directions.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationData {
    pub shifts: Vec<c64>,
    pub directions: Vec<Vec<c64>>,
}

/// A real shift or a conjugate pair, by index into the data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftGroup {
    Real(usize),
    /// (member with Im > 0, its conjugate)
    Pair(usize, usize),
}

fn rel_close(a: c64, b: c64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1.0)
}

impl InterpolationData {
    pub fn new(shifts: Vec<c64>, directions: Vec<Vec<c64>>) -> Result<Self> {
        let d = Self { shifts, directions };
        d.check()?;
        Ok(d)
    }

    /// Adds the conjugate of every non-real entry.
    pub fn closed(shifts: &[c64], directions: &[Vec<c64>]) -> Result<Self> {
        let mut s = Vec::new();
        let mut b = Vec::new();
        for (sig, dir) in shifts.iter().zip(directions) {
            if sig.im == 0.0 {
                s.push(*sig);
                b.push(dir.iter().map(|v| c64::new(v.re, 0.0)).collect());
            } else {
                let (up, bu): (c64, Vec<c64>) =
                    if sig.im > 0.0 { (*sig, dir.clone()) } else { (sig.conj(), dir.iter().map(|v| v.conj()).collect()) };
                s.push(up);
                b.push(bu.clone());
                s.push(up.conj());
                b.push(bu.iter().map(|v| v.conj()).collect());
            }
        }
        Self::new(s, b)
    }

    /// `r` log-spaced points i·ω on [wmin, wmax] (plus conjugates); an odd
    /// `r` adds one real shift at the geometric mean. Directions cycle
    /// through the canonical basis.
    pub fn imaginary_axis(r: usize, m: usize, wmin: f64, wmax: f64) -> Result<Self> {
        if r == 0 || m == 0 {
            return Err(Error::InvalidInput("need r >= 1 and m >= 1".into()));
        }
        let pairs = r / 2;
        let e = |k: usize| (0..m).map(|i| c64::new(if i == k % m { 1.0 } else { 0.0 }, 0.0)).collect::<Vec<_>>();
        let mut s = Vec::new();
        let mut b = Vec::new();
        for k in 0..pairs {
            let t = if pairs == 1 { 0.5 } else { k as f64 / (pairs - 1) as f64 };
            let w = (wmin.ln() + t * (wmax.ln() - wmin.ln())).exp();
            s.push(c64::new(0.0, w));
            b.push(e(k));
        }
        if r % 2 == 1 {
            s.push(c64::new((wmin * wmax).sqrt(), 0.0));
            b.push(e(pairs));
        }
        Self::closed(&s, &b)
    }

    pub fn r(&self) -> usize {
        self.shifts.len()
    }
    pub fn m(&self) -> usize {
        self.directions.first().map(|d| d.len()).unwrap_or(0)
    }

    pub fn check(&self) -> Result<()> {
        if self.shifts.len() != self.directions.len() {
            return Err(Error::InvalidInput("shift and direction counts differ".into()));
        }
        if self.shifts.is_empty() {
            return Err(Error::InvalidInput("no interpolation points".into()));
        }
        let m = self.m();
        if self.directions.iter().any(|d| d.len() != m) || m == 0 {
            return Err(Error::InvalidInput("directions have inconsistent length".into()));
        }
        for (i, s) in self.shifts.iter().enumerate() {
            if !s.re.is_finite() || !s.im.is_finite() {
                return Err(Error::InvalidInput(format!("shift {i} is not finite")));
            }
            for t in &self.shifts[i + 1..] {
                if rel_close(*s, *t, 1e-13) {
                    return Err(Error::InvalidInput(format!("repeated shift {s}")));
                }
            }
            let bn: f64 = self.directions[i].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if bn == 0.0 {
                return Err(Error::InvalidInput(format!("direction {i} is zero")));
            }
            if s.im == 0.0 && self.directions[i].iter().any(|v| v.im.abs() > 1e-14 * bn) {
                return Err(Error::InvalidInput(format!("real shift {i} has a complex direction")));
            }
        }
        self.groups().map(|_| ())
    }

    /// Groups shifts into real ones and conjugate pairs, in order of first appearance.
    pub fn groups(&self) -> Result<Vec<ShiftGroup>> {
        let mut used = vec![false; self.r()];
        let mut out = Vec::new();
        for i in 0..self.r() {
            if used[i] {
                continue;
            }
            used[i] = true;
            let s = self.shifts[i];
            if s.im == 0.0 {
                out.push(ShiftGroup::Real(i));
                continue;
            }
            let partner = (0..self.r()).find(|&k| {
                !used[k]
                    && rel_close(self.shifts[k], s.conj(), 1e-12)
                    && self.directions[k].iter().zip(&self.directions[i]).all(|(a, b)| (*a - b.conj()).norm() <= 1e-12 * (1.0 + b.norm()))
            });
            match partner {
                Some(k) => {
                    used[k] = true;
                    out.push(if s.im > 0.0 { ShiftGroup::Pair(i, k) } else { ShiftGroup::Pair(k, i) });
                }
                None => return Err(Error::InvalidInput(format!("shift {s} has no conjugate partner with conjugate direction"))),
            }
        }
        Ok(out)
    }

    /// Directions realified like the basis: b for real shifts, [Re b, Im b] for pairs.
    pub fn realified_directions(&self) -> Result<Mat<f64>> {
        let m = self.m();
        let groups = self.groups()?;
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for g in groups {
            match g {
                ShiftGroup::Real(i) => cols.push(self.directions[i].iter().map(|v| v.re).collect()),
                ShiftGroup::Pair(i, _) => {
                    cols.push(self.directions[i].iter().map(|v| v.re).collect());
                    cols.push(self.directions[i].iter().map(|v| v.im).collect());
                }
            }
        }
        Ok(Mat::from_fn(m, cols.len(), |i, j| cols[j][i]))
    }

    pub fn as_pairs(&self) -> Vec<[f64; 2]> {
        self.shifts.iter().map(|s| [s.re, s.im]).collect()
    }

    pub fn directions_as_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        self.directions.iter().map(|d| d.iter().map(|v| [v.re, v.im]).collect()).collect()
    }
}

/// V with its block rows, the orthonormal V̄2 and V̄2 = V2·Tv.
#[derive(Clone, Debug)]
pub struct TangentialBasis {
    pub dims: BlockDims,
    pub v: Mat<f64>,
    pub v2bar: Mat<f64>,
    pub tv: Mat<f64>,
    /// retained singular values of the V2 block of the orthonormalized V
    pub cs: Vec<f64>,
    /// realified directions matching the columns of V
    pub b_real: Mat<f64>,
    pub warnings: Vec<String>,
}

impl TangentialBasis {
    pub fn r(&self) -> usize {
        self.v.ncols()
    }
    pub fn r_prime(&self) -> usize {
        self.v2bar.ncols()
    }
    pub fn v_block(&self, k: usize) -> MatRef<'_, f64> {
        let o = self.dims.offsets();
        self.v.as_ref().subrows(o[k - 1], o[k] - o[k - 1])
    }
}

pub const TOL_CS: f64 = 1e-10;
const SOLVE_RTOL: f64 = 1e-10;

/// Columns v solving (σE − A)v = B b, realified. Returns V (n×r).
pub fn krylov_columns(pencil: &ShiftedPencil, b_full: &SparseMatrix, data: &InterpolationData) -> Result<Mat<f64>> {
    let n = pencil.dim();
    let groups = data.groups()?;
    let solved: Vec<Result<Vec<Vec<f64>>>> = groups
        .par_iter()
        .map(|g| {
            let i = match g {
                ShiftGroup::Real(i) | ShiftGroup::Pair(i, _) => *i,
            };
            let s = data.shifts[i];
            let bvec = Mat::from_fn(data.m(), 1, |k, _| data.directions[i][k]);
            let rhs = b_full.mul_dense_c(bvec.as_ref());
            let lu = pencil.factor(s)?;
            let x = lu.solve_checked(rhs.as_ref(), SOLVE_RTOL)?;
            let re: Vec<f64> = (0..n).map(|k| x[(k, 0)].re).collect();
            Ok(match g {
                ShiftGroup::Real(_) => vec![re],
                ShiftGroup::Pair(..) => vec![re, (0..n).map(|k| x[(k, 0)].im).collect()],
            })
        })
        .collect();
    let mut cols = Vec::new();
    for c in solved {
        cols.extend(c?);
    }
    Ok(Mat::from_fn(n, cols.len(), |i, j| cols[j][i]))
}

/// Krylov basis V only (V̄2 and Tv are filled by `orthonormalize_v2`).
pub fn tangential_basis(sys: &StaircaseSystem, data: &InterpolationData) -> Result<TangentialBasis> {
    data.check()?;
    if data.m() != sys.m() {
        return Err(Error::InvalidInput(format!("directions have length {}, system has {} ports", data.m(), sys.m())));
    }
    let pencil = ShiftedPencil::new(&sys.e_full(), &sys.a_full())?;
    let v = krylov_columns(&pencil, &sys.b_full(), data)?;
    let r = v.ncols();
    Ok(TangentialBasis {
        dims: sys.dims(),
        v,
        v2bar: Mat::zeros(sys.dims().n2, 0),
        tv: Mat::zeros(r, 0),
        cs: Vec::new(),
        b_real: data.realified_directions()?,
        warnings: Vec::new(),
    })
}

/// Orthonormal basis of range(V2): SVD of V, then SVD of the V2 block.
/// Returns (V̄2, Tv, cosines, warnings) with V̄2 = V2·Tv.
pub fn orthonormalize_v2(v: MatRef<'_, f64>, dims: &BlockDims, tol_cs: f64) -> Result<(Mat<f64>, Mat<f64>, Vec<f64>, Vec<String>)> {
    let r = v.ncols();
    let o = dims.offsets();
    let mut warnings = Vec::new();
    if r == 0 {
        return Err(Error::InvalidInput("empty basis".into()));
    }
    let svd = v.thin_svd().map_err(|e| Error::Eigen(format!("svd of V: {e:?}")))?;
    let s = svd.S().column_vector();
    let smax = s[0];
    if !(smax > 0.0) {
        return Err(Error::InvalidInput("basis V is zero".into()));
    }
    let k = (0..r).filter(|&i| s[i] > tol_cs * smax).count();
    if k < r {
        warnings.push(format!("basis V has numerical rank {k} < {r}; dependent columns dropped"));
    }
    // Q = V W_k S_k⁻¹
    let wk = Mat::from_fn(r, k, |i, j| svd.V()[(i, j)] / s[j]);
    let q2 = svd.U().subrows(o[1], dims.n2).subcols(0, k).to_owned();
    if max_abs(q2.as_ref()) == 0.0 {
        return Err(Error::InvalidInput("V2 block is zero: the basis has no proper content".into()));
    }
    let svd2 = q2.thin_svd().map_err(|e| Error::Eigen(format!("svd of V2: {e:?}")))?;
    let c = svd2.S().column_vector();
    let cmax = c[0];
    let kk = (0..c.nrows()).filter(|&i| c[i] > tol_cs * cmax).count();
    if kk < k {
        warnings.push(format!("V2 block has numerical rank {kk} < {k}; reduced proper order shrinks to {kk}"));
    }
    let v2bar = svd2.U().subcols(0, kk).to_owned();
    let y = Mat::from_fn(k, kk, |i, j| svd2.V()[(i, j)] / c[j]);
    let tv = &wk * &y;
    let cs = (0..kk).map(|i| c[i]).collect();
    Ok((v2bar, tv, cs, warnings))
}

/// Reduction matrices We, Ve ∈ ℝ^{(n+m)×(r′+m)}. `top` replaces V̄2 in the
/// first column block of We (V̄2 itself, or X·V̄2 for the KYP variant).
pub fn reduction_matrices_with(sse: &SseTransform, v2bar: MatRef<'_, f64>, top: MatRef<'_, f64>) -> Result<(Mat<f64>, Mat<f64>)> {
    let d = sse.dims();
    let (n, m) = (d.n(), d.m);
    let rp = v2bar.ncols();
    let o = d.offsets();
    let b = &sse.blocks;
    let mut we = Mat::<f64>::zeros(n + m, rp + m);
    let mut ve = Mat::<f64>::zeros(n + m, rp + m);

    we.as_mut().submatrix_mut(o[1], 0, d.n2, rp).copy_from(top);
    let w13 = scaled(sse.a33t_solve(b.a(2, 3).tmul_dense(top).as_ref())?.as_ref(), -1.0);
    we.as_mut().submatrix_mut(o[2], 0, d.n3, rp).copy_from(&w13);

    let c4t = b.c(4).transpose().to_dense();
    let w4 = sse.a14t_solve(c4t.as_ref())?;
    we.as_mut().submatrix_mut(o[0], rp, d.n1, m).copy_from(&w4);
    let c3t = b.c(3).transpose().to_dense();
    let w3 = sse.a33t_solve((c3t - b.a(1, 3).tmul_dense(w4.as_ref())).as_ref())?;
    we.as_mut().submatrix_mut(o[2], rp, d.n3, m).copy_from(&w3);
    we.as_mut().submatrix_mut(n, rp, m, m).copy_from(Mat::<f64>::identity(m, m));

    ve.as_mut().submatrix_mut(o[1], 0, d.n2, rp).copy_from(v2bar);
    let v4 = sse.a14t_solve(b.b(4).to_dense().as_ref())?;
    ve.as_mut().submatrix_mut(o[0], rp, d.n1, m).copy_from(&v4);
    ve.as_mut().submatrix_mut(n, rp, m, m).copy_from(Mat::<f64>::identity(m, m));
    Ok((we, ve))
}

pub fn reduction_matrices(sys: &StaircaseSystem, v2bar: MatRef<'_, f64>) -> Result<(Mat<f64>, Mat<f64>)> {
    let sse = build_transformations(&assemble_operator_blocks(sys))?;
    reduction_matrices_with(&sse, v2bar, v2bar)
}

/// Proper reduced pencil in pH form plus the improper coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedParts {
    pub er: Mat<f64>,
    pub j: Mat<f64>,
    pub r: Mat<f64>,
    pub g: Mat<f64>,
    pub p: Mat<f64>,
    pub s: Mat<f64>,
    pub n: Mat<f64>,
    pub dinf: Mat<f64>,
    pub warnings: Vec<String>,
}

impl ReducedParts {
    pub fn r_prime(&self) -> usize {
        self.er.nrows()
    }
    pub fn m(&self) -> usize {
        self.s.nrows()
    }
    /// Ā = J̄ − R̄
    pub fn a(&self) -> Mat<f64> {
        &self.j - &self.r
    }
    /// B̄ = Ḡ − P̄
    pub fn b(&self) -> Mat<f64> {
        &self.g - &self.p
    }
    /// C̄ = (Ḡ + P̄)ᵀ
    pub fn c(&self) -> Mat<f64> {
        (&self.g + &self.p).transpose().to_owned()
    }
    pub fn d(&self) -> Mat<f64> {
        &self.s + &self.n
    }

    /// C̄(sĒ − Ā)⁻¹B̄ + D̄, without the improper term.
    pub fn proper_transfer(&self, s: c64) -> Result<Mat<c64>> {
        let a = dense::to_c(self.a().as_ref());
        let e = dense::to_c(self.er.as_ref());
        let pencil = Mat::from_fn(a.nrows(), a.ncols(), |i, j| s * e[(i, j)] - a[(i, j)]);
        let x = dense::solve_c(pencil.as_ref(), dense::to_c(self.b().as_ref()).as_ref())
            .map_err(|_| Error::ShiftSingular { re: s.re, im: s.im })?;
        Ok(dense::to_c(self.c().as_ref()) * &x + dense::to_c(self.d().as_ref()))
    }

    /// Splits [[−Ā, −B̄], [C̄, D̄]] into its pH parts.
    pub fn from_system_matrix(er: Mat<f64>, m0: MatRef<'_, f64>, dinf: Mat<f64>, rp: usize, m: usize) -> Self {
        let a = scaled(m0.submatrix(0, 0, rp, rp), -1.0);
        let b = scaled(m0.submatrix(0, rp, rp, m), -1.0);
        let ct = m0.submatrix(rp, 0, m, rp).transpose().to_owned();
        let d = m0.submatrix(rp, rp, m, m).to_owned();
        Self {
            er,
            j: dense::skew(a.as_ref()),
            r: scaled(dense::sym(a.as_ref()).as_ref(), -1.0),
            g: dense::axpby(0.5, b.as_ref(), 0.5, ct.as_ref()),
            p: dense::axpby(0.5, ct.as_ref(), -0.5, b.as_ref()),
            s: dense::sym(d.as_ref()),
            n: dense::skew(d.as_ref()),
            dinf,
            warnings: Vec::new(),
        }
    }
}

/// M₀ X for M₀ = [[−A, −B], [C, D]] with X ∈ ℝ^{(n+m)×k}.
fn apply_m0(sys: &StaircaseSystem, a: &SparseMatrix, b: &SparseMatrix, c: &SparseMatrix, x: MatRef<'_, f64>) -> Mat<f64> {
    let n = sys.n_states();
    let m = sys.m();
    let xs = x.subrows(0, n);
    let xu = x.subrows(n, m);
    let top = scaled((a.mul_dense(xs) + b.mul_dense(xu)).as_ref(), -1.0);
    let bot = c.mul_dense(xs) + sys.d() * xu;
    dense::vstack(&[top.as_ref(), bot.as_ref()])
}

/// Weᵀ R(s) Ve split into s·blkdiag(Ēr, Dinf) and its skew/symmetric parts.
pub fn reduce(sys: &StaircaseSystem, we: MatRef<'_, f64>, ve: MatRef<'_, f64>) -> Result<ReducedParts> {
    let n = sys.n_states();
    let m = sys.m();
    let k = ve.ncols();
    if we.ncols() != k || we.nrows() != n + m || ve.nrows() != n + m || k < m {
        return Err(Error::Dimension("We/Ve shapes do not match the system".into()));
    }
    let rp = k - m;
    let e = sys.e_full();
    let ev = dense::vstack(&[e.mul_dense(ve.subrows(0, n)).as_ref(), Mat::<f64>::zeros(m, k).as_ref()]);
    let m1 = we.transpose() * &ev;
    let mv = apply_m0(sys, &sys.a_full(), &sys.b_full(), &sys.c_full(), ve);
    let m0 = we.transpose() * &mv;

    let mut warnings = Vec::new();
    let er_raw = m1.submatrix(0, 0, rp, rp).to_owned();
    let asym = max_abs(dense::skew(er_raw.as_ref()).as_ref());
    let scale = max_abs(er_raw.as_ref()).max(f64::MIN_POSITIVE);
    if asym > 1e-10 * scale {
        warnings.push(format!("reduced E asymmetric by {:.3e} (relative), symmetrized", asym / scale));
    }
    let cross = max_abs(m1.submatrix(0, rp, rp, m)).max(max_abs(m1.submatrix(rp, 0, m, rp)));
    if cross > 1e-10 * max_abs(m1.as_ref()).max(1.0) {
        return Err(Error::Consistency(format!("s-coefficient couples proper and improper blocks ({cross:.3e})")));
    }
    let dinf = dense::sym(m1.submatrix(rp, rp, m, m));
    let mut parts = ReducedParts::from_system_matrix(dense::sym(er_raw.as_ref()), m0.as_ref(), dinf, rp, m);
    parts.warnings = warnings;
    Ok(parts)
}

/// Rank-revealing factor Dinf ≈ L∞ L∞ᵀ with L∞ ∈ ℝ^{m×q}.
pub fn factor_dinf(dinf: MatRef<'_, f64>, tol: f64) -> Result<(Mat<f64>, usize)> {
    let m = dinf.nrows();
    if m == 0 {
        return Ok((Mat::zeros(0, 0), 0));
    }
    let scale = max_abs(dinf);
    if scale == 0.0 {
        return Ok((Mat::zeros(m, 0), 0));
    }
    let asym = max_abs(dense::skew(dinf).as_ref());
    if asym > 1e-10 * scale {
        return Err(Error::InvalidInput(format!("Dinf is not symmetric (defect {asym:.3e})")));
    }
    let evd = dense::sym(dinf)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let lam = evd.S().column_vector();
    let lmax = (0..m).map(|i| lam[i]).fold(0.0f64, f64::max);
    if (0..m).any(|i| lam[i] < -1e-10 * lmax.max(scale)) {
        return Err(Error::InvalidInput("Dinf is indefinite".into()));
    }
    let keep: Vec<usize> = (0..m).rev().filter(|&i| lam[i] > tol * lmax).collect();
    let q = keep.len();
    let u = evd.U();
    let l = Mat::from_fn(m, q, |i, j| u[(i, keep[j])] * lam[keep[j]].sqrt());
    Ok((l, q))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub shifts: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub directions: Vec<Vec<[f64; 2]>>,
    pub change: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction_change: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_prime: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub shifts: Vec<[f64; 2]>,
    pub directions: Vec<Vec<[f64; 2]>>,
    pub history: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default)]
    pub kyp_minus: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default)]
    pub h2_unbounded: bool,
    pub warnings: Vec<String>,
}

impl Provenance {
    pub fn new(method: &str, data: &InterpolationData) -> Self {
        Self {
            method: method.to_string(),
            shifts: data.as_pairs(),
            directions: data.directions_as_pairs(),
            ..Default::default()
        }
    }
}

/// Minimal staircase ROM with dims (q, r′, 0, q).
#[derive(Clone, Debug)]
pub struct ReducedModel {
    pub system: StaircaseSystem,
    pub q: usize,
    pub r_prime: usize,
    pub l_inf: Mat<f64>,
    pub provenance: Provenance,
}

impl ReducedModel {
    pub fn index(&self) -> u8 {
        self.system.index()
    }
    pub fn order(&self) -> usize {
        self.system.n_states()
    }
}

/// Builds the staircase ROM; with q = 0 it is the reduced proper part.
pub fn assemble_rom(parts: &ReducedParts, l_inf: MatRef<'_, f64>, q: usize) -> Result<StaircaseSystem> {
    let rp = parts.r_prime();
    let m = parts.m();
    if l_inf.ncols() != q || (q > 0 && l_inf.nrows() != m) {
        return Err(Error::Dimension("L_inf does not match q and m".into()));
    }
    let n = rp + 2 * q;
    let dims = BlockDims::new(q, rp, 0, q, m);
    let sp = |x: MatRef<'_, f64>| SparseMatrix::from_dense(x);
    let er = sp(parts.er.as_ref());
    let sizes = [q, rp, 0, q];
    let ident = SparseMatrix::identity(q);
    let neg_ident = ident.scale(-1.0);
    let j22 = sp(parts.j.as_ref());
    let r22 = sp(parts.r.as_ref());
    let j = SparseMatrix::assemble(&sizes, &sizes, &[(0, 3, &ident), (3, 0, &neg_ident), (1, 1, &j22)]);
    let r = SparseMatrix::assemble(&sizes, &sizes, &[(1, 1, &r22)]);
    let ltt = sp(l_inf.transpose());
    let g2 = sp(parts.g.as_ref());
    let p2 = sp(parts.p.as_ref());
    let g = SparseMatrix::assemble(&sizes, &[m], &[(1, 0, &g2), (3, 0, &ltt)]);
    let p = SparseMatrix::assemble(&sizes, &[m], &[(1, 0, &p2)]);
    debug_assert_eq!(g.nrows(), n);
    StaircaseSystem::new(dims, SparseMatrix::identity(q), er, j, r, g, p, parts.s.clone(), parts.n.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationOptions {
    pub tol_cs: f64,
    pub dinf_tol: f64,
}

impl Default for InterpolationOptions {
    fn default() -> Self {
        Self { tol_cs: TOL_CS, dinf_tol: 1e-12 }
    }
}

/// Cached factorizations shared by repeated reductions of one FOM.
pub struct Reducer<'a> {
    pub sys: &'a StaircaseSystem,
    pub sse: SseTransform,
    pub pencil: ShiftedPencil,
    pub proper: ProperSubsystem,
    pub l_inf: Mat<f64>,
    pub q: usize,
    pub opts: InterpolationOptions,
    b_full: SparseMatrix,
    a_full: SparseMatrix,
    c_full: SparseMatrix,
    e_full: SparseMatrix,
    /// X₋ for the modified left reduction matrix
    pub x_minus: Option<Mat<f64>>,
}

impl<'a> Reducer<'a> {
    pub fn new(sys: &'a StaircaseSystem, opts: InterpolationOptions) -> Result<Self> {
        let sse = build_transformations(&assemble_operator_blocks(sys)).stage("transformation")?;
        let proper = proper_closed_form(sys, &sse).stage("proper part")?;
        let (l_inf, q) = factor_dinf(proper.dinf.as_ref(), opts.dinf_tol).stage("Dinf factorization")?;
        let pencil = ShiftedPencil::new(&sys.e_full(), &sys.a_full())?;
        Ok(Self {
            sys,
            sse,
            pencil,
            proper,
            l_inf,
            q,
            opts,
            b_full: sys.b_full(),
            a_full: sys.a_full(),
            c_full: sys.c_full(),
            e_full: sys.e_full(),
            x_minus: None,
        })
    }

    pub fn with_x_minus(mut self, x: Mat<f64>) -> Self {
        self.x_minus = Some(x);
        self
    }

    pub fn basis(&self, data: &InterpolationData) -> Result<TangentialBasis> {
        data.check()?;
        if data.m() != self.sys.m() {
            return Err(Error::InvalidInput(format!(
                "directions have length {}, system has {} ports",
                data.m(),
                self.sys.m()
            )));
        }
        let v = krylov_columns(&self.pencil, &self.b_full, data).stage("tangential basis")?;
        let (v2bar, tv, cs, warnings) = orthonormalize_v2(v.as_ref(), &self.sys.dims(), self.opts.tol_cs).stage("orthonormalization")?;
        Ok(TangentialBasis { dims: self.sys.dims(), v, v2bar, tv, cs, b_real: data.realified_directions()?, warnings })
    }

    pub fn matrices(&self, v2bar: MatRef<'_, f64>) -> Result<(Mat<f64>, Mat<f64>)> {
        match &self.x_minus {
            Some(x) => {
                let top = x * v2bar;
                reduction_matrices_with(&self.sse, v2bar, top.as_ref())
            }
            None => reduction_matrices_with(&self.sse, v2bar, v2bar),
        }
        .stage("reduction matrices")
    }

    pub fn reduce(&self, v2bar: MatRef<'_, f64>) -> Result<ReducedParts> {
        let (we, ve) = self.matrices(v2bar)?;
        let n = self.sys.n_states();
        let m = self.sys.m();
        let k = ve.ncols();
        let rp = k - m;
        let ev = dense::vstack(&[self.e_full.mul_dense(ve.as_ref().subrows(0, n)).as_ref(), Mat::<f64>::zeros(m, k).as_ref()]);
        let m1 = we.transpose() * &ev;
        let mv = apply_m0(self.sys, &self.a_full, &self.b_full, &self.c_full, ve.as_ref());
        let m0 = we.transpose() * &mv;
        let er_raw = m1.submatrix(0, 0, rp, rp).to_owned();
        let mut warnings = Vec::new();
        let asym = max_abs(dense::skew(er_raw.as_ref()).as_ref());
        let scale = max_abs(er_raw.as_ref()).max(f64::MIN_POSITIVE);
        if asym > 1e-10 * scale {
            warnings.push(format!("reduced E asymmetric by {:.3e} (relative), symmetrized", asym / scale));
        }
        let er = dense::sym(er_raw.as_ref());
        if self.x_minus.is_some() && rp > 0 {
            let ev = dense::sym_eigenvalues(er.as_ref())?;
            let margin = ev[0] / ev[rp - 1].abs().max(f64::MIN_POSITIVE);
            if margin <= 1e-12 {
                return Err(Error::InvalidModel(format!("reduced E from X- is not positive definite (margin {margin:.3e})")));
            }
        }
        let dinf = dense::sym(m1.submatrix(rp, rp, m, m));
        let mut parts = ReducedParts::from_system_matrix(er, m0.as_ref(), dinf, rp, m);
        parts.warnings = warnings;
        Ok(parts)
    }

    pub fn assemble(&self, parts: &ReducedParts, provenance: Provenance) -> Result<ReducedModel> {
        let system = assemble_rom(parts, self.l_inf.as_ref(), self.q).stage("ROM assembly")?;
        Ok(ReducedModel { system, q: self.q, r_prime: parts.r_prime(), l_inf: self.l_inf.clone(), provenance })
    }

    /// Full pipeline for fixed interpolation data.
    pub fn interpolate(&self, data: &InterpolationData, method: &str) -> Result<(ReducedModel, TangentialBasis, ReducedParts)> {
        let basis = self.basis(data)?;
        let parts = self.reduce(basis.v2bar.as_ref()).stage("reduction")?;
        let mut prov = Provenance::new(method, data);
        prov.kyp_minus = self.x_minus.is_some();
        prov.warnings.extend(basis.warnings.iter().cloned());
        prov.warnings.extend(parts.warnings.iter().cloned());
        let rom = self.assemble(&parts, prov)?;
        Ok((rom, basis, parts))
    }
}

/// Tangential interpolation with fixed data.
pub fn interpolate(sys: &StaircaseSystem, data: &InterpolationData, opts: &InterpolationOptions) -> Result<ReducedModel> {
    let red = Reducer::new(sys, *opts)?;
    Ok(red.interpolate(data, "fixed")?.0)
}

/// Realified shifts as complex numbers for display.
pub fn to_c64(p: &[f64; 2]) -> c64 {
    c64::new(p[0], p[1])
}
