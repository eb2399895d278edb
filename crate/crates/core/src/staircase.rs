//! Block-structured pH-DAE in staircase form, structural validation and
//! index classification.

use faer::{c64, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dense::{self, max_abs};
use crate::linalg::sparse::offsets;
use crate::linalg::{ShiftedPencil, SparseLu, SparseMatrix};

/// Block dimensions n1..n4 and port count m.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDims {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
    pub m: usize,
}

impl BlockDims {
    pub fn new(n1: usize, n2: usize, n3: usize, n4: usize, m: usize) -> Self {
        Self { n1, n2, n3, n4, m }
    }
    pub fn n(&self) -> usize {
        self.n1 + self.n2 + self.n3 + self.n4
    }
    pub fn sizes(&self) -> [usize; 4] {
        [self.n1, self.n2, self.n3, self.n4]
    }
    /// Start offsets of the four state blocks plus n.
    pub fn offsets(&self) -> [usize; 5] {
        let o = offsets(&self.sizes());
        [o[0], o[1], o[2], o[3], o[4]]
    }
    pub fn index(&self) -> u8 {
        if self.n1 > 0 {
            2
        } else if self.n3 > 0 {
            1
        } else {
            0
        }
    }
}

/// Differentiation index of the uncontrolled system.
pub fn differentiation_index(dims: &BlockDims) -> u8 {
    dims.index()
}

/// pH-DAE  E ẋ = (J − R) x + (G − P) u,  y = (G + P)ᵀ x + (S + N) u.
#[derive(Clone, Debug, PartialEq)]
pub struct StaircaseSystem {
    dims: BlockDims,
    pub e11: SparseMatrix,
    pub e22: SparseMatrix,
    pub j: SparseMatrix,
    pub r: SparseMatrix,
    pub g: SparseMatrix,
    pub p: SparseMatrix,
    pub s: Mat<f64>,
    pub n: Mat<f64>,
}

fn shape_err(name: &str, got: (usize, usize), want: (usize, usize)) -> Error {
    Error::Dimension(format!("{name} is {}x{}, expected {}x{}", got.0, got.1, want.0, want.1))
}

impl StaircaseSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dims: BlockDims,
        e11: SparseMatrix,
        e22: SparseMatrix,
        j: SparseMatrix,
        r: SparseMatrix,
        g: SparseMatrix,
        p: SparseMatrix,
        s: Mat<f64>,
        n: Mat<f64>,
    ) -> Result<Self> {
        if dims.n1 != dims.n4 {
            return Err(Error::Dimension(format!(
                "n1 = {} and n4 = {} must agree (index-2 pairing)",
                dims.n1, dims.n4
            )));
        }
        let nn = dims.n();
        let m = dims.m;
        let checks: [(&str, (usize, usize), (usize, usize)); 8] = [
            ("E11", (e11.nrows(), e11.ncols()), (dims.n1, dims.n1)),
            ("E22", (e22.nrows(), e22.ncols()), (dims.n2, dims.n2)),
            ("J", (j.nrows(), j.ncols()), (nn, nn)),
            ("R", (r.nrows(), r.ncols()), (nn, nn)),
            ("G", (g.nrows(), g.ncols()), (nn, m)),
            ("P", (p.nrows(), p.ncols()), (nn, m)),
            ("S", (s.nrows(), s.ncols()), (m, m)),
            ("N", (n.nrows(), n.ncols()), (m, m)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(shape_err(name, got, want));
            }
        }
        Ok(Self { dims, e11, e22, j, r, g, p, s, n })
    }

    pub fn dims(&self) -> BlockDims {
        self.dims
    }
    pub fn n_states(&self) -> usize {
        self.dims.n()
    }
    pub fn m(&self) -> usize {
        self.dims.m
    }
    pub fn index(&self) -> u8 {
        self.dims.index()
    }

    fn range(&self, b: usize) -> (usize, usize) {
        let o = self.dims.offsets();
        (o[b - 1], o[b] - o[b - 1])
    }

    /// Block (i, k) of J, 1-based block indices.
    pub fn j_block(&self, i: usize, k: usize) -> SparseMatrix {
        let (r0, nr) = self.range(i);
        let (c0, nc) = self.range(k);
        self.j.submatrix(r0, nr, c0, nc)
    }
    pub fn r_block(&self, i: usize, k: usize) -> SparseMatrix {
        let (r0, nr) = self.range(i);
        let (c0, nc) = self.range(k);
        self.r.submatrix(r0, nr, c0, nc)
    }
    pub fn g_block(&self, i: usize) -> SparseMatrix {
        let (r0, nr) = self.range(i);
        self.g.submatrix(r0, nr, 0, self.dims.m)
    }
    pub fn p_block(&self, i: usize) -> SparseMatrix {
        let (r0, nr) = self.range(i);
        self.p.submatrix(r0, nr, 0, self.dims.m)
    }

    pub fn e_full(&self) -> SparseMatrix {
        let s = self.dims.sizes();
        SparseMatrix::assemble(&s, &s, &[(0, 0, &self.e11), (1, 1, &self.e22)])
    }
    /// A = J − R
    pub fn a_full(&self) -> SparseMatrix {
        self.j.axpby(1.0, &self.r, -1.0)
    }
    /// B = G − P
    pub fn b_full(&self) -> SparseMatrix {
        self.g.axpby(1.0, &self.p, -1.0)
    }
    /// C = (G + P)ᵀ
    pub fn c_full(&self) -> SparseMatrix {
        self.g.axpby(1.0, &self.p, 1.0).transpose()
    }
    /// D = S + N
    pub fn d(&self) -> Mat<f64> {
        &self.s + &self.n
    }

    /// Stored energy ½ xᵀ E x.
    pub fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_states() {
            return Err(Error::Dimension(format!("state has length {}, expected {}", x.len(), self.n_states())));
        }
        let o = self.dims.offsets();
        let quad = |m: &SparseMatrix, off: usize| -> f64 { m.triplets().map(|(i, j, v)| x[off + i] * v * x[off + j]).sum() };
        Ok(0.5 * (quad(&self.e11, o[0]) + quad(&self.e22, o[1])))
    }

    /// Structure matrix Γ = [[−J, −G], [Gᵀ, N]].
    pub fn gamma(&self) -> SparseMatrix {
        let nn = self.n_states();
        let m = self.dims.m;
        let gt = self.g.transpose();
        let nm = SparseMatrix::from_dense(self.n.as_ref());
        let mj = self.j.scale(-1.0);
        let mg = self.g.scale(-1.0);
        SparseMatrix::assemble(&[nn, m], &[nn, m], &[(0, 0, &mj), (0, 1, &mg), (1, 0, &gt), (1, 1, &nm)])
    }

    /// Dissipation matrix W = [[R, P], [Pᵀ, sym(S)]].
    pub fn w(&self) -> SparseMatrix {
        let nn = self.n_states();
        let m = self.dims.m;
        let pt = self.p.transpose();
        let ss = SparseMatrix::from_dense(dense::sym(self.s.as_ref()).as_ref());
        SparseMatrix::assemble(&[nn, m], &[nn, m], &[(0, 0, &self.r), (0, 1, &self.p), (1, 0, &pt), (1, 1, &ss)])
    }
}

/// A = J − R, B = G − P, C = (G + P)ᵀ, D = S + N, block-wise (0-based indices).
#[derive(Clone, Debug)]
pub struct OperatorBlocks {
    pub dims: BlockDims,
    pub a: Vec<Vec<SparseMatrix>>,
    pub b: Vec<SparseMatrix>,
    pub c: Vec<SparseMatrix>,
    pub d: Mat<f64>,
}

impl OperatorBlocks {
    /// A_ik with 1-based block indices.
    pub fn a(&self, i: usize, k: usize) -> &SparseMatrix {
        &self.a[i - 1][k - 1]
    }
    pub fn b(&self, i: usize) -> &SparseMatrix {
        &self.b[i - 1]
    }
    pub fn c(&self, i: usize) -> &SparseMatrix {
        &self.c[i - 1]
    }
}

pub fn assemble_operator_blocks(sys: &StaircaseSystem) -> OperatorBlocks {
    let a_full = sys.a_full();
    let b_full = sys.b_full();
    let c_full = sys.c_full();
    let o = sys.dims.offsets();
    let sz = sys.dims.sizes();
    let m = sys.dims.m;
    let a = (0..4)
        .map(|i| (0..4).map(|k| a_full.submatrix(o[i], sz[i], o[k], sz[k])).collect())
        .collect();
    let b = (0..4).map(|i| b_full.submatrix(o[i], sz[i], 0, m)).collect();
    let c = (0..4).map(|i| c_full.submatrix(0, m, o[i], sz[i])).collect();
    OperatorBlocks { dims: sys.dims, a, b, c, d: sys.d() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured violation (0 when the property holds exactly).
    pub violation: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
    fn push(&mut self, name: &str, violation: f64, tolerance: f64) {
        let passed = violation.is_finite() && violation <= tolerance;
        self.checks.push(Check { name: name.to_string(), passed, violation, tolerance });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<34} {}  violation {:.3e}  tol {:.3e}",
                c.name,
                if c.passed { "ok  " } else { "FAIL" },
                c.violation,
                c.tolerance
            )?;
        }
        write!(f, "{}", if self.is_valid() { "valid staircase pH-DAE" } else { "NOT a valid staircase pH-DAE" })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// relative skew/symmetry defect
    pub skew: f64,
    /// relative PSD slack: min eig ≥ −psd·‖·‖₂
    pub psd: f64,
    /// invertibility: σ_min ≥ inv·σ_max
    pub invertibility: f64,
    /// structurally zero blocks, relative to the largest entry
    pub pattern: f64,
    /// above this size spectral checks switch to sparse certificates
    pub dense_limit: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { skew: 1e-12, psd: 1e-10, invertibility: 1e-12, pattern: 1e-12, dense_limit: 2000 }
    }
}

fn rel(x: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        x / scale
    } else {
        x
    }
}

/// Returns −λ_min/‖M‖₂ clipped at 0 (relative PSD violation) for a symmetric matrix.
pub fn psd_violation(m: &SparseMatrix, tol: &Tolerances) -> Result<f64> {
    let n = m.nrows();
    if n == 0 || m.nnz() == 0 {
        return Ok(0.0);
    }
    if n <= tol.dense_limit {
        let d = m.to_dense();
        let ev = dense::sym_eigenvalues(d.as_ref())?;
        let lmin = ev[0];
        let norm = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        return Ok((-lmin / norm).max(0.0));
    }
    let norm = sym_norm_estimate(m);
    // shifted Cholesky certificate: M + t‖M‖ I ≻ 0  ⇔  λ_min > −t‖M‖
    let ok = |t: f64| -> bool {
        let shifted = m.axpby(1.0, &SparseMatrix::identity(n), t * norm);
        shifted.as_faer().sp_cholesky(Side::Lower).is_ok()
    };
    if ok(tol.psd * 0.5) {
        return Ok(0.0);
    }
    // bisection in log scale for the magnitude of the violation
    let (mut lo, mut hi) = (tol.psd * 0.5, 1.0);
    if !ok(hi) {
        return Ok(f64::INFINITY);
    }
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo < 1.05 {
            break;
        }
    }
    Ok(hi)
}

fn sym_norm_estimate(m: &SparseMatrix) -> f64 {
    let n = m.nrows();
    let mut x = Mat::from_fn(n, 1, |i, _| 1.0 + ((i * 7919) % 13) as f64 * 0.01);
    let mut lam = 0.0;
    for _ in 0..60 {
        let y = m.mul_dense(x.as_ref());
        let ny = y.norm_l2();
        if ny == 0.0 {
            return 0.0;
        }
        lam = ny / x.norm_l2();
        x = dense::scaled(y.as_ref(), 1.0 / ny);
    }
    lam
}

/// σ_min/σ_max of a square matrix; 0 if singular.
pub fn inverse_condition(m: &SparseMatrix, tol: &Tolerances) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    if n <= tol.dense_limit {
        return match dense::sv_extremes(m.to_dense().as_ref()) {
            Ok((lo, hi)) if hi > 0.0 => lo / hi,
            _ => 0.0,
        };
    }
    let lu = match SparseLu::new(m) {
        Ok(lu) => lu,
        Err(_) => return 0.0,
    };
    let mut x = Mat::from_fn(n, 1, |i, _| 1.0 + ((i * 104729) % 17) as f64 * 0.01);
    let mut smax = 0.0;
    for _ in 0..40 {
        let y = m.tmul_dense(m.mul_dense(x.as_ref()).as_ref());
        let ny = y.norm_l2();
        smax = (ny / x.norm_l2()).sqrt();
        if ny == 0.0 {
            return 0.0;
        }
        x = dense::scaled(y.as_ref(), 1.0 / ny);
    }
    let mut x = Mat::from_fn(n, 1, |i, _| 1.0 - ((i * 7907) % 11) as f64 * 0.02);
    let mut inv_norm = 0.0;
    for _ in 0..40 {
        let y = match lu.solve(x.as_ref()).and_then(|z| lu.solve_transpose(z.as_ref())) {
            Ok(y) => y,
            Err(_) => return 0.0,
        };
        let ny = y.norm_l2();
        if !ny.is_finite() {
            return 0.0;
        }
        inv_norm = (ny / x.norm_l2()).sqrt();
        x = dense::scaled(y.as_ref(), 1.0 / ny);
    }
    if smax == 0.0 {
        0.0
    } else {
        1.0 / (inv_norm * smax)
    }
}

/// Checks every structural invariant of a staircase pH-DAE.
pub fn validate_staircase(sys: &StaircaseSystem, tol: &Tolerances) -> Result<ValidationReport> {
    let d = sys.dims();
    if d.n1 != d.n4 {
        return Err(Error::Dimension(format!("n1 = {} but n4 = {}", d.n1, d.n4)));
    }
    let mut rep = ValidationReport::default();

    for (name, e) in [("E11", &sys.e11), ("E22", &sys.e22)] {
        rep.push(&format!("{name} symmetric"), rel(e.symmetry_defect(-1.0), e.norm_max()), tol.skew);
        let n = e.nrows();
        let pd_violation = if n == 0 {
            0.0
        } else if n <= tol.dense_limit {
            let lmin = dense::min_eig_sym(e.to_dense().as_ref())?;
            if lmin > 0.0 {
                0.0
            } else {
                -lmin + f64::MIN_POSITIVE
            }
        } else if e.as_faer().sp_cholesky(Side::Lower).is_ok() {
            0.0
        } else {
            f64::INFINITY
        };
        rep.push(&format!("{name} positive definite"), pd_violation, 0.0);
    }

    let jmax = sys.j.norm_max();
    rep.push("J skew-symmetric", rel(sys.j.symmetry_defect(1.0), jmax), tol.skew);
    let zero_blocks = [(2, 4), (3, 4), (4, 2), (4, 3), (4, 4)];
    let jz = zero_blocks.iter().map(|&(i, k)| sys.j_block(i, k).norm_max()).fold(0.0, f64::max);
    rep.push("J zero blocks (24,34,42,43,44)", rel(jz, jmax), tol.pattern);

    let rmax = sys.r.norm_max();
    rep.push("R symmetric", rel(sys.r.symmetry_defect(-1.0), rmax), tol.skew);
    let r4 = (1..=4).map(|k| sys.r_block(4, k).norm_max().max(sys.r_block(k, 4).norm_max())).fold(0.0, f64::max);
    rep.push("R row/column 4 zero", rel(r4, rmax), tol.pattern);
    rep.push("R positive semidefinite", psd_violation(&sys.r, tol)?, tol.psd);

    let p4 = sys.p_block(4).norm_max();
    rep.push("P block 4 zero", rel(p4, sys.p.norm_max().max(rmax)), tol.pattern);
    rep.push("S symmetric", rel(max_abs(dense::skew(sys.s.as_ref()).as_ref()), max_abs(sys.s.as_ref())), tol.skew);
    rep.push("N skew-symmetric", rel(max_abs(dense::sym(sys.n.as_ref()).as_ref()), max_abs(sys.n.as_ref())), tol.skew);
    let gamma = sys.gamma();
    rep.push("Gamma skew-symmetric", gamma.symmetry_defect(1.0) / gamma.norm_max().max(1.0), tol.skew);
    rep.push("W positive semidefinite", psd_violation(&sys.w(), tol)?, tol.psd);

    if d.n1 > 0 {
        let c = inverse_condition(&sys.j_block(4, 1), tol);
        rep.push("J41 invertible", if c >= tol.invertibility { 0.0 } else { tol.invertibility - c }, 0.0);
    }
    if d.n3 > 0 {
        let a33 = sys.j_block(3, 3).axpby(1.0, &sys.r_block(3, 3), -1.0);
        let c = inverse_condition(&a33, tol);
        rep.push("J33 - R33 invertible", if c >= tol.invertibility { 0.0 } else { tol.invertibility - c }, 0.0);
    }
    rep.push("pencil regular", regularity_defect(sys), 1e-8);
    Ok(rep)
}

/// Relative residual of a solve with λ₀E − A at a fixed point on the unit circle.
fn regularity_defect(sys: &StaircaseSystem) -> f64 {
    let n = sys.n_states();
    if n == 0 {
        return 0.0;
    }
    let lambda0 = c64::from_polar(1.0, 2.399_963_229_728_653);
    let pencil = match ShiftedPencil::new(&sys.e_full(), &sys.a_full()) {
        Ok(p) => p,
        Err(_) => return f64::INFINITY,
    };
    let lu = match pencil.factor(lambda0) {
        Ok(lu) => lu,
        Err(_) => return f64::INFINITY,
    };
    let b = Mat::from_fn(n, 1, |i, _| c64::new(1.0 + (i % 7) as f64, -((i % 3) as f64)));
    match lu.solve_checked(b.as_ref(), 1e-8) {
        Ok(_) => 0.0,
        Err(_) => f64::INFINITY,
    }
}

/// Convenience: dense copy of a block.
pub fn dense_block(m: &SparseMatrix) -> Mat<f64> {
    m.to_dense()
}

pub fn mat_from_rows(rows: &[&[f64]]) -> Mat<f64> {
    let nr = rows.len();
    let nc = rows.first().map(|r| r.len()).unwrap_or(0);
    Mat::from_fn(nr, nc, |i, j| rows[i][j])
}
