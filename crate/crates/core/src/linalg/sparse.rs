//! Compressed sparse column storage and shifted-pencil factorizations.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

/// Real CSC matrix with sorted, duplicate-free row indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            col_ptr: vec![0; ncols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let trip: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(n, n, &trip)
    }

    /// Builds from (row, col, value) triplets. Duplicates are summed and
    /// entries that end up exactly zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..trip.len()).collect();
        order.sort_by_key(|&k| (trip[k].1, trip[k].0));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        let mut col_of = Vec::with_capacity(trip.len());
        for &k in &order {
            let (i, j, v) = trip[k];
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) out of bounds {nrows}x{ncols}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(i);
                values.push(v);
                col_of.push(j);
                last = Some((i, j));
            }
        }
        let mut r2 = Vec::with_capacity(row_idx.len());
        let mut v2 = Vec::with_capacity(values.len());
        for k in 0..row_idx.len() {
            if values[k] != 0.0 {
                r2.push(row_idx[k]);
                v2.push(values[k]);
                col_ptr[col_of[k] + 1] += 1;
            }
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Self { nrows, ncols, col_ptr, row_idx: r2, values: v2 }
    }

    pub fn from_dense(m: MatRef<'_, f64>) -> Self {
        let mut trip = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }
    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }
    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1]).map(move |k| (self.row_idx[k], j, self.values[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let rows = &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]];
        match rows.binary_search(&i) {
            Ok(k) => self.values[self.col_ptr[j] + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let trip: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &trip)
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        if a == 0.0 {
            return Self::zeros(self.nrows, self.ncols);
        }
        out
    }

    /// alpha*self + beta*other
    pub fn axpby(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip: Vec<_> = self.triplets().map(|(i, j, v)| (i, j, alpha * v)).collect();
        trip.extend(other.triplets().map(|(i, j, v)| (i, j, beta * v)));
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    pub fn submatrix(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> Self {
        let mut trip = Vec::new();
        for j in c0..c0 + nc {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                if i >= r0 && i < r0 + nr {
                    trip.push((i - r0, j - c0, self.values[k]));
                }
            }
        }
        Self::from_triplets(nr, nc, &trip)
    }

    /// Assembles a block matrix. `blocks` lists (block row, block col, matrix).
    pub fn assemble(row_dims: &[usize], col_dims: &[usize], blocks: &[(usize, usize, &SparseMatrix)]) -> Self {
        let roff = offsets(row_dims);
        let coff = offsets(col_dims);
        let mut trip = Vec::new();
        for &(bi, bj, m) in blocks {
            assert_eq!(m.nrows, row_dims[bi], "block ({bi},{bj}) row count");
            assert_eq!(m.ncols, col_dims[bj], "block ({bi},{bj}) column count");
            trip.extend(m.triplets().map(|(i, j, v)| (i + roff[bi], j + coff[bj], v)));
        }
        Self::from_triplets(roff[row_dims.len()], coff[col_dims.len()], &trip)
    }

    pub fn norm_max(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn norm_fro(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry of self + sign*selfᵀ.
    pub fn symmetry_defect(&self, sign: f64) -> f64 {
        let t = self.transpose();
        self.axpby(1.0, &t, sign).norm_max()
    }

    pub fn mul_dense(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(self.ncols, x.nrows());
        let mut y = Mat::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            for j in 0..self.ncols {
                let xj = x[(j, c)];
                if xj == 0.0 {
                    continue;
                }
                for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                    y[(self.row_idx[k], c)] += self.values[k] * xj;
                }
            }
        }
        y
    }

    pub fn mul_dense_c(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        assert_eq!(self.ncols, x.nrows());
        let mut y = Mat::<c64>::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            for j in 0..self.ncols {
                let xj = x[(j, c)];
                for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                    y[(self.row_idx[k], c)] += xj * self.values[k];
                }
            }
        }
        y
    }

    /// selfᵀ * x without forming the transpose.
    pub fn tmul_dense(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(self.nrows, x.nrows());
        let mut y = Mat::zeros(self.ncols, x.ncols());
        for c in 0..x.ncols() {
            for j in 0..self.ncols {
                let mut acc = 0.0;
                for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                    acc += self.values[k] * x[(self.row_idx[k], c)];
                }
                y[(j, c)] = acc;
            }
        }
        y
    }

    pub fn mul_sparse(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut trip = Vec::new();
        let mut acc = vec![0.0; self.nrows];
        let mut mark = vec![usize::MAX; self.nrows];
        let mut touched = Vec::new();
        for j in 0..other.ncols {
            touched.clear();
            for k in other.col_ptr[j]..other.col_ptr[j + 1] {
                let l = other.row_idx[k];
                let b = other.values[k];
                for kk in self.col_ptr[l]..self.col_ptr[l + 1] {
                    let i = self.row_idx[kk];
                    if mark[i] != j {
                        mark[i] = j;
                        acc[i] = 0.0;
                        touched.push(i);
                    }
                    acc[i] += self.values[kk] * b;
                }
            }
            for &i in &touched {
                trip.push((i, j, acc[i]));
            }
        }
        SparseMatrix::from_triplets(self.nrows, other.ncols, &trip)
    }

    pub fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        let sym = SymbolicSparseColMatRef::new_checked(self.nrows, self.ncols, &self.col_ptr, None, &self.row_idx);
        SparseColMatRef::new(sym, &self.values)
    }

    pub fn has_non_finite(&self) -> bool {
        self.values.iter().any(|v| !v.is_finite())
    }
}

pub fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut o = vec![0; dims.len() + 1];
    for (k, d) in dims.iter().enumerate() {
        o[k + 1] = o[k] + d;
    }
    o
}

/// Real sparse LU with residual-checked solves.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
    a: SparseMatrix,
}

impl SparseLu {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!("LU of non-square {}x{}", a.nrows(), a.ncols())));
        }
        let lu = a
            .as_faer()
            .sp_lu()
            .map_err(|e| Error::Singular(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { n: a.nrows(), lu, a: a.clone() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let mut x = b.to_owned();
        if self.n == 0 {
            return Ok(x);
        }
        self.lu.solve_in_place(x.as_mut());
        let r = sub(b, self.a.mul_dense(x.as_ref()).as_ref());
        let mut d = r.clone();
        self.lu.solve_in_place(d.as_mut());
        x = add(x.as_ref(), d.as_ref());
        if x.norm_max().is_finite() {
            Ok(x)
        } else {
            Err(Error::Singular("sparse solve produced non-finite values".into()))
        }
    }

    /// Solves selfᵀ x = b.
    pub fn solve_transpose(&self, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let mut x = b.to_owned();
        if self.n == 0 {
            return Ok(x);
        }
        self.lu.solve_transpose_in_place(x.as_mut());
        let r = sub(b, self.a.tmul_dense(x.as_ref()).as_ref());
        let mut d = r.clone();
        self.lu.solve_transpose_in_place(d.as_mut());
        x = add(x.as_ref(), d.as_ref());
        if x.norm_max().is_finite() {
            Ok(x)
        } else {
            Err(Error::Singular("sparse transposed solve produced non-finite values".into()))
        }
    }
}

/// The pencil s·E − A on a fixed union sparsity pattern, with the symbolic
/// LU analysis shared across shifts.
pub struct ShiftedPencil {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    e_vals: Vec<f64>,
    a_vals: Vec<f64>,
    symbolic: SymbolicLu<usize>,
}

impl ShiftedPencil {
    pub fn new(e: &SparseMatrix, a: &SparseMatrix) -> Result<Self> {
        let n = e.nrows();
        assert_eq!((n, n), (a.nrows(), a.ncols()));
        // union pattern plus the diagonal so that every shift sees the same structure
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        trip.extend(e.triplets().map(|(i, j, _)| (i, j, 1.0)));
        trip.extend(a.triplets().map(|(i, j, _)| (i, j, 1.0)));
        trip.extend((0..n).map(|i| (i, i, 1.0)));
        let pat = SparseMatrix::from_triplets(n, n, &trip);
        let mut e_vals = vec![0.0; pat.nnz()];
        let mut a_vals = vec![0.0; pat.nnz()];
        scatter(&pat, e, &mut e_vals);
        scatter(&pat, a, &mut a_vals);
        let symbolic = SymbolicLu::try_new(pat.as_faer().symbolic())
            .map_err(|e| Error::Singular(format!("symbolic LU failed: {e:?}")))?;
        Ok(Self { n, col_ptr: pat.col_ptr, row_idx: pat.row_idx, e_vals, a_vals, symbolic })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn values_at(&self, s: c64) -> Vec<c64> {
        self.e_vals
            .iter()
            .zip(&self.a_vals)
            .map(|(&e, &a)| s * e - c64::new(a, 0.0))
            .collect()
    }

    fn apply(&self, vals: &[c64], x: MatRef<'_, c64>) -> Mat<c64> {
        let mut y = Mat::<c64>::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            for j in 0..self.n {
                let xj = x[(j, c)];
                for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                    y[(self.row_idx[k], c)] += vals[k] * xj;
                }
            }
        }
        y
    }

    /// Factorizes s·E − A.
    pub fn factor(&self, s: c64) -> Result<ShiftedLu<'_>> {
        let vals = self.values_at(s);
        let sym = SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::new(sym, &vals);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat)
            .map_err(|_| Error::ShiftSingular { re: s.re, im: s.im })?;
        Ok(ShiftedLu { pencil: self, s, vals, lu })
    }
}

fn scatter(pat: &SparseMatrix, m: &SparseMatrix, out: &mut [f64]) {
    for j in 0..m.ncols() {
        for k in m.col_ptr[j]..m.col_ptr[j + 1] {
            let i = m.row_idx[k];
            let rows = &pat.row_idx[pat.col_ptr[j]..pat.col_ptr[j + 1]];
            let p = rows.binary_search(&i).expect("pattern contains entry");
            out[pat.col_ptr[j] + p] = m.values[k];
        }
    }
}

pub struct ShiftedLu<'a> {
    pencil: &'a ShiftedPencil,
    s: c64,
    vals: Vec<c64>,
    lu: Lu<usize, c64>,
}

impl ShiftedLu<'_> {
    pub fn shift(&self) -> c64 {
        self.s
    }

    /// Solves (sE − A) x = b with one refinement step. Fails with a
    /// shift-singularity error when the residual stays above `rtol·‖b‖`.
    pub fn solve_checked(&self, b: MatRef<'_, c64>, rtol: f64) -> Result<Mat<c64>> {
        let mut x = b.to_owned();
        if self.pencil.n == 0 {
            return Ok(x);
        }
        self.lu.solve_in_place(x.as_mut());
        let mut res = csub(b, self.pencil.apply(&self.vals, x.as_ref()).as_ref());
        let bn = b.norm_l2();
        if res.norm_l2() > rtol * bn {
            let mut d = res.clone();
            self.lu.solve_in_place(d.as_mut());
            x = cadd(x.as_ref(), d.as_ref());
            res = csub(b, self.pencil.apply(&self.vals, x.as_ref()).as_ref());
        }
        let rn = res.norm_l2();
        if !rn.is_finite() || !x.norm_l2().is_finite() || rn > rtol * bn.max(f64::MIN_POSITIVE) {
            return Err(Error::ShiftSingular { re: self.s.re, im: self.s.im });
        }
        Ok(x)
    }

    pub fn solve(&self, b: MatRef<'_, c64>) -> Result<Mat<c64>> {
        let mut x = b.to_owned();
        if self.pencil.n == 0 {
            return Ok(x);
        }
        self.lu.solve_in_place(x.as_mut());
        if !x.norm_l2().is_finite() {
            return Err(Error::ShiftSingular { re: self.s.re, im: self.s.im });
        }
        Ok(x)
    }
}

pub(crate) fn add(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}
pub(crate) fn sub(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}
pub fn cadd(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}
pub fn csub(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}
