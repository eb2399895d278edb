use std::fmt;
use std::str::FromStr;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dense;
use crate::linalg::SparseMatrix;
use crate::staircase::{BlockDims, StaircaseSystem};

/// The six system categories by index and presence of an improper part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Index0,
    Index1,
    ProperIndex2,
    ImproperIndex2,
    ProperIndex12,
    ImproperIndex12,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Index0,
        Category::Index1,
        Category::ProperIndex2,
        Category::ImproperIndex2,
        Category::ProperIndex12,
        Category::ImproperIndex12,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Category::Index0 => "index-0",
            Category::Index1 => "index-1",
            Category::ProperIndex2 => "proper-index-2",
            Category::ImproperIndex2 => "improper-index-2",
            Category::ProperIndex12 => "proper-index-1-2",
            Category::ImproperIndex12 => "improper-index-1-2",
        }
    }
    pub fn has_n3(&self) -> bool {
        matches!(self, Category::Index1 | Category::ProperIndex12 | Category::ImproperIndex12)
    }
    pub fn has_n1(&self) -> bool {
        !matches!(self, Category::Index0 | Category::Index1)
    }
    pub fn improper(&self) -> bool {
        matches!(self, Category::ImproperIndex2 | Category::ImproperIndex12)
    }
    pub fn index(&self) -> u8 {
        if self.has_n1() {
            2
        } else if self.has_n3() {
            1
        } else {
            0
        }
    }

    /// Block sizes for a total size of roughly `n`.
    pub fn default_dims(&self, n: usize, m: usize) -> BlockDims {
        let n1 = if self.has_n1() { (n / 10).max(1) } else { 0 };
        let rest = n.saturating_sub(2 * n1).max(2);
        let n3 = if self.has_n3() { (rest / 3).max(1) } else { 0 };
        BlockDims::new(n1, rest - n3, n3, n1, m)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown category '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub category: Category,
    pub dims: BlockDims,
    pub seed: u64,
    /// half bandwidth of the random blocks
    pub bandwidth: usize,
    /// max nonzeros per column and block in G
    pub input_nnz: usize,
}

impl GeneratorSpec {
    pub fn new(category: Category, dims: BlockDims, seed: u64) -> Self {
        Self { category, dims, seed, bandwidth: 2, input_nnz: 8 }
    }

    pub fn with_size(category: Category, n: usize, m: usize, seed: u64) -> Self {
        Self::new(category, category.default_dims(n, m), seed)
    }

    pub fn check(&self) -> Result<()> {
        let d = &self.dims;
        let c = self.category;
        let bad = |why: &str| Err(Error::InvalidInput(format!("dims {d:?} infeasible for {c}: {why}")));
        if d.n1 != d.n4 {
            return bad("n1 must equal n4");
        }
        if d.n2 == 0 {
            return bad("n2 must be positive");
        }
        if d.m == 0 {
            return bad("m must be positive");
        }
        if c.has_n1() != (d.n1 > 0) {
            return bad("n1/n4 presence does not match the category");
        }
        if c.has_n3() != (d.n3 > 0) {
            return bad("n3 presence does not match the category");
        }
        Ok(())
    }
}

/// Random staircase system that satisfies every structural invariant by construction.
pub fn generate_staircase(spec: &GeneratorSpec) -> Result<StaircaseSystem> {
    spec.check()?;
    let d = spec.dims;
    let (n, m) = (d.n(), d.m);
    let o = d.offsets();
    let sz = d.sizes();
    let bw = spec.bandwidth.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut unif = |lo: f64, hi: f64| -> f64 { rng.random_range(lo..hi) };

    let spd_band = |k: usize, unif: &mut dyn FnMut(f64, f64) -> f64| -> SparseMatrix {
        let mut t = Vec::new();
        let mut rowsum = vec![0.0; k];
        for i in 0..k {
            for j in (i + 1)..(i + 1 + bw).min(k) {
                let v = unif(-0.5, 0.5);
                t.push((i, j, v));
                t.push((j, i, v));
                rowsum[i] += v.abs();
                rowsum[j] += v.abs();
            }
        }
        for (i, rs) in rowsum.iter().enumerate() {
            t.push((i, i, 1.0 + rs + unif(0.0, 1.0)));
        }
        SparseMatrix::from_triplets(k, k, &t)
    };
    let e11 = spd_band(d.n1, &mut unif);
    let e22 = spd_band(d.n2, &mut unif);

    // J: scaled band inside every allowed block pair, plus J41 = I + small band
    let mut jt = Vec::new();
    for bi in 0..3 {
        for bk in bi..3 {
            if sz[bi] == 0 || sz[bk] == 0 {
                continue;
            }
            for i in 0..sz[bi] {
                let centre = (i * sz[bk]) / sz[bi];
                let lo = centre.saturating_sub(bw);
                let hi = (centre + bw + 1).min(sz[bk]);
                for k in lo..hi {
                    if bi == bk && k <= i {
                        continue;
                    }
                    let v = unif(-1.0, 1.0);
                    jt.push((o[bi] + i, o[bk] + k, v));
                    jt.push((o[bk] + k, o[bi] + i, -v));
                }
            }
        }
    }
    let off_scale = 0.3 / (2 * bw + 1) as f64;
    for i in 0..d.n4 {
        for k in i.saturating_sub(bw)..(i + bw + 1).min(d.n1) {
            let v = if i == k { 1.0 + unif(0.0, 0.5) } else { off_scale * unif(-1.0, 1.0) };
            jt.push((o[3] + i, o[0] + k, v));
            jt.push((o[0] + k, o[3] + i, -v));
        }
    }
    let j = SparseMatrix::from_triplets(n, n, &jt);

    // R = L Lᵀ on blocks 1..3 with a lower-banded L and positive diagonal
    let n123 = o[3];
    let mut lt = Vec::new();
    for i in 0..n123 {
        lt.push((i, i, unif(0.2, 1.0)));
        for k in i.saturating_sub(bw)..i {
            lt.push((i, k, 0.5 * unif(-1.0, 1.0)));
        }
    }
    let l = SparseMatrix::from_triplets(n, n, &lt);
    let mut rt: Vec<_> = l.mul_sparse(&l.transpose()).triplets().collect();
    for i in o[2]..o[3] {
        rt.push((i, i, 1e-2));
    }
    let r = SparseMatrix::from_triplets(n, n, &rt);

    // S SPD, N skew
    let mut a = Mat::<f64>::zeros(m, m);
    for jj in 0..m {
        for ii in 0..m {
            a[(ii, jj)] = unif(-1.0, 1.0);
        }
    }
    let s = Mat::from_fn(m, m, |i, k| {
        let mut v = 0.0;
        for q in 0..m {
            v += a[(i, q)] * a[(k, q)];
        }
        v / m as f64 + if i == k { 0.5 } else { 0.0 }
    });
    let mut nmat = Mat::<f64>::zeros(m, m);
    for i in 0..m {
        for k in (i + 1)..m {
            let v = unif(-1.0, 1.0);
            nmat[(i, k)] = v;
            nmat[(k, i)] = -v;
        }
    }
    let s_half = sqrt_spd(&s)?;

    // G sparse; G4 only for improper categories
    let mut gt = Vec::new();
    for c in 0..m {
        for b in 0..4 {
            if sz[b] == 0 || (b == 3 && !spec.category.improper()) {
                continue;
            }
            let cnt = spec.input_nnz.min(sz[b]).max(1);
            for q in 0..cnt {
                let row = (c * 7919 + q * (sz[b] / cnt).max(1) + (unif(0.0, 1.0) * 3.0) as usize) % sz[b];
                let v = if b == 3 { 0.5 + unif(0.0, 1.0) } else { unif(-1.0, 1.0) };
                gt.push((o[b] + row, c, v));
            }
        }
        // make sure the proper part sees every input
        gt.push((o[1] + (c * 13) % sz[1], c, 1.0));
    }
    let g = SparseMatrix::from_triplets(n, m, &gt);

    // P = L Z S^{1/2} with ‖Z‖₂ < 1 keeps W PSD
    let mut zt = Vec::new();
    for c in 0..m {
        let cnt = spec.input_nnz.min(n123);
        for _ in 0..cnt {
            let row = (unif(0.0, 1.0) * n123 as f64) as usize % n123.max(1);
            zt.push((row, c, unif(-1.0, 1.0)));
        }
    }
    let z = SparseMatrix::from_triplets(n, m, &zt);
    let zn = z.norm_fro();
    let z = if zn > 0.0 { z.scale(0.9 / zn) } else { z };
    let p = l.mul_sparse(&z).mul_sparse(&SparseMatrix::from_dense(s_half.as_ref()));

    StaircaseSystem::new(d, e11, e22, j, r, g, p, s, nmat)
}

fn sqrt_spd(s: &Mat<f64>) -> Result<Mat<f64>> {
    let m = s.nrows();
    let evd = dense::sym(s.as_ref())
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let u = evd.U();
    let lam = evd.S().column_vector();
    Ok(Mat::from_fn(m, m, |i, k| {
        (0..m).map(|q| u[(i, q)] * lam[q].max(0.0).sqrt() * u[(k, q)]).sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::staircase::{validate_staircase, Tolerances};

    #[test]
    fn every_category_is_valid() {
        for (k, c) in Category::ALL.into_iter().enumerate() {
            let spec = GeneratorSpec::with_size(c, 40, 2, 100 + k as u64);
            let sys = generate_staircase(&spec).unwrap();
            let rep = validate_staircase(&sys, &Tolerances::default()).unwrap();
            assert!(rep.is_valid(), "{c}\n{rep}");
            assert_eq!(sys.index(), c.index());
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = GeneratorSpec::with_size(Category::ImproperIndex12, 30, 2, 7);
        assert_eq!(generate_staircase(&spec).unwrap(), generate_staircase(&spec).unwrap());
    }

    #[test]
    fn category_names_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.name().parse::<Category>().unwrap(), c);
        }
        assert!("index-3".parse::<Category>().is_err());
    }

    #[test]
    fn infeasible_dims_rejected() {
        let spec = GeneratorSpec::new(Category::Index1, BlockDims::new(0, 5, 0, 0, 1), 1);
        assert!(generate_staircase(&spec).is_err());
    }
}
