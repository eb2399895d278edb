//! Model bundles: Matrix Market block files plus `manifest.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::Provenance;
use crate::linalg::SparseMatrix;
use crate::staircase::{BlockDims, StaircaseSystem};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const PROVENANCE: &str = "provenance.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub version: u32,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
    pub m: usize,
    /// block name (E11, E22, J.ik, R.ik, G.i, P.i, S, N) → file
    pub files: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl ModelManifest {
    pub fn dims(&self) -> BlockDims {
        BlockDims::new(self.n1, self.n2, self.n3, self.n4, self.m)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), msg: msg.into() }
}

fn fmt_val(v: f64) -> String {
    format!("{v:.16e}")
}

/// Coordinate format, entries in column-major order.
pub fn write_coordinate(path: &Path, a: &SparseMatrix) -> Result<()> {
    let mut s = String::with_capacity(32 * a.nnz() + 64);
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
    for (i, j, v) in a.triplets() {
        let _ = writeln!(s, "{} {} {}", i + 1, j + 1, fmt_val(v));
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

/// Array format (column-major).
pub fn write_array(path: &Path, a: &Mat<f64>) -> Result<()> {
    let mut s = String::new();
    s.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} {}", a.nrows(), a.ncols());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let _ = writeln!(s, "{}", fmt_val(a[(i, j)]));
        }
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

/// Reads coordinate or array files (general or symmetric) as a sparse matrix.
pub fn read_matrix_market(path: &Path) -> Result<SparseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, "empty file"))?;
    let h: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(parse_err(path, "missing %%MatrixMarket matrix header"));
    }
    let coordinate = match h[2].as_str() {
        "coordinate" => true,
        "array" => false,
        f => return Err(parse_err(path, format!("unsupported format '{f}'"))),
    };
    if h[3] != "real" && h[3] != "integer" {
        return Err(parse_err(path, format!("unsupported field '{}'", h[3])));
    }
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        s => return Err(parse_err(path, format!("unsupported symmetry '{s}'"))),
    };
    let mut body = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size = body.next().ok_or_else(|| parse_err(path, "missing size line"))?;
    let nums: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(path, format!("bad size line '{size}'"))))
        .collect::<Result<_>>()?;
    let num = |t: &str| t.parse::<f64>().map_err(|_| parse_err(path, format!("bad value '{t}'")));
    let mut trip = Vec::new();
    let (nr, nc) = match (coordinate, nums.as_slice()) {
        (true, [nr, nc, nnz]) => {
            for k in 0..*nnz {
                let line = body.next().ok_or_else(|| parse_err(path, format!("expected {nnz} entries, found {k}")))?;
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(parse_err(path, format!("bad entry line '{line}'")));
                }
                let i: usize = t[0].parse().map_err(|_| parse_err(path, format!("bad row '{}'", t[0])))?;
                let j: usize = t[1].parse().map_err(|_| parse_err(path, format!("bad column '{}'", t[1])))?;
                if i == 0 || j == 0 || i > *nr || j > *nc {
                    return Err(parse_err(path, format!("entry ({i},{j}) outside {nr}x{nc}")));
                }
                let v = num(t[2])?;
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
            (*nr, *nc)
        }
        (false, [nr, nc]) => {
            for j in 0..*nc {
                let i0 = if symmetric { j } else { 0 };
                for i in i0..*nr {
                    let line = body.next().ok_or_else(|| parse_err(path, "array data ends early"))?;
                    let v = num(line)?;
                    trip.push((i, j, v));
                    if symmetric && i != j {
                        trip.push((j, i, v));
                    }
                }
            }
            (*nr, *nc)
        }
        _ => return Err(parse_err(path, format!("bad size line '{size}'"))),
    };
    if body.next().is_some() {
        return Err(parse_err(path, "trailing data"));
    }
    Ok(SparseMatrix::from_triplets(nr, nc, &trip))
}

fn block_name(kind: &str, i: usize, k: Option<usize>) -> String {
    match k {
        Some(k) => format!("{kind}.{i}{k}"),
        None => format!("{kind}.{i}"),
    }
}

/// Writes the bundle; zero blocks get no file.
pub fn save_model(sys: &StaircaseSystem, dir: &Path) -> Result<()> {
    save_model_with(sys, dir, None)
}

pub fn save_model_with(sys: &StaircaseSystem, dir: &Path, provenance: Option<&Provenance>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let d = sys.dims();
    let mut files = BTreeMap::new();
    let mut put_sparse = |name: String, a: &SparseMatrix| -> Result<()> {
        if a.nnz() == 0 {
            return Ok(());
        }
        let file = format!("{}.mtx", name.replace('.', "_"));
        write_coordinate(&dir.join(&file), a)?;
        files.insert(name, file);
        Ok(())
    };
    put_sparse("E11".into(), &sys.e11)?;
    put_sparse("E22".into(), &sys.e22)?;
    for i in 1..=4 {
        for k in 1..=4 {
            put_sparse(block_name("J", i, Some(k)), &sys.j_block(i, k))?;
            put_sparse(block_name("R", i, Some(k)), &sys.r_block(i, k))?;
        }
        put_sparse(block_name("G", i, None), &sys.g_block(i))?;
        put_sparse(block_name("P", i, None), &sys.p_block(i))?;
    }
    for (name, a) in [("S", &sys.s), ("N", &sys.n)] {
        let file = format!("{name}.mtx");
        write_array(&dir.join(&file), a)?;
        files.insert(name.to_string(), file);
    }
    let prov_file = match provenance {
        Some(p) => {
            let path = dir.join(PROVENANCE);
            fs::write(&path, serde_json::to_string_pretty(p)?).map_err(|e| io_err(&path, e))?;
            Some(PROVENANCE.to_string())
        }
        None => None,
    };
    let manifest = ModelManifest {
        version: FORMAT_VERSION,
        n1: d.n1,
        n2: d.n2,
        n3: d.n3,
        n4: d.n4,
        m: d.m,
        files,
        provenance: prov_file,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| io_err(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<ModelManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let m: ModelManifest = serde_json::from_str(&text).map_err(|e| parse_err(&path, e.to_string()))?;
    if m.version != FORMAT_VERSION {
        return Err(parse_err(&path, format!("unsupported format version {}", m.version)));
    }
    Ok(m)
}

fn known_block(name: &str) -> Option<(char, usize, Option<usize>)> {
    match name {
        "E11" | "E22" | "S" | "N" => Some(('-', 0, None)),
        _ => {
            let (kind, idx) = name.split_once('.')?;
            let kind = match kind {
                "J" | "R" | "G" | "P" => kind.chars().next()?,
                _ => return None,
            };
            let digits: Vec<usize> = idx.chars().map(|c| c.to_digit(10).map(|d| d as usize)).collect::<Option<_>>()?;
            match (kind, digits.as_slice()) {
                ('J' | 'R', [i, k]) if (1..=4).contains(i) && (1..=4).contains(k) => Some((kind, *i, Some(*k))),
                ('G' | 'P', [i]) if (1..=4).contains(i) => Some((kind, *i, None)),
                _ => None,
            }
        }
    }
}

pub fn load_model(dir: &Path) -> Result<StaircaseSystem> {
    let man = read_manifest(dir)?;
    let d = man.dims();
    if d.n1 != d.n4 {
        return Err(parse_err(&dir.join(MANIFEST), "n1 and n4 differ"));
    }
    let sz = d.sizes();
    let off = d.offsets();
    let n = d.n();
    let m = d.m;
    let mut e11 = SparseMatrix::zeros(d.n1, d.n1);
    let mut e22 = SparseMatrix::zeros(d.n2, d.n2);
    let mut s = Mat::zeros(m, m);
    let mut nmat = Mat::zeros(m, m);
    let (mut jt, mut rt, mut gt, mut pt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (name, file) in &man.files {
        let Some((kind, i, k)) = known_block(name) else {
            return Err(parse_err(&dir.join(MANIFEST), format!("unknown block '{name}'")));
        };
        let path: PathBuf = dir.join(file);
        let a = read_matrix_market(&path)?;
        let want = match (name.as_str(), kind) {
            ("E11", _) => (d.n1, d.n1),
            ("E22", _) => (d.n2, d.n2),
            ("S" | "N", _) => (m, m),
            (_, 'J' | 'R') => (sz[i - 1], sz[k.unwrap_or(1) - 1]),
            _ => (sz[i - 1], m),
        };
        if (a.nrows(), a.ncols()) != want {
            return Err(parse_err(
                &path,
                format!("block {name} is {}x{}, manifest dims require {}x{}", a.nrows(), a.ncols(), want.0, want.1),
            ));
        }
        match (name.as_str(), kind) {
            ("E11", _) => e11 = a,
            ("E22", _) => e22 = a,
            ("S", _) => s = a.to_dense(),
            ("N", _) => nmat = a.to_dense(),
            (_, 'J' | 'R') => {
                let (r0, c0) = (off[i - 1], off[k.unwrap_or(1) - 1]);
                let dst = if kind == 'J' { &mut jt } else { &mut rt };
                dst.extend(a.triplets().map(|(p, q, v)| (r0 + p, c0 + q, v)));
            }
            (_, kind) => {
                let r0 = off[i - 1];
                let dst = if kind == 'G' { &mut gt } else { &mut pt };
                dst.extend(a.triplets().map(|(p, q, v)| (r0 + p, q, v)));
            }
        }
    }
    StaircaseSystem::new(
        d,
        e11,
        e22,
        SparseMatrix::from_triplets(n, n, &jt),
        SparseMatrix::from_triplets(n, n, &rt),
        SparseMatrix::from_triplets(n, m, &gt),
        SparseMatrix::from_triplets(n, m, &pt),
        s,
        nmat,
    )
}

pub fn load_provenance(dir: &Path) -> Result<Option<Provenance>> {
    let man = read_manifest(dir)?;
    match man.provenance {
        Some(f) => {
            let path = dir.join(f);
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            Ok(Some(serde_json::from_str(&text).map_err(|e| parse_err(&path, e.to_string()))?))
        }
        None => Ok(None),
    }
}
