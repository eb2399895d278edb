//! Transfer functions, sigma responses, interpolation checks and error norms.

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::h2::log_grid;
use crate::interpolation::InterpolationData;
use crate::linalg::dense::{self, norm2};
use crate::linalg::{lyapunov, ShiftedPencil, SparseMatrix};
use crate::rosenbrock::{extract_proper, ProperSubsystem};
use crate::staircase::StaircaseSystem;

/// Cached factorization data for repeated transfer-function evaluation.
pub struct TransferEvaluator {
    pencil: ShiftedPencil,
    b: Mat<c64>,
    c: SparseMatrix,
    d: Mat<c64>,
}

impl TransferEvaluator {
    pub fn new(sys: &StaircaseSystem) -> Result<Self> {
        Ok(Self {
            pencil: ShiftedPencil::new(&sys.e_full(), &sys.a_full())?,
            b: dense::to_c(sys.b_full().to_dense().as_ref()),
            c: sys.c_full(),
            d: dense::to_c(sys.d().as_ref()),
        })
    }

    pub fn m(&self) -> usize {
        self.d.nrows()
    }

    /// (G+P)ᵀ(sE − (J−R))⁻¹(G−P) + S + N
    pub fn eval(&self, s: c64) -> Result<Mat<c64>> {
        let lu = self.pencil.factor(s)?;
        let x = lu.solve_checked(self.b.as_ref(), 1e-8)?;
        Ok(self.c.mul_dense_c(x.as_ref()) + &self.d)
    }
}

pub fn transfer_eval(sys: &StaircaseSystem, s: c64) -> Result<Mat<c64>> {
    TransferEvaluator::new(sys)?.eval(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyResponse {
    pub frequencies: Vec<f64>,
    pub values: Vec<Mat<c64>>,
    pub sigma: Vec<f64>,
    /// grid points where the pencil was singular (dropped from the lists)
    pub skipped: Vec<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|w| !(*w > 0.0 && w.is_finite())) || grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidInput("frequency grid must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// Log grid for a user-supplied window.
pub fn log_grid_checked(fmin: f64, fmax: f64, points: usize) -> Result<Vec<f64>> {
    if !(fmin > 0.0 && fmax > fmin && fmax.is_finite()) || points < 2 {
        return Err(Error::InvalidInput(format!("need 0 < fmin < fmax and at least 2 points, got [{fmin}, {fmax}] with {points}")));
    }
    Ok(log_grid(fmin, fmax, points))
}

pub fn sigma_response(ev: &TransferEvaluator, grid: &[f64]) -> Result<FrequencyResponse> {
    check_grid(grid)?;
    let vals: Vec<Result<Mat<c64>>> = grid.par_iter().map(|&w| ev.eval(c64::new(0.0, w))).collect();
    let mut out = FrequencyResponse { frequencies: Vec::new(), values: Vec::new(), sigma: Vec::new(), skipped: Vec::new() };
    for (w, v) in grid.iter().zip(vals) {
        match v {
            Ok(h) => {
                out.sigma.push(dense::norm2_c(h.as_ref()));
                out.frequencies.push(*w);
                out.values.push(h);
            }
            Err(e) if e.kind() == "shift_singular" => out.skipped.push(*w),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub shifts: Vec<[f64; 2]>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

/// ‖H(σᵢ)bᵢ − Hr(σᵢ)bᵢ‖/‖H(σᵢ)bᵢ‖ for every interpolation pair.
pub fn verify_interpolation(fom: &TransferEvaluator, rom: &TransferEvaluator, data: &InterpolationData, tol: f64) -> Result<InterpolationReport> {
    let residuals = data
        .shifts
        .iter()
        .zip(&data.directions)
        .map(|(s, b)| {
            let bv = Mat::from_fn(b.len(), 1, |i, _| b[i]);
            let hf = fom.eval(*s)? * &bv;
            let hr = rom.eval(*s)? * &bv;
            let den = hf.norm_l2();
            let num = (&hf - &hr).norm_l2();
            Ok(if den > 0.0 { num / den } else { num })
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_residual = residuals.iter().copied().fold(0.0f64, f64::max);
    Ok(InterpolationReport { shifts: data.as_pairs(), residuals, max_residual, tol, passed: max_residual <= tol })
}

/// Feedthrough and improper mismatch between two models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMismatch {
    pub delta_dp: f64,
    pub delta_dinf: f64,
    pub dp_mismatch: bool,
    pub dinf_mismatch: bool,
}

pub const MISMATCH_TOL: f64 = 1e-12;

pub fn polynomial_mismatch(fom: &ProperSubsystem, rom: &ProperSubsystem) -> PolynomialMismatch {
    let ddp = norm2((&fom.dp - &rom.dp).as_ref());
    let ddinf = norm2((&fom.dinf - &rom.dinf).as_ref());
    let scale = [norm2(fom.dp.as_ref()), norm2(rom.dp.as_ref()), norm2(fom.dinf.as_ref()), norm2(rom.dinf.as_ref())]
        .into_iter()
        .fold(0.0f64, f64::max);
    PolynomialMismatch {
        delta_dp: ddp,
        delta_dinf: ddinf,
        dp_mismatch: ddp > MISMATCH_TOL * scale,
        dinf_mismatch: ddinf > MISMATCH_TOL * scale,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum H2Value {
    Finite { value: f64, method: String },
    Unbounded { reason: String },
}

impl H2Value {
    pub fn value(&self) -> Option<f64> {
        match self {
            H2Value::Finite { value, .. } => Some(*value),
            H2Value::Unbounded { .. } => None,
        }
    }
    pub fn is_unbounded(&self) -> bool {
        matches!(self, H2Value::Unbounded { .. })
    }
}

pub const DENSE_H2_LIMIT: usize = 2000;

/// Standard state-space form of the strictly proper part via Ep = LLᵀ.
fn standard_form(p: &ProperSubsystem) -> Result<(Mat<f64>, Mat<f64>, Mat<f64>)> {
    let l = dense::cholesky(p.ep.to_dense().as_ref())?;
    let ap = p.ap.to_dense()?;
    let x = dense::lower_solve(l.as_ref(), ap.as_ref());
    let a = dense::lower_solve(l.as_ref(), x.transpose()).transpose().to_owned();
    let b = dense::lower_solve(l.as_ref(), p.bp.as_ref());
    let c = dense::lower_solve(l.as_ref(), p.cp.transpose()).transpose().to_owned();
    Ok((a, b, c))
}

/// H2 norm of the strictly proper error via the controllability Gramian.
pub fn h2_error_gramian(fom: &ProperSubsystem, rom: &ProperSubsystem) -> Result<f64> {
    let (a1, b1, c1) = standard_form(fom)?;
    let (a2, b2, c2) = standard_form(rom)?;
    let a = dense::blkdiag(&[a1.as_ref(), a2.as_ref()]);
    let b = dense::vstack(&[b1.as_ref(), b2.as_ref()]);
    let c = dense::hstack(&[c1.as_ref(), dense::scaled(c2.as_ref(), -1.0).as_ref()]);
    let q = &b * b.transpose();
    let p = lyapunov(a.as_ref(), q.as_ref()).map_err(|e| Error::Consistency(format!("error realization not stable: {e}")))?;
    let cpc = &c * &p * c.transpose();
    let tr: f64 = (0..cpc.nrows()).map(|i| cpc[(i, i)]).sum();
    Ok(tr.max(0.0).sqrt())
}

/// (1/π)∫₀^∞ ‖H(iω) − Hr(iω)‖²_F dω by the trapezoidal rule in log ω.
pub fn h2_error_quadrature(fom: &TransferEvaluator, rom: &TransferEvaluator, wmin: f64, wmax: f64, points: usize) -> Result<f64> {
    let grid = log_grid(wmin, wmax, points.max(2));
    let f: Vec<f64> = grid
        .par_iter()
        .map(|&w| {
            let s = c64::new(0.0, w);
            let d = fom.eval(s)? - rom.eval(s)?;
            Ok(d.norm_l2().powi(2) * w)
        })
        .collect::<Result<Vec<f64>>>()?;
    let h = (wmax.ln() - wmin.ln()) / (grid.len() - 1) as f64;
    let integral: f64 = f.windows(2).map(|p| 0.5 * h * (p[0] + p[1])).sum();
    Ok((integral / std::f64::consts::PI).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
    pub refine: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { omega_min: 1e-4, omega_max: 1e6, points: 400, refine: 3 }
    }
}

pub fn h2_error(fom: &StaircaseSystem, rom: &StaircaseSystem) -> Result<H2Value> {
    let pf = extract_proper(fom)?;
    let pr = extract_proper(rom)?;
    h2_error_proper(&pf, &pr, || {
        let g = GridSpec::default();
        h2_error_quadrature(&TransferEvaluator::new(fom)?, &TransferEvaluator::new(rom)?, g.omega_min, g.omega_max, 20_000)
    })
}

/// Unbounded check, then Gramian (dense sizes) or the supplied quadrature fallback.
pub fn h2_error_proper(pf: &ProperSubsystem, pr: &ProperSubsystem, fallback: impl FnOnce() -> Result<f64>) -> Result<H2Value> {
    if pf.m() != pr.m() {
        return Err(Error::Dimension("models have different port counts".into()));
    }
    let mm = polynomial_mismatch(pf, pr);
    if mm.dinf_mismatch {
        return Ok(H2Value::Unbounded { reason: format!("improper mismatch: |dDinf| = {:.3e}", mm.delta_dinf) });
    }
    if mm.dp_mismatch {
        return Ok(H2Value::Unbounded { reason: format!("feedthrough mismatch: |dDp| = {:.3e}", mm.delta_dp) });
    }
    if pf.n2() + pr.n2() <= DENSE_H2_LIMIT {
        Ok(H2Value::Finite { value: h2_error_gramian(pf, pr)?, method: "gramian".into() })
    } else {
        Ok(H2Value::Finite { value: fallback()?, method: "quadrature".into() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HinfEstimate {
    /// lower-bound estimate; infinite on improper mismatch
    pub value: f64,
    pub omega: f64,
    pub evaluations: usize,
}

/// σmax(E(iω)) over a log grid with local refinement around the argmax.
pub fn sampled_hinf(f: &(dyn Fn(f64) -> Result<f64> + Sync), grid: &GridSpec) -> Result<HinfEstimate> {
    if !(grid.omega_min > 0.0 && grid.omega_max > grid.omega_min) || grid.points < 2 {
        return Err(Error::InvalidInput("invalid frequency window".into()));
    }
    let mut pts = log_grid(grid.omega_min, grid.omega_max, grid.points);
    let mut vals: Vec<f64> = pts.par_iter().map(|&w| f(w)).collect::<Result<Vec<f64>>>()?;
    let mut evals = pts.len();
    for _ in 0..grid.refine {
        let k = argmax(&vals);
        let lo = if k > 0 { pts[k - 1] } else { pts[k] / 2.0 };
        let hi = if k + 1 < pts.len() { pts[k + 1] } else { pts[k] * 2.0 };
        let local = log_grid(lo, hi, 21);
        let lv: Vec<f64> = local.par_iter().map(|&w| f(w)).collect::<Result<Vec<f64>>>()?;
        evals += local.len();
        let mut merged: Vec<(f64, f64)> = pts.iter().copied().zip(vals.iter().copied()).chain(local.into_iter().zip(lv)).collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        merged.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-15 * b.0);
        pts = merged.iter().map(|p| p.0).collect();
        vals = merged.iter().map(|p| p.1).collect();
    }
    let k = argmax(&vals);
    Ok(HinfEstimate { value: vals[k], omega: pts[k], evaluations: evals })
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|p| p.0).unwrap_or(0)
}

pub fn hinf_error_eval(fom: &TransferEvaluator, rom: &TransferEvaluator, grid: &GridSpec) -> Result<HinfEstimate> {
    let f = |w: f64| -> Result<f64> {
        let s = c64::new(0.0, w);
        Ok(dense::norm2_c((fom.eval(s)? - rom.eval(s)?).as_ref()))
    };
    sampled_hinf(&f, grid)
}

pub fn hinf_error(fom: &StaircaseSystem, rom: &StaircaseSystem, grid: &GridSpec) -> Result<HinfEstimate> {
    let mm = polynomial_mismatch(&extract_proper(fom)?, &extract_proper(rom)?);
    if mm.dinf_mismatch {
        return Ok(HinfEstimate { value: f64::INFINITY, omega: f64::INFINITY, evaluations: 0 });
    }
    hinf_error_eval(&TransferEvaluator::new(fom)?, &TransferEvaluator::new(rom)?, grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormSelection {
    H2,
    Hinf,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h2: Option<H2Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hinf: Option<HinfEstimate>,
    /// true when the H∞ value is infinite because of an improper mismatch
    pub hinf_unbounded: bool,
    pub grid: GridSpec,
    pub mismatch: PolynomialMismatch,
}

pub fn error_report(fom: &StaircaseSystem, rom: &StaircaseSystem, norms: NormSelection, grid: &GridSpec) -> Result<ErrorReport> {
    let pf = extract_proper(fom)?;
    let pr = extract_proper(rom)?;
    let mismatch = polynomial_mismatch(&pf, &pr);
    let fe = TransferEvaluator::new(fom)?;
    let re = TransferEvaluator::new(rom)?;
    let h2 = match norms {
        NormSelection::Hinf => None,
        _ => Some(h2_error_proper(&pf, &pr, || h2_error_quadrature(&fe, &re, grid.omega_min, grid.omega_max, 20_000))?),
    };
    let hinf = match norms {
        NormSelection::H2 => None,
        _ if mismatch.dinf_mismatch => Some(HinfEstimate { value: f64::INFINITY, omega: f64::INFINITY, evaluations: 0 }),
        _ => Some(hinf_error_eval(&fe, &re, grid)?),
    };
    Ok(ErrorReport { version: 1, h2, hinf, hinf_unbounded: mismatch.dinf_mismatch, grid: *grid, mismatch })
}

/// Relative H∞ sampling of one model (largest singular value over a grid).
pub fn hinf_norm(sys: &StaircaseSystem, grid: &GridSpec) -> Result<HinfEstimate> {
    let ev = TransferEvaluator::new(sys)?;
    let f = |w: f64| -> Result<f64> { Ok(dense::norm2_c(ev.eval(c64::new(0.0, w))?.as_ref())) };
    sampled_hinf(&f, grid)
}

/// Relative error matrix norm helper for tests and reports.
pub fn rel_err(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    let d = a.to_owned() - b.to_owned();
    d.norm_l2() / b.norm_l2().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolation::{interpolate, InterpolationOptions};
    use crate::models::{generate_staircase, Category, GeneratorSpec};
    use crate::staircase::{mat_from_rows, BlockDims};

    #[test]
    fn constant_model_is_flat() {
        let d = BlockDims::new(0, 2, 0, 0, 2);
        let s = mat_from_rows(&[&[2.0, 0.0], &[0.0, 1.0]]);
        let n = mat_from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let sys = StaircaseSystem::new(
            d,
            SparseMatrix::zeros(0, 0),
            SparseMatrix::identity(2),
            SparseMatrix::zeros(2, 2),
            SparseMatrix::identity(2),
            SparseMatrix::zeros(2, 2),
            SparseMatrix::zeros(2, 2),
            s.clone(),
            n.clone(),
        )
        .unwrap();
        let ev = TransferEvaluator::new(&sys).unwrap();
        let fr = sigma_response(&ev, &log_grid(1e-2, 1e2, 7)).unwrap();
        let expect = norm2((&s + &n).as_ref());
        assert!(fr.sigma.iter().all(|v| (v - expect).abs() < 1e-14));
    }

    #[test]
    fn gramian_matches_quadrature() {
        let sys = generate_staircase(&GeneratorSpec::with_size(Category::ImproperIndex12, 24, 2, 17)).unwrap();
        let data = InterpolationData::imaginary_axis(4, 2, 0.1, 10.0).unwrap();
        let rom = interpolate(&sys, &data, &InterpolationOptions::default()).unwrap();
        let g = match h2_error(&sys, &rom.system).unwrap() {
            H2Value::Finite { value, method } => {
                assert_eq!(method, "gramian");
                value
            }
            u => panic!("{u:?}"),
        };
        let q = h2_error_quadrature(&TransferEvaluator::new(&sys).unwrap(), &TransferEvaluator::new(&rom.system).unwrap(), 1e-4, 1e6, 100_000).unwrap();
        assert!((g - q).abs() <= 0.02 * g, "gramian {g} quadrature {q}");
    }

    #[test]
    fn self_error_vanishes() {
        let sys = generate_staircase(&GeneratorSpec::with_size(Category::Index1, 20, 1, 2)).unwrap();
        let h2 = h2_error(&sys, &sys).unwrap().value().unwrap();
        let norm = match h2_error(&sys, &{
            // zero model with matching feedthrough
            let p = extract_proper(&sys).unwrap();
            StaircaseSystem::new(
                BlockDims::new(0, 1, 0, 0, 1),
                SparseMatrix::zeros(0, 0),
                SparseMatrix::identity(1),
                SparseMatrix::zeros(1, 1),
                SparseMatrix::identity(1),
                SparseMatrix::zeros(1, 1),
                SparseMatrix::zeros(1, 1),
                dense::sym(p.dp.as_ref()),
                dense::skew(p.dp.as_ref()),
            )
            .unwrap()
        })
        .unwrap()
        {
            H2Value::Finite { value, .. } => value,
            u => panic!("{u:?}"),
        };
        assert!(h2 <= 1e-6 * norm, "{h2} vs {norm}");
        let hi = hinf_error(&sys, &sys, &GridSpec::default()).unwrap();
        assert_eq!(hi.value, 0.0);
    }

    #[test]
    fn feedthrough_mismatch_is_unbounded() {
        let sys = generate_staircase(&GeneratorSpec::with_size(Category::Index0, 10, 1, 4)).unwrap();
        let mut other = sys.clone();
        other.s[(0, 0)] += 0.25;
        assert!(h2_error(&sys, &other).unwrap().is_unbounded());
        let hi = hinf_error(&sys, &other, &GridSpec::default()).unwrap();
        assert!(hi.value >= 0.25 * (1.0 - 1e-6));
    }
}
