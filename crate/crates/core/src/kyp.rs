//! KYP inequality checks, the minimal solution X₋ of the positive-real
//! Riccati equation, and the modified left reduction matrix.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::{reduction_matrices_with, InterpolationOptions, Reducer};
use crate::linalg::dense::{self, max_abs, min_eig_sym, sym};
use crate::linalg::{lyapunov, riccati_stabilizing};
use crate::rosenbrock::{build_transformations, ProperSubsystem};
use crate::staircase::{assemble_operator_blocks, StaircaseSystem};

pub const KYP_DENSE_LIMIT: usize = 2000;
/// Relative slack below zero still read as a rounding-level eigenvalue of X₋.
pub const KYP_PSD_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KypKind {
    Identity,
    Minimal,
    User,
}

#[derive(Clone, Debug)]
pub struct KypSolution {
    pub x: Mat<f64>,
    pub residual_min_eig: f64,
    /// relative
    pub riccati_residual: f64,
    pub kind: KypKind,
    /// min eig of sym(XᵀEp) relative to its norm
    pub margin: f64,
    /// min eig of I − X̂ where XᵀEp = L X̂ Lᵀ and Ep = LLᵀ
    pub ordering: f64,
    pub warnings: Vec<String>,
}

fn dense_limit(p: &ProperSubsystem) -> Result<()> {
    if p.n2() > KYP_DENSE_LIMIT {
        return Err(Error::Unsupported(format!("KYP computations are dense; n2 = {} exceeds {KYP_DENSE_LIMIT}", p.n2())));
    }
    Ok(())
}

/// Hautus test rank[λEp − Ap; Cp] = n2 at every generalized eigenvalue λ.
pub fn check_behavioural_observability(p: &ProperSubsystem) -> Result<bool> {
    let n2 = p.n2();
    if n2 == 0 {
        return Ok(true);
    }
    dense_limit(p)?;
    let ep = p.ep.to_dense();
    let ap = p.ap.to_dense()?;
    let m = dense::solve(ep.as_ref(), ap.as_ref())?;
    let (vals, vecs) = dense::eigen(m.as_ref())?;
    let cn = dense::norm2(p.cp.as_ref());
    if cn == 0.0 {
        return Ok(false);
    }
    let en = dense::norm2(ep.as_ref());
    let an = dense::norm2(ap.as_ref());
    let scale = vals.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let cc = dense::to_c(p.cp.as_ref());
    let mut done = vec![false; n2];
    for i in 0..n2 {
        if done[i] {
            continue;
        }
        let lam = vals[i];
        let cluster: Vec<usize> = (0..n2).filter(|&k| !done[k] && (vals[k] - lam).norm() <= 1e-8 * scale).collect();
        for &k in &cluster {
            done[k] = true;
        }
        let smax = (lam.norm() * en + an).max(cn);
        let smin = if cluster.len() == 1 {
            let v = Mat::from_fn(n2, 1, |r, _| vecs[(r, i)]);
            (&cc * &v).norm_l2() / v.norm_l2()
        } else {
            let stacked = Mat::from_fn(n2 + p.m(), n2, |r, c| {
                if r < n2 {
                    lam * ep[(r, c)] - c64::new(ap[(r, c)], 0.0)
                } else {
                    c64::new(p.cp[(r - n2, c)], 0.0)
                }
            });
            dense::singular_values_c(stacked.as_ref())?.last().copied().unwrap_or(0.0)
        };
        if smin <= 1e-10 * smax {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug)]
pub struct KypResidual {
    pub matrix: Mat<f64>,
    pub min_eig: f64,
    /// min eig divided by the largest absolute eigenvalue
    pub min_eig_rel: f64,
    pub symmetry_defect: f64,
}

/// [[−ApᵀX − XᵀAp, Cpᵀ − XᵀBp], [Cp − BpᵀX, Dp + Dpᵀ]].
pub fn kyp_residual(p: &ProperSubsystem, x: MatRef<'_, f64>) -> Result<KypResidual> {
    dense_limit(p)?;
    let n2 = p.n2();
    let m = p.m();
    if x.nrows() != n2 || x.ncols() != n2 {
        return Err(Error::Dimension("X must be n2 x n2".into()));
    }
    let ap = p.ap.to_dense()?;
    let xa = x.transpose() * &ap;
    let tl = dense::scaled((xa.transpose() + &xa).as_ref(), -1.0);
    let tr = p.cp.transpose() - x.transpose() * &p.bp;
    let br = &p.dp + p.dp.transpose();
    let mut k = Mat::<f64>::zeros(n2 + m, n2 + m);
    k.as_mut().submatrix_mut(0, 0, n2, n2).copy_from(&tl);
    k.as_mut().submatrix_mut(0, n2, n2, m).copy_from(&tr);
    k.as_mut().submatrix_mut(n2, 0, m, n2).copy_from(tr.transpose());
    k.as_mut().submatrix_mut(n2, n2, m, m).copy_from(&br);
    let k = sym(k.as_ref());
    let ev = dense::sym_eigenvalues(k.as_ref())?;
    let min_eig = ev.first().copied().unwrap_or(0.0);
    let big = ev.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let xe = x.transpose() * p.ep.to_dense();
    let symmetry_defect = max_abs((&xe - xe.transpose()).as_ref()) / max_abs(xe.as_ref()).max(f64::MIN_POSITIVE);
    Ok(KypResidual { matrix: k, min_eig, min_eig_rel: min_eig / big, symmetry_defect })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KypOptions {
    pub newton_steps: usize,
    /// second Newton–Kleinman run from a perturbed start
    pub cross_check: bool,
}

impl Default for KypOptions {
    fn default() -> Self {
        Self { newton_steps: 6, cross_check: true }
    }
}

/// Ep = LLᵀ and the transformed standard-form data (Â, B̂, Ĉ).
struct HatFrame {
    l: Mat<f64>,
    a: Mat<f64>,
    b: Mat<f64>,
    c: Mat<f64>,
}

fn hat_frame(p: &ProperSubsystem) -> Result<HatFrame> {
    let l = dense::cholesky(p.ep.to_dense().as_ref())?;
    let ap = p.ap.to_dense()?;
    let y = dense::lower_solve(l.as_ref(), ap.as_ref());
    let a = dense::lower_solve(l.as_ref(), y.transpose()).transpose().to_owned();
    let b = dense::lower_solve(l.as_ref(), p.bp.as_ref());
    let c = dense::lower_solve(l.as_ref(), p.cp.transpose()).transpose().to_owned();
    Ok(HatFrame { l, a, b, c })
}

/// R(X) = XF + FᵀX + XGX + Q
fn are_residual(x: MatRef<'_, f64>, f: MatRef<'_, f64>, g: MatRef<'_, f64>, q: MatRef<'_, f64>) -> (f64, f64) {
    let xf = x * f;
    let lin = &xf + xf.transpose();
    let quad = x * g * x + q;
    let r = &lin + &quad;
    (r.norm_l2(), lin.norm_l2() + quad.norm_l2())
}

/// Newton–Kleinman; `guarded` stops as soon as a step fails to reduce the residual.
fn newton_kleinman(x0: Mat<f64>, f: MatRef<'_, f64>, g: MatRef<'_, f64>, q: MatRef<'_, f64>, steps: usize, guarded: bool) -> Result<Mat<f64>> {
    let mut x = x0;
    let (mut res, _) = are_residual(x.as_ref(), f, g, q);
    for _ in 0..steps {
        let ak = (f + g * &x).transpose().to_owned();
        let rhs = q - &x * g * &x;
        let xn = match lyapunov(ak.as_ref(), rhs.as_ref()) {
            Ok(v) => sym(v.as_ref()),
            Err(_) => break,
        };
        let (rn, scale) = are_residual(xn.as_ref(), f, g, q);
        if !rn.is_finite() || (guarded && !(rn < res)) {
            break;
        }
        x = xn;
        res = rn;
        if res <= 1e-14 * scale {
            break;
        }
    }
    Ok(x)
}

/// Minimal solution X₋ of the KYP inequality via the stabilizing
/// positive-real Riccati solution, polished by Newton–Kleinman.
pub fn minimal_kyp_solution(p: &ProperSubsystem, opts: &KypOptions) -> Result<KypSolution> {
    dense_limit(p)?;
    let n2 = p.n2();
    let mut warnings = Vec::new();
    let sigma = sym((&p.dp + p.dp.transpose()).as_ref());
    let sev = dense::sym_eigenvalues(sigma.as_ref())?;
    let smax = sev.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    if sev.first().is_none_or(|&lo| lo <= 1e-12 * smax.max(f64::MIN_POSITIVE)) {
        return Err(Error::Unsupported("Dp + Dp^T is singular; the positive-real Riccati equation is not defined".into()));
    }
    if n2 == 0 {
        return Ok(KypSolution {
            x: Mat::zeros(0, 0),
            residual_min_eig: sev[0],
            riccati_residual: 0.0,
            kind: KypKind::Minimal,
            margin: 1.0,
            ordering: 0.0,
            warnings,
        });
    }
    if !check_behavioural_observability(p)? {
        warnings.push("proper subsystem is not behaviourally observable; X- may be singular".into());
    }
    let h = hat_frame(p)?;
    let sinv = dense::inverse(sigma.as_ref())?;
    let f = &h.a - &h.b * &sinv * &h.c;
    let g = sym((&h.b * &sinv * h.b.transpose()).as_ref());
    let q = sym((h.c.transpose() * &sinv * &h.c).as_ref());
    let xs = sym(riccati_stabilizing(f.as_ref(), g.as_ref(), q.as_ref())?.as_ref());
    let xh = newton_kleinman(xs, f.as_ref(), g.as_ref(), q.as_ref(), opts.newton_steps, true)?;
    let (res, scale) = are_residual(xh.as_ref(), f.as_ref(), g.as_ref(), q.as_ref());
    let riccati_residual = res / scale.max(f64::MIN_POSITIVE);

    let closed = &f + &g * &xh;
    let worst = dense::eigenvalues(closed.as_ref())?.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
    if worst >= 0.0 {
        warnings.push(format!("closed loop F + GX has spectral abscissa {worst:.3e}; solution may not be minimal"));
    }

    if opts.cross_check {
        let x0 = &xh + Mat::<f64>::identity(n2, n2) * (1e-3 * max_abs(xh.as_ref()));
        let xi = newton_kleinman(x0, f.as_ref(), g.as_ref(), q.as_ref(), 40, false)?;
        let d = max_abs((&xi - &xh).as_ref()) / max_abs(xh.as_ref()).max(f64::MIN_POSITIVE);
        if d > 1e-6 {
            warnings.push(format!("Newton run from a perturbed start ended {d:.2e} away from the sign-function solution"));
        }
    }

    // X = L⁻ᵀ X̂ Lᵀ, so XᵀEp = L X̂ Lᵀ
    let lt = h.l.transpose().to_owned();
    let x = dense::lower_t_solve(h.l.as_ref(), (&xh * &lt).as_ref());
    let xev = dense::sym_eigenvalues(xh.as_ref())?;
    let margin = xev.first().copied().unwrap_or(0.0) / xev.last().copied().unwrap_or(1.0).abs().max(f64::MIN_POSITIVE);
    if margin < -KYP_PSD_SLACK {
        return Err(Error::InvalidModel(format!("X- is indefinite (margin {margin:.3e})")));
    }
    if margin <= 1e-12 {
        // ill-conditioned but PSD; positivity is then required of the projected Er
        warnings.push(format!("X- is numerically singular (margin {margin:.3e}); reduced E is certified instead"));
    }
    let ordering = min_eig_sym((Mat::<f64>::identity(n2, n2) - &xh).as_ref())?;
    let kr = kyp_residual(p, x.as_ref())?;
    Ok(KypSolution {
        x,
        residual_min_eig: kr.min_eig_rel,
        riccati_residual,
        kind: KypKind::Minimal,
        margin,
        ordering,
        warnings,
    })
}

/// We with X·V̄2 in place of V̄2 in its first column block.
pub fn reduction_matrix_minus(sys: &StaircaseSystem, v2bar: MatRef<'_, f64>, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let sse = build_transformations(&assemble_operator_blocks(sys))?;
    let top = x * v2bar;
    Ok(reduction_matrices_with(&sse, v2bar, top.as_ref())?.0)
}

/// Reducer using the KYP left basis, with the X₋ used.
pub fn kyp_minus_reducer<'a>(sys: &'a StaircaseSystem, interp: InterpolationOptions, opts: &KypOptions) -> Result<(Reducer<'a>, KypSolution)> {
    let red = Reducer::new(sys, interp)?;
    let sol = minimal_kyp_solution(&red.proper, opts)?;
    let x = sol.x.clone();
    Ok((red.with_x_minus(x), sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{generate_staircase, Category, GeneratorSpec};
    use crate::rosenbrock::extract_proper;
    use crate::staircase::{mat_from_rows, BlockDims};
    use crate::linalg::SparseMatrix;

    fn scalar(e: f64, a: f64, g: f64, pp: f64, s: f64) -> StaircaseSystem {
        StaircaseSystem::new(
            BlockDims::new(0, 1, 0, 0, 1),
            SparseMatrix::zeros(0, 0),
            SparseMatrix::from_dense(mat_from_rows(&[&[e]]).as_ref()),
            SparseMatrix::zeros(1, 1),
            SparseMatrix::from_dense(mat_from_rows(&[&[a]]).as_ref()),
            SparseMatrix::from_dense(mat_from_rows(&[&[g]]).as_ref()),
            SparseMatrix::from_dense(mat_from_rows(&[&[pp]]).as_ref()),
            mat_from_rows(&[&[s]]),
            mat_from_rows(&[&[0.0]]),
        )
        .unwrap()
    }

    /// Smallest X on a fine grid with 4adX − (c − Xb)² ≥ 0, refined by bisection.
    fn grid_minimal(a: f64, b: f64, c: f64, d: f64) -> f64 {
        let feas = |x: f64| 4.0 * a * d * x - (c - x * b).powi(2) >= 0.0;
        let grid: Vec<f64> = (1..=200_000).map(|k| k as f64 * 1e-5).collect();
        let k = grid.iter().position(|&x| feas(x)).unwrap();
        let (mut lo, mut hi) = (grid[k] - 1e-5, grid[k]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feas(mid) {
                hi = mid
            } else {
                lo = mid
            }
        }
        hi
    }

    #[test]
    fn scalar_minimal_matches_grid() {
        // Ep = 1, Ap = −a, Bp = g − p, Cp = g + p, Dp = s
        let (a, g, pp, s) = (0.8, 1.0, 0.3, 0.5);
        let sys = scalar(1.0, a, g, pp, s);
        let p = extract_proper(&sys).unwrap();
        let sol = minimal_kyp_solution(&p, &KypOptions::default()).unwrap();
        let oracle = grid_minimal(a, g - pp, g + pp, s);
        assert!((sol.x[(0, 0)] - oracle).abs() <= 1e-6 * oracle, "{} vs {}", sol.x[(0, 0)], oracle);
        assert!(sol.ordering >= -1e-8);
        assert!(sol.riccati_residual <= 1e-8);
        assert!(sol.residual_min_eig >= -1e-8);
    }

    #[test]
    fn identity_is_feasible_and_unobservable_detected() {
        for (k, c) in Category::ALL.into_iter().enumerate() {
            let sys = generate_staircase(&GeneratorSpec::with_size(c, 30, 2, 40 + k as u64)).unwrap();
            let p = extract_proper(&sys).unwrap();
            let r = kyp_residual(&p, Mat::identity(p.n2(), p.n2()).as_ref()).unwrap();
            assert!(r.min_eig_rel >= -1e-10, "{c}: {}", r.min_eig_rel);
        }
        let sys = scalar(1.0, 0.8, 0.0, 0.0, 0.5);
        assert!(!check_behavioural_observability(&extract_proper(&sys).unwrap()).unwrap());
    }

    #[test]
    fn minimal_solution_on_random_systems() {
        for (k, c) in Category::ALL.into_iter().enumerate() {
            let sys = generate_staircase(&GeneratorSpec::with_size(c, 24, 2, 60 + k as u64)).unwrap();
            let p = extract_proper(&sys).unwrap();
            let sol = minimal_kyp_solution(&p, &KypOptions::default()).unwrap();
            assert!(sol.riccati_residual <= 1e-8, "{c}: {}", sol.riccati_residual);
            assert!(sol.residual_min_eig >= -1e-8, "{c}: {}", sol.residual_min_eig);
            assert!(sol.ordering >= -1e-8, "{c}: {}", sol.ordering);
            assert!(sol.warnings.is_empty(), "{c}: {:?}", sol.warnings);
        }
    }

    #[test]
    fn singular_x_minus_still_reduces() {
        let sys = generate_staircase(&GeneratorSpec::with_size(Category::Index0, 24, 1, 0)).unwrap();
        let (red, sol) = kyp_minus_reducer(&sys, InterpolationOptions::default(), &KypOptions::default()).unwrap();
        assert!(sol.margin <= 1e-12 && sol.margin >= -KYP_PSD_SLACK);
        assert!(sol.warnings.iter().any(|w| w.contains("numerically singular")));
        let data = crate::interpolation::InterpolationData::imaginary_axis(4, 1, 0.1, 10.0).unwrap();
        let (rom, _, parts) = red.interpolate(&data, "fixed").unwrap();
        assert!(min_eig_sym(parts.er.as_ref()).unwrap() > 0.0);
        assert!(crate::staircase::validate_staircase(&rom.system, &Default::default()).unwrap().is_valid());
    }

    #[test]
    fn identity_x_gives_standard_we() {
        let sys = generate_staircase(&GeneratorSpec::with_size(Category::ImproperIndex12, 30, 2, 3)).unwrap();
        let v2bar = Mat::from_fn(sys.dims().n2, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        let a = reduction_matrix_minus(&sys, v2bar.as_ref(), Mat::identity(sys.dims().n2, sys.dims().n2).as_ref()).unwrap();
        let b = crate::interpolation::reduction_matrices(&sys, v2bar.as_ref()).unwrap().0;
        assert_eq!(a, b);
    }
}
