//! IHA-PH: interpolation-preserving feedthrough perturbations tuned on a
//! sampled H∞ objective.

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{sampled_hinf, GridSpec, HinfEstimate, TransferEvaluator};
use crate::error::{Error, Result};
use crate::h2::{basis_with_perturbation, irka_with, log_grid, IrkaOptions};
use crate::interpolation::{InterpolationData, InterpolationOptions, Provenance, ReducedModel, ReducedParts, Reducer};
use crate::linalg::dense::{self, max_abs};
use crate::staircase::StaircaseSystem;

/// Row-wise fill of the strictly upper triangle.
pub fn vtsu(theta: &[f64], m: usize) -> Result<Mat<f64>> {
    if theta.len() != m * m.saturating_sub(1) / 2 {
        return Err(Error::InvalidInput(format!("theta_N has length {}, expected {}", theta.len(), m * m.saturating_sub(1) / 2)));
    }
    let mut out = Mat::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in i + 1..m {
            out[(i, j)] = theta[k];
            k += 1;
        }
    }
    Ok(out)
}

/// Row-wise fill of the upper triangle including the diagonal.
pub fn vtu(theta: &[f64], m: usize) -> Result<Mat<f64>> {
    if theta.len() != m * (m + 1) / 2 {
        return Err(Error::InvalidInput(format!("theta_S has length {}, expected {}", theta.len(), m * (m + 1) / 2)));
    }
    let mut out = Mat::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in i..m {
            out[(i, j)] = theta[k];
            k += 1;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationParams {
    pub theta_n: Vec<f64>,
    pub theta_s: Vec<f64>,
}

impl PerturbationParams {
    pub fn zeros(m: usize) -> Self {
        Self { theta_n: vec![0.0; m * m.saturating_sub(1) / 2], theta_s: vec![0.0; m * (m + 1) / 2] }
    }

    /// θ = [θ_N; θ_S] of length m².
    pub fn from_flat(theta: &[f64], m: usize) -> Result<Self> {
        if theta.len() != m * m {
            return Err(Error::InvalidInput(format!("theta has length {}, expected {}", theta.len(), m * m)));
        }
        let k = m * m.saturating_sub(1) / 2;
        Ok(Self { theta_n: theta[..k].to_vec(), theta_s: theta[k..].to_vec() })
    }

    pub fn flat(&self) -> Vec<f64> {
        self.theta_n.iter().chain(&self.theta_s).copied().collect()
    }

    pub fn m(&self) -> usize {
        // m(m+1)/2 = len(θ_S)
        let l = self.theta_s.len();
        ((((8 * l + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize
    }

    /// Δ_N = vtsu(θ_N)ᵀ − vtsu(θ_N)
    pub fn delta_n(&self) -> Result<Mat<f64>> {
        let u = vtsu(&self.theta_n, self.m())?;
        Ok(u.transpose() - &u)
    }

    /// Δ_S = vtu(θ_S)ᵀ vtu(θ_S)
    pub fn delta_s(&self) -> Result<Mat<f64>> {
        let u = vtu(&self.theta_s, self.m())?;
        Ok(u.transpose() * &u)
    }

    pub fn is_zero(&self) -> bool {
        self.theta_n.iter().chain(&self.theta_s).all(|v| *v == 0.0)
    }
}

/// F with FᵀV̄2 = B_tan·Tv, and K = V̄2ᵀF.
#[derive(Clone, Debug)]
pub struct InterpolationCertificate {
    pub f: Mat<f64>,
    pub k: Mat<f64>,
    pub tv: Mat<f64>,
    pub shifts: Vec<[f64; 2]>,
    pub directions: Vec<Vec<[f64; 2]>>,
    /// ‖FᵀV̄2 − B_tan·Tv‖ relative
    pub residual: f64,
    /// ‖FᵀV2 − B_tan‖ relative, with V2 the raw basis block
    pub v2_residual: f64,
}

pub fn build_certificate(v2: MatRef<'_, f64>, v2bar: MatRef<'_, f64>, tv: MatRef<'_, f64>, data: &InterpolationData) -> Result<InterpolationCertificate> {
    let b = data.realified_directions()?;
    if b.ncols() != tv.nrows() || v2.ncols() != tv.nrows() || v2bar.ncols() != tv.ncols() || v2.nrows() != v2bar.nrows() {
        return Err(Error::Dimension("certificate inputs have inconsistent shapes".into()));
    }
    let rhs = &b * tv;
    let f = v2bar * rhs.transpose();
    let scale = max_abs(rhs.as_ref()).max(f64::MIN_POSITIVE);
    let residual = max_abs((f.transpose() * v2bar - &rhs).as_ref()) / scale;
    if residual > 1e-10 {
        return Err(Error::InvalidInput(format!("certificate residual {residual:.3e}: V2bar is not orthonormal")));
    }
    let v2_residual = max_abs((f.transpose() * v2 - &b).as_ref()) / max_abs(b.as_ref()).max(f64::MIN_POSITIVE);
    let k = v2bar.transpose() * &f;
    Ok(InterpolationCertificate {
        f,
        k,
        tv: tv.to_owned(),
        shifts: data.as_pairs(),
        directions: data.directions_as_pairs(),
        residual,
        v2_residual,
    })
}

/// Adds [K; −I]Δ_N[K; −I]ᵀ to the structure part and [K; −I]Δ_S[K; −I]ᵀ to
/// the dissipation part of the reduced system matrix.
pub fn perturb_rom(parts: &ReducedParts, cert: &InterpolationCertificate, theta: &PerturbationParams) -> Result<ReducedParts> {
    let m = parts.m();
    if cert.k.nrows() != parts.r_prime() || cert.k.ncols() != m || theta.m() != m {
        return Err(Error::Dimension("perturbation does not match the reduced parts".into()));
    }
    let mut out = parts.clone();
    if theta.is_zero() {
        return Ok(out);
    }
    let dn = theta.delta_n()?;
    let ds = theta.delta_s()?;
    let k = &cert.k;
    let kdn = k * &dn;
    let kds = k * &ds;
    out.j = &parts.j - &kdn * k.transpose();
    out.g = &parts.g + &kdn;
    out.n = &parts.n + &dn;
    out.r = dense::sym((&parts.r + &kds * k.transpose()).as_ref());
    out.p = &parts.p - &kds;
    out.s = dense::sym((&parts.s + &ds).as_ref());
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    pub ftol: f64,
    pub xtol: f64,
    /// initial simplex edge; 0 picks a scale from the reduced feedthrough
    pub step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 400, ftol: 1e-10, xtol: 1e-8, step: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Standard Nelder–Mead (reflection 1, expansion 2, contraction ½, shrink ½).
pub fn nelder_mead(f: &mut dyn FnMut(&[f64]) -> Result<f64>, x0: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadResult> {
    let n = x0.len();
    let f0 = f(x0)?;
    if n == 0 {
        return Ok(NelderMeadResult { x: Vec::new(), f: f0, evaluations: 1, converged: true });
    }
    let step = if opts.step > 0.0 { opts.step } else { 0.1 };
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    let mut evals = 1;
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x)?;
        evals += 1;
        simplex.push((x, fx));
    }
    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (fb, fw) = (simplex[0].1, simplex[n].1);
        let spread = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max))
            .fold(0.0f64, f64::max);
        if (fw - fb).abs() <= opts.ftol * fb.abs().max(1e-300) && spread <= opts.xtol * (1.0 + max_norm(&simplex[0].0)) {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|p| p.0[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (simplex[n].0[k] - centroid[k])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr)?;
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe)?;
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(-0.5);
                let v = f(&x)?;
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x)?;
                (x, v)
            };
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = p.0.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    let v = f(&x)?;
                    *p = (x, v);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    Ok(NelderMeadResult { x, f: fx, evaluations: evals, converged })
}

fn max_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Where IHA takes its interpolation data from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum IhaBase {
    Fixed,
    Irka(IrkaOptions),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IhaOptions {
    pub grid: GridSpec,
    pub optimizer: NelderMeadOptions,
    pub base: IhaBase,
    pub interp: InterpolationOptions,
}

impl Default for IhaOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            optimizer: NelderMeadOptions::default(),
            base: IhaBase::Irka(IrkaOptions::default()),
            interp: InterpolationOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IhaOutcome {
    pub theta: PerturbationParams,
    pub objective_initial: f64,
    pub objective_final: f64,
    pub evaluations: usize,
    pub stagnated: bool,
    /// refined estimate for the final ROM
    pub hinf: HinfEstimate,
}

/// Sampled H∞ objective on a fixed grid with cached FOM values.
pub struct IhaObjective<'a> {
    grid: Vec<f64>,
    fom: Vec<Mat<c64>>,
    parts: &'a ReducedParts,
    cert: &'a InterpolationCertificate,
}

impl<'a> IhaObjective<'a> {
    pub fn new(fom: &TransferEvaluator, parts: &'a ReducedParts, cert: &'a InterpolationCertificate, grid: &GridSpec) -> Result<Self> {
        let w = log_grid(grid.omega_min, grid.omega_max, grid.points.max(2));
        let dinf = dense::to_c(parts.dinf.as_ref());
        let vals = w
            .par_iter()
            .map(|&om| {
                let s = c64::new(0.0, om);
                Ok(fom.eval(s)? - Mat::from_fn(dinf.nrows(), dinf.ncols(), |i, j| dinf[(i, j)] * s))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: w, fom: vals, parts, cert })
    }

    pub fn eval(&self, theta: &PerturbationParams) -> Result<f64> {
        let p = perturb_rom(self.parts, self.cert, theta)?;
        let v = self
            .grid
            .par_iter()
            .zip(&self.fom)
            .map(|(&w, h)| Ok(dense::norm2_c((h - p.proper_transfer(c64::new(0.0, w))?).as_ref())))
            .collect::<Result<Vec<f64>>>()?;
        Ok(v.into_iter().fold(0.0f64, f64::max))
    }
}

pub fn iha_ph(sys: &StaircaseSystem, data: &InterpolationData, theta0: Option<&[f64]>, opts: &IhaOptions) -> Result<(ReducedModel, IhaOutcome)> {
    let red = Reducer::new(sys, opts.interp)?;
    let mut warnings = Vec::new();
    let data = match opts.base {
        IhaBase::Fixed => data.clone(),
        IhaBase::Irka(io) => {
            let (rom, _) = irka_with(&red, data, &io)?;
            warnings.extend(rom.provenance.warnings.iter().cloned());
            let shifts = rom.provenance.shifts.iter().map(|p| c64::new(p[0], p[1])).collect();
            let dirs = rom.provenance.directions.iter().map(|d| d.iter().map(|p| c64::new(p[0], p[1])).collect()).collect();
            InterpolationData::new(shifts, dirs)?
        }
    };
    let (basis, data) = basis_with_perturbation(&red, data, 1e-8, &mut warnings)?;
    let parts = red.reduce(basis.v2bar.as_ref())?;
    let v2 = basis.v_block(2).to_owned();
    let cert = build_certificate(v2.as_ref(), basis.v2bar.as_ref(), basis.tv.as_ref(), &data)?;
    let m = sys.m();
    let x0 = match theta0 {
        Some(t) => PerturbationParams::from_flat(t, m)?.flat(),
        None => vec![0.0; m * m],
    };
    let fom = TransferEvaluator::new(sys)?;
    let obj = IhaObjective::new(&fom, &parts, &cert, &opts.grid)?;
    let mut nm = opts.optimizer;
    if nm.step <= 0.0 {
        nm.step = 0.25 * (dense::norm2(parts.s.as_ref()) + dense::norm2(parts.n.as_ref())).sqrt().max(1e-3);
    }
    let mut objective = |x: &[f64]| obj.eval(&PerturbationParams::from_flat(x, m)?);
    let f_init = objective(&x0)?;
    let res = nelder_mead(&mut objective, &x0, &nm)?;
    let (theta, f_final) = if res.f <= f_init { (res.x, res.f) } else { (x0, f_init) };
    let theta = PerturbationParams::from_flat(&theta, m)?;
    if !res.converged {
        warnings.push(format!("optimizer stopped after {} evaluations without meeting its tolerances", res.evaluations));
    }
    let tuned = perturb_rom(&parts, &cert, &theta)?;

    let mut prov = Provenance::new("iha", &data);
    prov.theta = theta.flat();
    prov.objective = Some(f_final);
    prov.warnings = warnings;
    prov.warnings.extend(basis.warnings.iter().cloned());
    let mut rom = red.assemble(&tuned, prov)?;
    let mm = crate::analysis::polynomial_mismatch(&red.proper, &crate::rosenbrock::extract_proper(&rom.system)?);
    rom.provenance.h2_unbounded = mm.dp_mismatch || mm.dinf_mismatch;
    let rom_ev = TransferEvaluator::new(&rom.system)?;
    let f = |w: f64| -> Result<f64> {
        let s = c64::new(0.0, w);
        Ok(dense::norm2_c((fom.eval(s)? - rom_ev.eval(s)?).as_ref()))
    };
    let hinf = sampled_hinf(&f, &opts.grid)?;
    let outcome = IhaOutcome {
        theta,
        objective_initial: f_init,
        objective_final: f_final,
        evaluations: res.evaluations + 1,
        stagnated: !res.converged,
        hinf,
    };
    Ok((rom, outcome))
}
