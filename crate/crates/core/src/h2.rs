//! IRKA-PH fixed-point iteration and TRKSM-PH greedy adaptive interpolation.

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::{
    InterpolationData, InterpolationOptions, IterationRecord, Provenance, ReducedModel, ReducedParts, Reducer,
    TangentialBasis,
};
use crate::linalg::dense;
use crate::rosenbrock::ProperSubsystem;
use crate::staircase::StaircaseSystem;

/// Left eigenpair of the reduced proper pencil with its residue direction.
#[derive(Clone, Debug)]
pub struct LeftEigen {
    pub lambda: c64,
    /// tᵀ(λĒ − Ā) = 0, unit norm
    pub t: Vec<c64>,
    /// (Ḡ − P̄)ᵀ t
    pub r: Vec<c64>,
}

/// Left eigenpairs of λĒ − Ā (conjugate-closed) plus warnings.
pub fn reduced_left_eigen(parts: &ReducedParts, eig_tol: f64) -> Result<(Vec<LeftEigen>, Vec<String>)> {
    let k = parts.r_prime();
    let mut warnings = Vec::new();
    if k == 0 {
        return Ok((Vec::new(), warnings));
    }
    let a = parts.a();
    // Ēᵀ = Ē, so left eigenvectors are eigenvectors of Ē⁻¹Āᵀ
    let m = dense::solve(parts.er.as_ref(), a.transpose()).map_err(|e| Error::Eigen(format!("reduced E: {e}")))?;
    let (vals, vecs) = dense::eigen(m.as_ref())?;
    let scale = vals.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let bt = parts.b().transpose().to_owned();

    let mut out = Vec::with_capacity(k);
    let mut n_upper = 0usize;
    let mut n_lower = 0usize;
    for (i, &lam) in vals.iter().enumerate() {
        let real = lam.im.abs() <= 1e-12 * scale;
        if !real && lam.im < 0.0 {
            n_lower += 1;
            continue;
        }
        let mut t: Vec<c64> = (0..k).map(|j| vecs[(j, i)]).collect();
        if real {
            // rotate to a real vector
            let big = t.iter().copied().max_by(|x, y| x.norm().total_cmp(&y.norm())).unwrap_or(c64::new(1.0, 0.0));
            let ph = big.conj() / big.norm().max(f64::MIN_POSITIVE);
            t = t.iter().map(|v| c64::new((v * ph).re, 0.0)).collect();
        } else {
            n_upper += 1;
        }
        let nrm = t.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !(nrm > 0.0) {
            return Err(Error::Eigen("zero eigenvector".into()));
        }
        t.iter_mut().for_each(|v| *v /= nrm);
        let lam = if real { c64::new(lam.re, 0.0) } else { lam };
        let r: Vec<c64> = (0..bt.nrows()).map(|p| (0..k).map(|j| t[j] * bt[(p, j)]).sum()).collect();
        if real {
            out.push(LeftEigen { lambda: lam, t, r });
        } else {
            let tc = t.iter().map(|v| v.conj()).collect();
            let rc = r.iter().map(|v| v.conj()).collect();
            out.push(LeftEigen { lambda: lam, t, r });
            out.push(LeftEigen { lambda: lam.conj(), t: tc, r: rc });
        }
    }
    if n_upper != n_lower || out.len() != k {
        return Err(Error::Eigen("eigenvalues of the real reduced pencil are not conjugate-closed".into()));
    }

    let en = dense::norm2(parts.er.as_ref());
    let an = dense::norm2(a.as_ref());
    let mut worst = 0.0f64;
    for p in &out {
        let res: f64 = (0..k)
            .map(|j| {
                (0..k)
                    .map(|i| p.t[i] * (p.lambda * parts.er[(i, j)] - a[(i, j)]))
                    .sum::<c64>()
                    .norm_sqr()
            })
            .sum::<f64>()
            .sqrt();
        worst = worst.max(res / (p.lambda.norm() * en + an));
        if p.lambda.re > 1e-10 * scale {
            return Err(Error::Consistency(format!("reduced eigenvalue {} lies in the open right half plane", p.lambda)));
        }
    }
    if worst > 1e-10 {
        warnings.push(format!("left eigenvector residual {worst:.2e} exceeds 1e-10 (ill-conditioned reduced pencil)"));
    }
    let mut gap = f64::INFINITY;
    for i in 0..out.len() {
        for j in i + 1..out.len() {
            gap = gap.min((out[i].lambda - out[j].lambda).norm());
        }
    }
    if gap <= eig_tol * scale {
        warnings.push(format!("reduced eigenvalues cluster (min gap {gap:.2e}); multiplicity suspected"));
    }
    Ok((out, warnings))
}

/// Hausdorff distance of two shift sets relative to their largest modulus;
/// infinite if the sizes differ.
pub fn shift_distance(a: &[c64], b: &[c64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    if a.is_empty() {
        return 0.0;
    }
    let d = |x: &[c64], y: &[c64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0f64, f64::max)
    };
    let scale = a.iter().chain(b).map(|v| v.norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    d(a, b).max(d(b, a)) / scale
}

/// Largest sine of the angle between directions of nearest-matched shifts.
pub fn direction_distance(a: &InterpolationData, b: &InterpolationData) -> f64 {
    if a.r() != b.r() {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for (i, s) in a.shifts.iter().enumerate() {
        let j = (0..b.r())
            .min_by(|&p, &q| (b.shifts[p] - s).norm().total_cmp(&(b.shifts[q] - s).norm()))
            .unwrap_or(0);
        let (x, y) = (&a.directions[i], &b.directions[j]);
        let ip: c64 = x.iter().zip(y).map(|(u, v)| u.conj() * v).sum();
        let nx: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let ny: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        let c2 = (ip.norm_sqr() / (nx * ny)).min(1.0);
        worst = worst.max((1.0 - c2).max(0.0).sqrt());
    }
    worst
}

/// σᵢ = −λᵢ, bᵢ = rᵢ/‖rᵢ‖.
pub fn mirrored_data(eig: &[LeftEigen], m: usize, warnings: &mut Vec<String>) -> Result<InterpolationData> {
    let mut s = Vec::with_capacity(eig.len());
    let mut b = Vec::with_capacity(eig.len());
    for p in eig {
        let nr = p.r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let dir = if nr > 1e-14 {
            p.r.iter().map(|v| v / nr).collect()
        } else {
            push_unique(warnings, format!("residue direction vanishes at eigenvalue {}; using e1", p.lambda));
            (0..m).map(|i| c64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0)).collect()
        };
        s.push(-p.lambda);
        b.push(dir);
    }
    InterpolationData::new(s, b)
}

fn push_unique(w: &mut Vec<String>, msg: String) {
    if !w.contains(&msg) {
        w.push(msg);
    }
}

/// Builds the basis, nudging shifts that hit the FOM spectrum by +eig_tol
/// in the real part.
pub fn basis_with_perturbation(
    red: &Reducer<'_>,
    mut data: InterpolationData,
    eig_tol: f64,
    warnings: &mut Vec<String>,
) -> Result<(TangentialBasis, InterpolationData)> {
    for _ in 0..8 {
        match red.basis(&data) {
            Ok(b) => return Ok((b, data)),
            Err(e) => {
                let Error::ShiftSingular { re, im } = *e.root() else {
                    return Err(e);
                };
                let bad = c64::new(re, im);
                let mut hit = false;
                for s in data.shifts.iter_mut() {
                    if (*s - bad).norm() <= 1e-12 * bad.norm().max(1.0) || (*s - bad.conj()).norm() <= 1e-12 * bad.norm().max(1.0) {
                        s.re += eig_tol * s.norm().max(1.0);
                        hit = true;
                    }
                }
                if !hit {
                    return Err(e);
                }
                push_unique(warnings, format!("shift {bad} collides with the FOM spectrum; real part perturbed by {eig_tol:e}"));
                data = InterpolationData::new(data.shifts, data.directions)?;
            }
        }
    }
    Err(Error::NotConverged("could not move shifts off the FOM spectrum".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrkaOptions {
    pub max_iter: usize,
    /// on the combined shift/direction change
    pub shift_tol: f64,
    pub eig_tol: f64,
    /// refill the shift set from the initial data when the basis loses rank
    pub restart: bool,
    pub interp: InterpolationOptions,
}

impl Default for IrkaOptions {
    fn default() -> Self {
        Self { max_iter: 100, shift_tol: 1e-6, eig_tol: 1e-8, restart: true, interp: InterpolationOptions::default() }
    }
}

impl IrkaOptions {
    pub fn check(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.shift_tol > 0.0) || !(self.eig_tol > 0.0) {
            return Err(Error::InvalidInput("IRKA needs max_iter >= 1 and positive tolerances".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationHistory {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl IterationHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn irka_ph(sys: &StaircaseSystem, init: &InterpolationData, opts: &IrkaOptions) -> Result<(ReducedModel, IterationHistory)> {
    let red = Reducer::new(sys, opts.interp)?;
    irka_with(&red, init, opts)
}

fn refill(next: InterpolationData, init: &InterpolationData, target: usize) -> Result<InterpolationData> {
    let mut s = next.shifts;
    let mut b = next.directions;
    for g in init.groups()? {
        let idx: Vec<usize> = match g {
            crate::interpolation::ShiftGroup::Real(i) => vec![i],
            crate::interpolation::ShiftGroup::Pair(i, j) => vec![i, j],
        };
        if s.len() + idx.len() > target {
            continue;
        }
        let cand = init.shifts[idx[0]];
        if s.iter().any(|x| (*x - cand).norm() <= 1e-8 * cand.norm().max(1.0)) {
            continue;
        }
        for i in idx {
            s.push(init.shifts[i]);
            b.push(init.directions[i].clone());
        }
    }
    InterpolationData::new(s, b)
}

/// IRKA-PH on a prepared reducer (optionally with the KYP left basis).
pub fn irka_with(red: &Reducer<'_>, init: &InterpolationData, opts: &IrkaOptions) -> Result<(ReducedModel, IterationHistory)> {
    opts.check()?;
    let mut data = init.clone();
    let mut hist = IterationHistory::default();
    let mut warnings = Vec::new();
    let mut best: Option<(f64, InterpolationData, ReducedParts)> = None;
    let mut last: Option<(InterpolationData, ReducedParts)> = None;
    for it in 1..=opts.max_iter {
        let (basis, used) = basis_with_perturbation(red, data, opts.eig_tol, &mut warnings)?;
        data = used;
        for w in &basis.warnings {
            push_unique(&mut warnings, w.clone());
        }
        let parts = red.reduce(basis.v2bar.as_ref())?;
        let (eig, w) = reduced_left_eigen(&parts, opts.eig_tol)?;
        for w in w {
            push_unique(&mut warnings, w);
        }
        let mut next = mirrored_data(&eig, data.m(), &mut warnings)?;
        if opts.restart && next.r() < data.r() {
            next = refill(next, init, data.r())?;
        }
        let change = shift_distance(&data.shifts, &next.shifts);
        let dchange = direction_distance(&data, &next);
        hist.records.push(IterationRecord {
            iteration: it,
            shifts: data.as_pairs(),
            directions: data.directions_as_pairs(),
            change,
            direction_change: Some(dchange),
            residual: None,
            r_prime: Some(parts.r_prime()),
        });
        let score = change.max(dchange);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, data.clone(), parts.clone()));
        }
        if score < opts.shift_tol {
            hist.converged = true;
            last = Some((data.clone(), parts));
            break;
        }
        data = next;
    }
    let (data, parts) = match last {
        Some(x) => x,
        None => {
            let (score, d, p) = best.ok_or_else(|| Error::NotConverged("no IRKA iterate".into()))?;
            warnings.push(format!("IRKA did not converge in {} iterations; best iterate has change {score:.3e}", opts.max_iter));
            (d, p)
        }
    };
    let mut prov = Provenance::new(if red.x_minus.is_some() { "irka-kyp-minus" } else { "irka" }, &data);
    prov.kyp_minus = red.x_minus.is_some();
    prov.converged = Some(hist.converged);
    prov.history = hist.records.clone();
    prov.warnings = warnings;
    prov.warnings.extend(parts.warnings.iter().cloned());
    let rom = red.assemble(&parts, prov)?;
    Ok((rom, hist))
}

/// Precomputed pieces of ζ(μ) = (ApV̄2 − μEpV̄2)(Ā − μĒ)⁻¹B̄ − Bp.
pub struct ZetaOperator<'p> {
    apv: Mat<f64>,
    epv: Mat<f64>,
    bp: &'p Mat<f64>,
    a: Mat<f64>,
    e: Mat<f64>,
    b: Mat<f64>,
}

impl<'p> ZetaOperator<'p> {
    pub fn new(proper: &'p ProperSubsystem, v2bar: MatRef<'_, f64>, parts: &ReducedParts) -> Result<Self> {
        if v2bar.nrows() != proper.n2() || v2bar.ncols() != parts.r_prime() {
            return Err(Error::Dimension("V2bar does not match proper subsystem and reduced parts".into()));
        }
        Ok(Self {
            apv: proper.ap.apply(v2bar)?,
            epv: proper.ep.mul_dense(v2bar),
            bp: &proper.bp,
            a: parts.a(),
            e: parts.er.clone(),
            b: parts.b(),
        })
    }

    pub fn eval(&self, mu: c64) -> Result<Mat<c64>> {
        let k = self.a.nrows();
        let red = Mat::from_fn(k, k, |i, j| c64::new(self.a[(i, j)], 0.0) - mu * self.e[(i, j)]);
        let y = dense::solve_c(red.as_ref(), dense::to_c(self.b.as_ref()).as_ref())
            .map_err(|_| Error::ShiftSingular { re: mu.re, im: mu.im })?;
        let n2 = self.apv.nrows();
        let lhs = Mat::from_fn(n2, k, |i, j| c64::new(self.apv[(i, j)], 0.0) - mu * self.epv[(i, j)]);
        Ok(&lhs * &y - dense::to_c(self.bp.as_ref()))
    }
}

pub fn residual_zeta(proper: &ProperSubsystem, v2bar: MatRef<'_, f64>, parts: &ReducedParts, mu: c64) -> Result<Mat<c64>> {
    ZetaOperator::new(proper, v2bar, parts)?.eval(mu)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionPolicy {
    /// base set only
    Fixed,
    /// base set plus mirrored Ritz values, recomputed every iteration
    RitzUpdate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionSpec {
    /// base candidates; conjugates are implied
    pub candidates: Vec<c64>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub policy: RegionPolicy,
}

impl RegionSpec {
    pub fn imaginary_axis(omega_min: f64, omega_max: f64, count: usize) -> Result<Self> {
        if !(omega_min > 0.0 && omega_max > omega_min) || count == 0 {
            return Err(Error::InvalidInput("need 0 < omega_min < omega_max and count > 0".into()));
        }
        let candidates = log_grid(omega_min, omega_max, count).into_iter().map(|w| c64::new(0.0, w)).collect();
        Ok(Self { candidates, omega_min, omega_max, policy: RegionPolicy::RitzUpdate })
    }

    pub fn check(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::InvalidInput("empty candidate set".into()));
        }
        if self.candidates.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite candidate".into()));
        }
        if !(self.omega_min > 0.0 && self.omega_max > self.omega_min) {
            return Err(Error::InvalidInput("need 0 < omega_min < omega_max".into()));
        }
        Ok(())
    }
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo * hi).sqrt()];
    }
    (0..n).map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrksmOptions {
    pub r_max: usize,
    /// relative change of the reduced sigma curve between consecutive ROMs
    pub tol: f64,
    pub probe_points: usize,
    pub interp: InterpolationOptions,
}

impl TrksmOptions {
    pub fn new(r_max: usize) -> Self {
        Self { r_max, tol: 1e-4, probe_points: 100, interp: InterpolationOptions::default() }
    }
}

fn sigma_curve(parts: &ReducedParts, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&w| Ok(dense::norm2_c(parts.proper_transfer(c64::new(0.0, w))?.as_ref())))
        .collect()
}

fn curve_change(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().copied().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max) / scale
}

pub fn trksm_ph(
    sys: &StaircaseSystem,
    init: &InterpolationData,
    region: &RegionSpec,
    opts: &TrksmOptions,
) -> Result<(ReducedModel, IterationHistory)> {
    region.check()?;
    if opts.r_max <= init.r() {
        return Err(Error::InvalidInput(format!("r_max = {} must exceed the initial r = {}", opts.r_max, init.r())));
    }
    let red = Reducer::new(sys, opts.interp)?;
    let bp_norm = dense::norm2(red.proper.bp.as_ref()).max(f64::MIN_POSITIVE);
    let probe = log_grid(region.omega_min, region.omega_max, opts.probe_points.max(2));
    let mut data = init.clone();
    let mut hist = IterationHistory::default();
    let mut warnings = Vec::new();
    let mut prev_curve: Option<Vec<f64>> = None;
    let mut prev_rp = 0usize;
    let mut it = 0;
    let (data, parts) = loop {
        it += 1;
        let (basis, used) = basis_with_perturbation(&red, data, 1e-8, &mut warnings)?;
        data = used;
        for w in &basis.warnings {
            push_unique(&mut warnings, w.clone());
        }
        let parts = red.reduce(basis.v2bar.as_ref())?;
        if parts.r_prime() <= prev_rp {
            push_unique(&mut warnings, format!("basis did not grow at r = {} (dependent column dropped)", data.r()));
        }
        prev_rp = parts.r_prime();
        let curve = sigma_curve(&parts, &probe)?;
        let change = prev_curve.as_ref().map(|p| curve_change(p, &curve)).unwrap_or(f64::INFINITY);
        let mut record = IterationRecord {
            iteration: it,
            shifts: data.as_pairs(),
            directions: data.directions_as_pairs(),
            change,
            direction_change: None,
            residual: None,
            r_prime: Some(parts.r_prime()),
        };
        if change < opts.tol {
            hist.converged = true;
            hist.records.push(record);
            break (data, parts);
        }
        prev_curve = Some(curve);
        if data.r() >= opts.r_max {
            hist.records.push(record);
            break (data, parts);
        }

        // candidate set: base region plus mirrored Ritz values, upper half plane
        let mut cands: Vec<c64> = region.candidates.iter().map(|c| if c.im < 0.0 { c.conj() } else { *c }).collect();
        if region.policy == RegionPolicy::RitzUpdate {
            for lam in dense::eigenvalues(dense::solve(parts.er.as_ref(), parts.a().as_ref())?.as_ref())? {
                if lam.re < 0.0 {
                    let mu = -lam;
                    cands.push(if mu.im < 0.0 { mu.conj() } else { mu });
                }
            }
        }
        let room = opts.r_max - data.r();
        cands.retain(|c| {
            let fresh = data.shifts.iter().all(|s| (*s - c).norm() > 1e-10 * c.norm().max(1.0));
            fresh && (room >= 2 || c.im == 0.0)
        });
        if cands.is_empty() {
            push_unique(&mut warnings, "candidate set exhausted".into());
            hist.records.push(record);
            break (data, parts);
        }
        let zeta = ZetaOperator::new(&red.proper, basis.v2bar.as_ref(), &parts)?;
        let norms: Vec<f64> = cands
            .par_iter()
            .map(|&mu| zeta.eval(mu).map(|z| dense::norm2_c(z.as_ref())).unwrap_or(f64::NAN))
            .collect();
        let (kbest, zmax) = norms
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
            .ok_or_else(|| Error::NotConverged("no candidate with a nonsingular reduced resolvent".into()))?;
        record.residual = Some(zmax);
        hist.records.push(record);
        if zmax <= 1e-12 * bp_norm {
            break (data, parts);
        }
        let mu = cands[kbest];
        let (_, dir) = dense::dominant_right_singular(zeta.eval(mu)?.as_ref())?;
        let dir: Vec<c64> = if mu.im == 0.0 {
            // real shift needs a real direction: take the dominant real singular vector
            let z = zeta.eval(mu)?;
            let zr = dense::vstack(&[dense::re(z.as_ref()).as_ref(), dense::im(z.as_ref()).as_ref()]);
            let (_, d) = dense::dominant_right_singular(dense::to_c(zr.as_ref()).as_ref())?;
            d.iter().map(|v| c64::new(v.re, 0.0)).collect()
        } else {
            dir
        };
        let mut s = data.shifts.clone();
        let mut b = data.directions.clone();
        s.push(mu);
        b.push(dir.clone());
        if mu.im != 0.0 {
            s.push(mu.conj());
            b.push(dir.iter().map(|v| v.conj()).collect());
        }
        data = InterpolationData::new(s, b)?;
    };
    let mut prov = Provenance::new("trksm", &data);
    prov.converged = Some(hist.converged);
    prov.history = hist.records.clone();
    prov.warnings = warnings;
    let rom = red.assemble(&parts, prov)?;
    Ok((rom, hist))
}
